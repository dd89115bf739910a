#pragma once

#include "nhknot/error.hpp"
#include "nhknot/numerics.hpp"
#include "nhknot/model.hpp"
#include "nhknot/io.hpp"
#include "nhknot/dilation.hpp"
#include "nhknot/dynamics.hpp"
#include "nhknot/tomography.hpp"
#include "nhknot/topology.hpp"
#include "nhknot/learn.hpp"
#include "nhknot/pipeline.hpp"
