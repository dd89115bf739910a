#pragma once

#include <array>
#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "error.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace nhknot {

using Real4 = std::array<double, 4>;
using Real44 = std::array<Real4, 4>;
/// Per basis (x, y, z) four populations |0,up>, |0,down>, |-1,up>, |-1,down>.
using BasisPopulations = std::array<Real4, 3>;

struct PlCalibration {
  Real4 N{1.0, 0.85, 0.7, 0.75};
};

/// Rows: no flip, pi24, pi13, pi13 then pi34.
inline Real44 flip_matrix(const PlCalibration& cal) {
  const auto& n = cal.N;
  return {Real4{n[0], n[1], n[2], n[3]}, Real4{n[0], n[3], n[2], n[1]}, Real4{n[2], n[1], n[0], n[3]},
          Real4{n[3], n[1], n[0], n[2]}};
}

namespace detail {
/// Gaussian elimination with partial pivoting on a dense n x n system.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, std::size_t n, double rel_tol,
                                       ErrorKind kind) {
  double scale = 0.0;
  for (double x : a) scale = std::max(scale, std::abs(x));
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    if (std::abs(a[piv * n + c]) <= rel_tol * scale) throw Error(kind, "singular linear system");
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[c * n + j], a[piv * n + j]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      if (f == 0.0) continue;
      for (std::size_t j = c; j < n; ++j) a[r * n + j] -= f * a[c * n + j];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
    x[i] = s / a[i * n + i];
  }
  return x;
}
}  // namespace detail

/// 1-norm condition number of the flip matrix.
inline double flip_condition(const PlCalibration& cal) {
  const Real44 a = flip_matrix(cal);
  std::vector<double> flat(16);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) flat[i * 4 + j] = a[i][j];
  double norm_a = 0.0, norm_inv = 0.0;
  for (int j = 0; j < 4; ++j) {
    double col = 0.0;
    for (int i = 0; i < 4; ++i) col += std::abs(a[i][j]);
    norm_a = std::max(norm_a, col);
    std::vector<double> e(4, 0.0);
    e[j] = 1.0;
    const auto x = detail::solve_dense(flat, e, 4, 1e-12, ErrorKind::SingularCalibration);
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    norm_inv = std::max(norm_inv, s);
  }
  return norm_a * norm_inv;
}

enum class Basis { X = 0, Y = 1, Z = 2 };

/// Electron rotation U with U sigma_z U^dag = sigma_b.
inline Matrix2C basis_rotation(Basis b) {
  const double s = 1.0 / std::sqrt(2.0);
  switch (b) {
    case Basis::X: return make2(s, -s, s, s);
    case Basis::Y: return make2(s, Complex(0.0, s), Complex(0.0, s), s);
    default: return Matrix2C::identity();
  }
}

/// Readout populations after the nuclear pi/2 mapping |-> -> |up>, |+> -> |down>,
/// with the electron first rotated by U^dag.
inline Real4 readout_populations(const Vec4& psi, const Matrix2C& u = Matrix2C::identity()) {
  const Matrix4C rot = kron(u.adjoint(), pauli_i());
  const Vec4 v = rot * psi;
  const double s = 1.0 / std::sqrt(2.0);
  // <-| = (1, i)/sqrt2 and <+| = (i, 1)/sqrt2 on the nuclear index
  Real4 p{};
  for (int e = 0; e < 2; ++e) {
    const Complex up = s * (v[2 * e] + kI * v[2 * e + 1]);
    const Complex dn = s * (kI * v[2 * e] + v[2 * e + 1]);
    p[2 * e] = std::norm(up);
    p[2 * e + 1] = std::norm(dn);
  }
  const double tot = p[0] + p[1] + p[2] + p[3];
  if (tot > 0.0)
    for (auto& x : p) x /= tot;
  return p;
}

/// Expected PL rates for the four flip sequences; shots == 0 returns them noiselessly,
/// otherwise rates are Poisson(shots * expected) / shots.
template <typename Rng>
Real4 simulate_pl_rates(const Real4& pops, const PlCalibration& cal, long shots, Rng& rng) {
  const Real44 a = flip_matrix(cal);
  Real4 rates{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) rates[i] += a[i][j] * pops[j];
  if (shots <= 0) return rates;
  for (auto& r : rates) {
    std::poisson_distribution<long long> dist(std::max(r, 0.0) * static_cast<double>(shots));
    r = static_cast<double>(dist(rng)) / static_cast<double>(shots);
  }
  return rates;
}

inline Real4 simulate_pl_rates(const Real4& pops, const PlCalibration& cal) {
  std::mt19937_64 unused(0);
  return simulate_pl_rates(pops, cal, 0, unused);
}

inline Real4 solve_populations(const Real4& rates, const PlCalibration& cal) {
  const Real44 a = flip_matrix(cal);
  std::vector<double> flat(16);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) flat[i * 4 + j] = a[i][j];
  const auto x = detail::solve_dense(flat, {rates.begin(), rates.end()}, 4, 1e-12, ErrorKind::SingularCalibration);
  return {x[0], x[1], x[2], x[3]};
}

struct PopulationSet {
  BasisPopulations P{};
  std::array<double, 3> bloch{};  ///< unit vector of the fit; equals r_b(P) wherever P1 + P3 > 0
  double constraint_residual = 0.0;
  double stationarity = 0.0;  ///< norm of the tangent gradient at the solution
  int iterations = 0;
};

/// Renormalized Bloch component in the |up> subspace: (P1 - P3) / (P1 + P3).
inline double bloch_component(const Real4& p) {
  const double s = p[0] + p[2];
  if (s <= 1e-12) throw Error(ErrorKind::EmptySubspace, "no population in the |up> subspace");
  return (p[0] - p[2]) / s;
}

struct MleOptions {
  std::optional<std::array<double, 12>> weights;  ///< inverse variances; unweighted when empty
  int max_iterations = 5000;
};

namespace detail {

struct BasisFit {
  Real4 x{};
  double cost = 0.0;
  double slope = 0.0;  ///< d cost / d r_b
};

/// Closest (weighted) populations with a fixed Bloch component r: x1 = s(1+r)/2, x3 = s(1-r)/2,
/// (s, x2, x4) on the unit simplex. Exact active-set enumeration over the three variables.
inline BasisFit fit_basis(const Real4& a, const Real4& w, double r) {
  const double c1 = 0.5 * (1.0 + r), c3 = 0.5 * (1.0 - r);
  const double amp = w[0] * c1 * c1 + w[2] * c3 * c3;
  const std::array<double, 3> d{amp, w[1], w[3]};
  const std::array<double, 3> t{(w[0] * c1 * a[0] + w[2] * c3 * a[2]) / amp, a[1], a[3]};
  std::array<double, 3> y{};
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 1; mask < 8; ++mask) {
    double num = -1.0, den = 0.0;
    for (int i = 0; i < 3; ++i)
      if (mask >> i & 1) {
        num += t[i];
        den += 1.0 / d[i];
      }
    const double nu = num / den;
    std::array<double, 3> cand{};
    bool ok = true;
    for (int i = 0; i < 3 && ok; ++i) {
      const double v = t[i] - nu / d[i];
      if (mask >> i & 1) {
        if (v < -1e-15) ok = false;
        cand[i] = std::max(v, 0.0);
      } else if (v > 1e-15) {
        ok = false;
      }
    }
    if (!ok) continue;
    double cost = 0.0;
    for (int i = 0; i < 3; ++i) cost += d[i] * (cand[i] - t[i]) * (cand[i] - t[i]);
    if (cost < best) {
      best = cost;
      y = cand;
    }
  }
  BasisFit f;
  f.x = {y[0] * c1, y[1], y[0] * c3, y[2]};
  for (int i = 0; i < 4; ++i) f.cost += w[i] * (f.x[i] - a[i]) * (f.x[i] - a[i]);
  f.slope = y[0] * (w[0] * (f.x[0] - a[0]) - w[2] * (f.x[2] - a[2]));
  return f;
}

}  // namespace detail

/// Least-squares projection of raw populations onto the feasible set: per-basis
/// normalization, nonnegativity and sum_b r_b^2 = 1. Each basis is solved exactly for a
/// given unit Bloch vector; the vector itself follows projected gradient descent on the sphere.
inline PopulationSet mle_reconstruct(const BasisPopulations& raw, const MleOptions& opt = {}) {
  std::array<Real4, 3> w{};
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 4; ++i) {
      if (!std::isfinite(raw[b][i])) throw Error(ErrorKind::NoConvergence, "non-finite raw population");
      w[b][i] = opt.weights ? (*opt.weights)[4 * b + i] : 1.0;
      if (!(w[b][i] > 0.0)) throw Error(ErrorKind::InvalidConfig, "MLE weights must be positive");
    }
  using V3 = std::array<double, 3>;
  auto unit = [](V3 v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    for (double& c : v) c /= n;
    return v;
  };
  auto eval = [&](const V3& r, std::array<detail::BasisFit, 3>& fits) {
    double c = 0.0;
    for (int b = 0; b < 3; ++b) {
      fits[b] = detail::fit_basis(raw[b], w[b], r[b]);
      c += fits[b].cost;
    }
    return c;
  };
  auto tangent = [](const std::array<detail::BasisFit, 3>& fits, const V3& r) {
    V3 g{fits[0].slope, fits[1].slope, fits[2].slope};
    const double gr = g[0] * r[0] + g[1] * r[1] + g[2] * r[2];
    for (int b = 0; b < 3; ++b) g[b] -= gr * r[b];
    return g;
  };

  // starts: the clipped raw components and the six poles
  std::vector<V3> starts;
  V3 r0{};
  for (int b = 0; b < 3; ++b) {
    const double s = raw[b][0] + raw[b][2];
    r0[b] = s > 1e-12 ? std::clamp((raw[b][0] - raw[b][2]) / s, -1.0, 1.0) : 0.0;
  }
  if (r0[0] * r0[0] + r0[1] * r0[1] + r0[2] * r0[2] > 1e-24) starts.push_back(unit(r0));
  for (int b = 0; b < 3; ++b)
    for (double sg : {1.0, -1.0}) {
      V3 e{};
      e[b] = sg;
      starts.push_back(e);
    }

  PopulationSet out;
  double best = std::numeric_limits<double>::infinity();
  for (const V3& start : starts) {
    V3 r = start;
    std::array<detail::BasisFit, 3> fits{};
    double cost = eval(r, fits);
    V3 g = tangent(fits, r);
    double step = 1.0;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
      const double gn = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
      if (gn <= 1e-13) break;
      // backtracking along the geodesic retraction
      bool moved = false;
      for (int ls = 0; ls < 80; ++ls) {
        V3 cand{};
        for (int b = 0; b < 3; ++b) cand[b] = r[b] - step * g[b];
        cand = unit(cand);
        std::array<detail::BasisFit, 3> cf{};
        const double cc = eval(cand, cf);
        if (cc <= cost - 1e-4 * step * gn * gn) {
          moved = cc < cost;
          r = cand;
          fits = cf;
          cost = cc;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      g = tangent(fits, r);
      step = std::min(4.0 * step, 1e3);
    }
    out.iterations += it;
    if (cost < best) {
      best = cost;
      out.bloch = r;
      for (int b = 0; b < 3; ++b) out.P[b] = fits[b].x;
      const V3 gt = tangent(fits, r);
      out.stationarity = std::sqrt(gt[0] * gt[0] + gt[1] * gt[1] + gt[2] * gt[2]);
    }
  }
  double res = std::abs(out.bloch[0] * out.bloch[0] + out.bloch[1] * out.bloch[1] + out.bloch[2] * out.bloch[2] - 1.0);
  for (int b = 0; b < 3; ++b)
    res = std::max(res, std::abs(out.P[b][0] + out.P[b][1] + out.P[b][2] + out.P[b][3] - 1.0));
  out.constraint_residual = res;
  return out;
}

struct ReconstructedState {
  std::array<double, 3> bloch{};
  Matrix2C rho;
  double fidelity = 0.0;
  std::array<double, 3> std{};
  double fidelity_std = 0.0;
};

inline Matrix2C density_from_bloch(const std::array<double, 3>& r) {
  return Complex(0.5) * (pauli_i() + Complex(r[0]) * pauli_x() + Complex(r[1]) * pauli_y() + Complex(r[2]) * pauli_z());
}

inline double state_fidelity(const Matrix2C& rho, const Vec2& target) {
  const Vec2 t = normalized(target);
  return std::real(inner(t, rho * t));
}

inline ReconstructedState reconstruct_state(const BasisPopulations& p, const Vec2& target) {
  ReconstructedState s;
  for (int b = 0; b < 3; ++b) s.bloch[b] = bloch_component(p[b]);
  s.rho = density_from_bloch(s.bloch);
  s.fidelity = state_fidelity(s.rho, target);
  return s;
}

inline ReconstructedState reconstruct_state(const PopulationSet& fit, const Vec2& target) {
  ReconstructedState s;
  s.bloch = fit.bloch;
  s.rho = density_from_bloch(s.bloch);
  s.fidelity = state_fidelity(s.rho, target);
  return s;
}

struct TomographySettings {
  PlCalibration cal;
  long shots = 0;
  MleOptions mle;
};

/// One noisy pass of simulate -> solve -> MLE -> reconstruct.
template <typename Rng>
ReconstructedState measure_and_reconstruct(const BasisPopulations& truth, const Vec2& target,
                                           const TomographySettings& s, Rng& rng) {
  BasisPopulations raw{};
  for (int b = 0; b < 3; ++b) raw[b] = solve_populations(simulate_pl_rates(truth[b], s.cal, s.shots, rng), s.cal);
  return reconstruct_state(mle_reconstruct(raw, s.mle), target);
}

struct MonteCarloSummary {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};
  double fidelity_mean = 0.0;
  double fidelity_std = 0.0;
  std::vector<double> fidelities;
  int failures = 0;
};

inline MonteCarloSummary monte_carlo_errors(const BasisPopulations& truth, const Vec2& target,
                                            const TomographySettings& s, int trials, std::uint64_t seed,
                                            unsigned workers = 0) {
  if (trials < 2) throw Error(ErrorKind::InvalidConfig, "monte carlo needs at least two trials");
  std::vector<std::optional<ReconstructedState>> res(trials);
  parallel_for(
      trials,
      [&](std::size_t t) {
        auto rng = counter_rng(seed, 0x4d43, t);
        try {
          res[t] = measure_and_reconstruct(truth, target, s, rng);
        } catch (const Error&) {
          res[t].reset();
        }
      },
      workers);
  MonteCarloSummary m;
  std::array<double, 4> sum{}, sq{};
  int good = 0;
  for (const auto& r : res) {
    if (!r) {
      ++m.failures;
      continue;
    }
    ++good;
    for (int b = 0; b < 3; ++b) sum[b] += r->bloch[b];
    sum[3] += r->fidelity;
    m.fidelities.push_back(r->fidelity);
  }
  if (good < 2) throw Error(ErrorKind::NoConvergence, "too few successful Monte Carlo trials");
  for (int q = 0; q < 4; ++q) sum[q] /= good;
  for (const auto& r : res) {
    if (!r) continue;
    for (int b = 0; b < 3; ++b) sq[b] += (r->bloch[b] - sum[b]) * (r->bloch[b] - sum[b]);
    sq[3] += (r->fidelity - sum[3]) * (r->fidelity - sum[3]);
  }
  for (int b = 0; b < 3; ++b) {
    m.mean[b] = sum[b];
    m.std[b] = std::sqrt(sq[b] / (good - 1));
  }
  m.fidelity_mean = sum[3];
  m.fidelity_std = std::sqrt(sq[3] / (good - 1));
  return m;
}

}  // namespace nhknot
