#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "error.hpp"
#include "io.hpp"
#include "model.hpp"
#include "numerics.hpp"

namespace nhknot {

/// R(t) = (1 + eta0^2) e^{-i He^dag t} e^{i He t}, the solution of i dR/dt = He^dag R - R He.
inline Matrix2C r_of_t(const Matrix2C& he, double eta0, double t) {
  const Matrix2C b = expm2(Complex(0.0, t) * he);  // e^{i He t}
  return Complex(1.0 + eta0 * eta0) * (b.adjoint() * b);
}

/// dR/dt = -i (He^dag R - R He)
inline Matrix2C r_dot(const Matrix2C& he, const Matrix2C& r) {
  return Complex(0.0, -1.0) * (he.adjoint() * r - r * he);
}

/// Smallest eigenvalue of R - I.
inline double r_margin(const Matrix2C& r) {
  Matrix2C a = r;
  a(0, 0) -= 1.0;
  a(1, 1) -= 1.0;
  return eigh2(a).values[0];
}

inline constexpr double kPositivityTolerance = 1e-10;

/// First time at which min eig(R - I) drops to `floor`; +inf if it stays above up to t_max.
inline double time_to_margin(const Matrix2C& he, double eta0, double floor, double t_max, int scan = 2000) {
  auto f = [&](double t) { return r_margin(r_of_t(he, eta0, t)) - floor; };
  if (f(0.0) <= 0.0) return 0.0;
  const double h = t_max / scan;
  double lo = 0.0;
  for (int i = 1; i <= scan; ++i) {
    const double t = h * i;
    if (f(t) <= 0.0) {
      double a = lo, b = t;
      for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, b); ++it) {
        const double m = 0.5 * (a + b);
        (f(m) > 0.0 ? a : b) = m;
      }
      return a;
    }
    lo = t;
  }
  return std::numeric_limits<double>::infinity();
}

/// Positivity horizon: last time with min eig(R - I) > 1e-10.
inline double positivity_horizon(const Matrix2C& he, double eta0, double t_max) {
  return time_to_margin(he, eta0, kPositivityTolerance, t_max);
}

struct DilationState {
  double t = 0.0;
  Matrix2C R, eta, eta_dot;
};

inline DilationState eta_of_t(const Matrix2C& he, double eta0, double t) {
  DilationState s;
  s.t = t;
  s.R = r_of_t(he, eta0, t);
  Matrix2C a = s.R;
  a(0, 0) -= 1.0;
  a(1, 1) -= 1.0;
  if (eigh2(a).values[0] <= kPositivityTolerance) {
    const double horizon = positivity_horizon(he, eta0, std::max(t, 1e-9));
    throw TimedError(ErrorKind::PositivityLost, "R - I lost positivity; horizon t* = " + format_number(horizon),
                     horizon);
  }
  s.eta = herm_sqrt_psd(a);
  s.eta_dot = sylvester_sym(s.eta, r_dot(he, s.R));
  return s;
}

struct DilatedHamiltonian {
  Matrix2C Q, P;
  Matrix4C H;
};

template <std::size_t N>
double hermiticity_defect(const SquareMatrix<N>& m) {
  return (m - m.adjoint()).norm();
}

/// Q and P from a precomputed dilation state; checked Hermitian then symmetrized.
/// The 4x4 assembly is skipped when `assemble` is false.
inline DilatedHamiltonian dilated_hamiltonian(const Matrix2C& he, const DilationState& s, bool assemble = true) {
  const Matrix2C& eta = s.eta;
  const Matrix2C rinv = inverse(s.R);
  const Matrix2C ieta_dot = kI * s.eta_dot;
  DilatedHamiltonian d;
  d.Q = kI * ((he * eta - eta * he - ieta_dot) * rinv);
  d.P = (he + (ieta_dot + eta * he) * eta) * rinv;
  const double scale = std::max(1.0, std::max(d.Q.norm(), d.P.norm()));
  if (hermiticity_defect(d.Q) > 1e-9 * scale || hermiticity_defect(d.P) > 1e-9 * scale)
    throw Error(ErrorKind::NonHermitian, "dilated Q or P is not Hermitian");
  d.Q = Complex(0.5) * (d.Q + d.Q.adjoint());
  d.P = Complex(0.5) * (d.P + d.P.adjoint());
  if (assemble) d.H = kron(d.Q, pauli_z()) + kron(d.P, pauli_i());
  return d;
}

inline DilatedHamiltonian dilated_hamiltonian(const Matrix2C& he, double eta0, double t, bool assemble = true) {
  return dilated_hamiltonian(he, eta_of_t(he, eta0, t), assemble);
}

struct PauliCoefficients {
  std::array<double, 4> X{};  ///< coefficients of sigma_i (x) I
  std::array<double, 4> Y{};  ///< coefficients of sigma_i (x) sigma_z
};

inline PauliCoefficients pauli_coefficients(const Matrix4C& hen) {
  PauliCoefficients c;
  Matrix4C rebuilt;
  for (int i = 0; i < 4; ++i) {
    const Matrix4C bx = kron(pauli(i), pauli_i());
    const Matrix4C by = kron(pauli(i), pauli_z());
    c.X[i] = std::real((hen * bx).trace()) / 4.0;
    c.Y[i] = std::real((hen * by).trace()) / 4.0;
    rebuilt += Complex(c.X[i]) * bx + Complex(c.Y[i]) * by;
  }
  if ((hen - rebuilt).norm() > 1e-8 * std::max(1.0, hen.norm()))
    throw Error(ErrorKind::UnsupportedStructure, "Hamiltonian has weight outside {I,sx,sy,sz} x {I,sz}");
  return c;
}

struct MicrowaveControls {
  double Omega1 = 0.0, Omega2 = 0.0;
  double delta1 = 0.0, delta2 = 0.0;
  double phi1 = 0.0, phi2 = 0.0;
};

namespace detail {
inline double channel_phase(double re, double im) {
  if (re == 0.0 && im == 0.0) return 0.0;
  double phi = -std::atan2(im, re);
  if (phi <= -kPi) phi += 2.0 * kPi;
  return phi;
}
}  // namespace detail

inline MicrowaveControls pulse_parameters(const PauliCoefficients& c) {
  const auto& X = c.X;
  const auto& Y = c.Y;
  MicrowaveControls m;
  const double a1 = X[1] + Y[1], b1 = X[2] + Y[2];
  const double a2 = X[1] - Y[1], b2 = X[2] - Y[2];
  m.Omega1 = std::hypot(a1, b1) / kPi;
  m.Omega2 = std::hypot(a2, b2) / kPi;
  m.delta1 = 2.0 * (X[3] + Y[3]);
  m.delta2 = 2.0 * (X[3] - Y[3]);
  m.phi1 = detail::channel_phase(a1, b1);
  m.phi2 = detail::channel_phase(a2, b2);
  return m;
}

struct PulseSample {
  double t = 0.0;
  PauliCoefficients c;
  MicrowaveControls mw;
};

struct PulseSchedule {
  TwisterParams p;
  double k = 0.0, gamma = 1.0, eta0 = 1.0, dt = 0.0;
  std::vector<PulseSample> samples;
};

/// Schedule for an explicit (already scaled) target He.
inline std::vector<PulseSample> pulse_samples(const Matrix2C& he, double eta0, double t_end, double dt) {
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw Error(ErrorKind::InvalidConfig, "dt must be positive and t_end >= 0");
  const long n = std::lround(t_end / dt);
  const double horizon = positivity_horizon(he, eta0, t_end);
  if (horizon < n * dt)
    throw TimedError(ErrorKind::PositivityLost, "schedule exceeds positivity horizon t* = " + format_number(horizon),
                     horizon);
  std::vector<PulseSample> out;
  out.reserve(n + 1);
  for (long i = 0; i <= n; ++i) {
    PulseSample s;
    s.t = i * dt;
    s.c = pauli_coefficients(dilated_hamiltonian(he, eta0, s.t).H);
    s.mw = pulse_parameters(s.c);
    out.push_back(s);
  }
  return out;
}

inline PulseSchedule pulse_schedule(const TwisterParams& p, double k, double gamma, double eta0, double t_end,
                                    double dt) {
  PulseSchedule s{p, k, gamma, eta0, dt, {}};
  s.samples = pulse_samples(Complex(gamma) * hamiltonian(p, k), eta0, t_end, dt);
  return s;
}

inline void write_schedule_csv(std::ostream& os, const std::vector<PulseSample>& samples) {
  os << "t,X0,X1,X2,X3,Y0,Y1,Y2,Y3,Omega1,Omega2,delta1,delta2,phi1,phi2\n";
  for (const auto& s : samples) {
    CsvRow row(os);
    row << s.t;
    for (double x : s.c.X) row << x;
    for (double y : s.c.Y) row << y;
    row << s.mw.Omega1 << s.mw.Omega2 << s.mw.delta1 << s.mw.delta2 << s.mw.phi1 << s.mw.phi2;
  }
}

}  // namespace nhknot
