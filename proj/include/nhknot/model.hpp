#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "error.hpp"
#include "numerics.hpp"

namespace nhknot {

/// Twister model parameters.
struct TwisterParams {
  double m1 = 0.0;
  double m2 = 0.6;
};

inline void check_momentum(double k) {
  if (!std::isfinite(k)) throw Error(ErrorKind::InvalidMomentum, "momentum must be finite");
}

/// Uniform momentum grid k_n = 2 pi n / N, n = 1..N.
inline std::vector<double> momentum_grid(int n_points) {
  if (n_points < 2) throw Error(ErrorKind::InvalidMomentum, "grid needs at least two points");
  std::vector<double> k(n_points);
  for (int n = 1; n <= n_points; ++n) k[n - 1] = 2.0 * kPi * n / n_points;
  return k;
}

/// Default m1 rule of the sweep: m1(l) = 0.4106 + 4 l / pi^4.
inline double sweep_m1(int l, double offset = 0.4106, double step = 4.0 / (kPi * kPi * kPi * kPi)) {
  return offset + step * l;
}

/// Ordered set of m1 values at fixed m2.
struct SweepLine {
  double m2 = 0.6;
  std::vector<double> m1;
};

inline SweepLine make_sweep(double m2, std::vector<double> m1) {
  for (std::size_t i = 1; i < m1.size(); ++i)
    if (!(m1[i] > m1[i - 1])) throw Error(ErrorKind::InvalidSweep, "m1 values must be strictly increasing");
  return SweepLine{m2, std::move(m1)};
}

inline SweepLine default_sweep(int n_samples = 37, double m2 = 0.6) {
  std::vector<double> m1(n_samples);
  for (int l = 1; l <= n_samples; ++l) m1[l - 1] = sweep_m1(l);
  return make_sweep(m2, std::move(m1));
}

/// H(k) = [[i m1, m2 e^{ik} + e^{2ik}], [m2 + 1, -i m1]]
inline Matrix2C hamiltonian(const TwisterParams& p, double k) {
  check_momentum(k);
  const Complex z = std::polar(1.0, k);
  const Complex z2 = std::polar(1.0, 2.0 * k);
  return make2(Complex(0.0, p.m1), p.m2 * z + z2, p.m2 + 1.0, Complex(0.0, -p.m1));
}

using DVector = std::array<Complex, 3>;

/// Pauli decomposition H = d . sigma (H is traceless).
inline DVector d_vector(const TwisterParams& p, double k) {
  check_momentum(k);
  const Complex a = p.m2 * std::polar(1.0, k) + std::polar(1.0, 2.0 * k);
  const Complex b = p.m2 + 1.0;
  return {0.5 * (a + b), kI * 0.5 * (a - b), Complex(0.0, p.m1)};
}

/// Pauli coefficients of an arbitrary 2x2 traceless part.
inline DVector pauli_vector(const Matrix2C& h) {
  return {0.5 * (h(0, 1) + h(1, 0)), 0.5 * kI * (h(0, 1) - h(1, 0)), 0.5 * (h(0, 0) - h(1, 1))};
}

inline Complex dot(const DVector& x, const DVector& y) { return x[0] * y[0] + x[1] * y[1] + x[2] * y[2]; }

/// d.d = -m1^2 + (m2 + 1)(m2 e^{ik} + e^{2ik})
inline Complex discriminant(const TwisterParams& p, double k) {
  check_momentum(k);
  return -p.m1 * p.m1 + (p.m2 + 1.0) * (p.m2 * std::polar(1.0, k) + std::polar(1.0, 2.0 * k));
}

/// Right/left eigenvectors with <L_n|R_m> = delta_nm. Band 1 has the larger Im E.
struct BiorthEigensystem {
  std::array<Complex, 2> E;
  std::array<Vec2, 2> R;
  std::array<Vec2, 2> L;
};

inline constexpr double kEpTolerance = 1e-12;
inline constexpr double kTieTolerance = 1e-12;

/// Left vectors from the inverse of the right-eigenvector matrix.
inline std::array<Vec2, 2> left_vectors(const Vec2& r1, const Vec2& r2) {
  const Matrix2C inv = inverse(make2(r1[0], r2[0], r1[1], r2[1]));
  return {Vec2{std::conj(inv(0, 0)), std::conj(inv(0, 1))}, Vec2{std::conj(inv(1, 0)), std::conj(inv(1, 1))}};
}

/// Swaps band labels in place.
inline void swap_bands(BiorthEigensystem& es) {
  std::swap(es.E[0], es.E[1]);
  std::swap(es.R[0], es.R[1]);
  std::swap(es.L[0], es.L[1]);
}

inline BiorthEigensystem biorth_eigensystem(const Matrix2C& h) {
  const Complex hh = 0.5 * (h(0, 0) - h(1, 1));
  const Complex disc = hh * hh + h(0, 1) * h(1, 0);
  if (std::abs(disc) <= kEpTolerance) throw Error(ErrorKind::ExceptionalPoint, "|d.d| below tolerance");
  const auto e = eig2(h, 0.0);
  BiorthEigensystem es;
  es.E = e.values;
  es.R = e.vectors;
  es.L = left_vectors(es.R[0], es.R[1]);
  const double dim = std::imag(es.E[0]) - std::imag(es.E[1]);
  const bool swap = std::abs(dim) > kTieTolerance ? dim < 0.0 : std::real(es.E[0]) < std::real(es.E[1]);
  if (swap) swap_bands(es);
  return es;
}

inline BiorthEigensystem biorth_eigensystem(const TwisterParams& p, double k) {
  return biorth_eigensystem(hamiltonian(p, k));
}

/// Biorthogonal system assembled from two measured right vectors; E_n = <L_n|H|R_n>.
inline BiorthEigensystem biorth_from_right(const Vec2& r1, const Vec2& r2, const Matrix2C& h) {
  BiorthEigensystem es;
  es.R = {normalized(r1), normalized(r2)};
  es.L = left_vectors(es.R[0], es.R[1]);
  for (int n = 0; n < 2; ++n) es.E[n] = inner(es.L[n], h * es.R[n]);
  return es;
}

/// True when the two eigenvalues share the same imaginary part within tolerance.
inline bool real_spectrum_tie(const BiorthEigensystem& es, double tol = 1e-9) {
  return std::abs(std::imag(es.E[0]) - std::imag(es.E[1])) <= tol;
}

/// Bloch vector (<sx>, <sy>, <sz>) of a normalized right eigenvector.
inline std::array<double, 3> bloch_vector(const Vec2& v) {
  const Vec2 u = normalized(v);
  const Complex c = std::conj(u[0]) * u[1];
  return {2.0 * std::real(c), 2.0 * std::imag(c), std::norm(u[0]) - std::norm(u[1])};
}

/// Pure state with the given Bloch vector (renormalized to the unit sphere).
inline Vec2 state_from_bloch(const std::array<double, 3>& r) {
  const double n = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  if (n == 0.0) return Vec2{1.0, 0.0};
  const double z = std::clamp(r[2] / n, -1.0, 1.0);
  const double theta = std::acos(z);
  const double phi = std::atan2(r[1], r[0]);
  return Vec2{std::cos(theta / 2.0), std::polar(std::sin(theta / 2.0), phi)};
}

/// Projection of a (possibly non-normalized) state onto a biorthogonal basis.
inline std::array<Complex, 2> biorth_components(const BiorthEigensystem& es, const Vec2& psi) {
  return {inner(es.L[0], psi), inner(es.L[1], psi)};
}

}  // namespace nhknot
