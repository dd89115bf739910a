#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <type_traits>
#include <vector>

#include "error.hpp"

namespace nhknot {

using Complex = std::complex<double>;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr Complex kI{0.0, 1.0};

template <std::size_t N>
using Vec = std::array<Complex, N>;
using Vec2 = Vec<2>;
using Vec4 = Vec<4>;

/// Fixed-size dense complex matrix, row-major.
template <std::size_t N>
struct SquareMatrix {
  std::array<Complex, N * N> a{};

  Complex& operator()(std::size_t i, std::size_t j) { return a[i * N + j]; }
  const Complex& operator()(std::size_t i, std::size_t j) const { return a[i * N + j]; }

  static SquareMatrix identity() {
    SquareMatrix m;
    for (std::size_t i = 0; i < N; ++i) m(i, i) = 1.0;
    return m;
  }

  SquareMatrix adjoint() const {
    SquareMatrix m;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) m(i, j) = std::conj((*this)(j, i));
    return m;
  }

  Complex trace() const {
    Complex t = 0.0;
    for (std::size_t i = 0; i < N; ++i) t += (*this)(i, i);
    return t;
  }

  /// Frobenius norm.
  double norm() const {
    double s = 0.0;
    for (const auto& x : a) s += std::norm(x);
    return std::sqrt(s);
  }

  SquareMatrix& operator+=(const SquareMatrix& o) {
    for (std::size_t i = 0; i < N * N; ++i) a[i] += o.a[i];
    return *this;
  }
  SquareMatrix& operator-=(const SquareMatrix& o) {
    for (std::size_t i = 0; i < N * N; ++i) a[i] -= o.a[i];
    return *this;
  }
  SquareMatrix& operator*=(Complex s) {
    for (auto& x : a) x *= s;
    return *this;
  }
};

using Matrix2C = SquareMatrix<2>;
using Matrix4C = SquareMatrix<4>;

template <std::size_t N>
SquareMatrix<N> operator+(SquareMatrix<N> x, const SquareMatrix<N>& y) { return x += y; }
template <std::size_t N>
SquareMatrix<N> operator-(SquareMatrix<N> x, const SquareMatrix<N>& y) { return x -= y; }
template <std::size_t N>
SquareMatrix<N> operator-(SquareMatrix<N> x) { return x *= -1.0; }
template <std::size_t N>
SquareMatrix<N> operator*(Complex s, SquareMatrix<N> x) { return x *= s; }
template <std::size_t N>
SquareMatrix<N> operator*(SquareMatrix<N> x, Complex s) { return x *= s; }

template <std::size_t N>
SquareMatrix<N> operator*(const SquareMatrix<N>& x, const SquareMatrix<N>& y) {
  SquareMatrix<N> r;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < N; ++k) {
      const Complex xik = x(i, k);
      for (std::size_t j = 0; j < N; ++j) r(i, j) += xik * y(k, j);
    }
  return r;
}

template <std::size_t N>
Vec<N> operator*(const SquareMatrix<N>& x, const Vec<N>& v) {
  Vec<N> r{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) r[i] += x(i, j) * v[j];
  return r;
}

template <std::size_t N>
Vec<N> operator*(Complex s, Vec<N> v) {
  for (auto& x : v) x *= s;
  return v;
}

template <std::size_t N>
Vec<N> operator+(Vec<N> x, const Vec<N>& y) {
  for (std::size_t i = 0; i < N; ++i) x[i] += y[i];
  return x;
}

template <std::size_t N>
Vec<N> operator-(Vec<N> x, const Vec<N>& y) {
  for (std::size_t i = 0; i < N; ++i) x[i] -= y[i];
  return x;
}

/// <a|b>, conjugate-linear in the first argument.
template <std::size_t N>
Complex inner(const Vec<N>& x, const Vec<N>& y) {
  Complex s = 0.0;
  for (std::size_t i = 0; i < N; ++i) s += std::conj(x[i]) * y[i];
  return s;
}

template <std::size_t N>
double norm(const Vec<N>& x) {
  return std::sqrt(std::real(inner(x, x)));
}

template <std::size_t N>
Vec<N> normalized(const Vec<N>& x) {
  const double n = norm(x);
  if (n == 0.0) return x;
  return Complex(1.0 / n) * x;
}

/// |<a|b>|^2 / (|a|^2 |b|^2)
template <std::size_t N>
double fidelity(const Vec<N>& x, const Vec<N>& y) {
  const double nx = std::real(inner(x, x));
  const double ny = std::real(inner(y, y));
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return std::norm(inner(x, y)) / (nx * ny);
}

template <std::size_t N>
SquareMatrix<N> outer(const Vec<N>& x, const Vec<N>& y) {
  SquareMatrix<N> m;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) m(i, j) = x[i] * std::conj(y[j]);
  return m;
}

inline Matrix2C make2(Complex a, Complex b, Complex c, Complex d) {
  Matrix2C m;
  m(0, 0) = a;
  m(0, 1) = b;
  m(1, 0) = c;
  m(1, 1) = d;
  return m;
}

inline Matrix2C pauli_i() { return Matrix2C::identity(); }
inline Matrix2C pauli_x() { return make2(0.0, 1.0, 1.0, 0.0); }
inline Matrix2C pauli_y() { return make2(0.0, -kI, kI, 0.0); }
inline Matrix2C pauli_z() { return make2(1.0, 0.0, 0.0, -1.0); }

/// Pauli matrix by index: 0 = I, 1 = x, 2 = y, 3 = z.
inline Matrix2C pauli(int i) {
  switch (i) {
    case 1: return pauli_x();
    case 2: return pauli_y();
    case 3: return pauli_z();
    default: return pauli_i();
  }
}

/// Kronecker product; the first factor owns the slow index.
inline Matrix4C kron(const Matrix2C& x, const Matrix2C& y) {
  Matrix4C m;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t l = 0; l < 2; ++l) m(2 * i + k, 2 * j + l) = x(i, j) * y(k, l);
  return m;
}

inline Vec4 kron(const Vec2& x, const Vec2& y) {
  return {x[0] * y[0], x[0] * y[1], x[1] * y[0], x[1] * y[1]};
}

inline Complex det(const Matrix2C& m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

inline Matrix2C inverse(const Matrix2C& m) {
  const Complex d = det(m);
  const double scale = std::max(m.norm() * m.norm(), 1e-300);
  if (std::abs(d) <= 1e-14 * scale) throw Error(ErrorKind::IllConditioned, "singular 2x2 matrix");
  return make2(m(1, 1) / d, -m(0, 1) / d, -m(1, 0) / d, m(0, 0) / d);
}

struct Eigen2 {
  std::array<Complex, 2> values;
  std::array<Vec2, 2> vectors;  ///< unit norm right eigenvectors
};

/// Closed-form eigenvalues/eigenvectors of a 2x2 complex matrix.
/// Values are returned as (tr/2 + mu, tr/2 - mu) with mu the principal root.
inline Eigen2 eig2(const Matrix2C& m, double defect_tol = 1e-12) {
  const Complex a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
  const Complex half = 0.5 * (a + d);
  const Complex h = 0.5 * (a - d);
  const Complex disc = h * h + b * c;
  const double scale = std::max(m.norm(), 1e-300);
  const double offdiag = std::abs(b) + std::abs(c) + std::abs(h);
  Eigen2 out;
  if (offdiag <= 1e-14 * scale) {
    out.values = {a, d};
    out.vectors = {Vec2{1.0, 0.0}, Vec2{0.0, 1.0}};
    return out;
  }
  if (std::abs(disc) <= defect_tol * scale * scale)
    throw Error(ErrorKind::DefectiveMatrix, "coalescing eigenvalues with a single eigenvector");
  const Complex mu = std::sqrt(disc);
  out.values = {half + mu, half - mu};
  for (int n = 0; n < 2; ++n) {
    const Complex lam = out.values[n];
    Vec2 u1{b, lam - a};
    Vec2 u2{lam - d, c};
    out.vectors[n] = normalized(norm(u1) >= norm(u2) ? u1 : u2);
  }
  return out;
}

/// exp(M) for 2x2 M via the Cayley-Hamilton closed form.
inline Matrix2C expm2(const Matrix2C& m) {
  const Complex s = 0.5 * m.trace();
  Matrix2C a = m;
  a(0, 0) -= s;
  a(1, 1) -= s;
  const Complex mu2 = a(0, 0) * a(0, 0) + a(0, 1) * a(1, 0);
  const Complex mu = std::sqrt(mu2);
  Complex ch, shc;
  if (std::abs(mu) < 1e-4) {
    ch = 1.0 + mu2 / 2.0 + mu2 * mu2 / 24.0;
    shc = 1.0 + mu2 / 6.0 + mu2 * mu2 / 120.0;
  } else {
    ch = std::cosh(mu);
    shc = std::sinh(mu) / mu;
  }
  const Complex es = std::exp(s);
  Matrix2C r = shc * a;
  r(0, 0) += ch;
  r(1, 1) += ch;
  return es * r;
}

struct HermitianEigen2 {
  std::array<double, 2> values;  ///< ascending
  Matrix2C vectors;              ///< unitary, columns are eigenvectors
};

/// Closed-form spectral decomposition of a Hermitian 2x2 matrix.
inline HermitianEigen2 eigh2(const Matrix2C& m) {
  const double a = std::real(m(0, 0)), d = std::real(m(1, 1));
  const Complex b = 0.5 * (m(0, 1) + std::conj(m(1, 0)));
  const double mid = 0.5 * (a + d);
  const double half = 0.5 * (a - d);
  const double ab = std::abs(b);
  const double r = std::hypot(half, ab);
  HermitianEigen2 out;
  if (r == 0.0) {
    out.values = {a, d};
    out.vectors = Matrix2C::identity();
    return out;
  }
  double hi = mid + r;
  double lo = mid - r;
  // the smaller root loses digits when both are positive; recover it from the determinant
  if (mid > 0.0 && lo < 1e-3 * hi) lo = (a * d - ab * ab) / hi;
  const double theta = 0.5 * std::atan2(ab, half);
  const Complex ph = ab > 0.0 ? b / ab : Complex(1.0);
  const double c = std::cos(theta), s = std::sin(theta);
  // columns: (lower eigenvector, upper eigenvector)
  out.values = {lo, hi};
  out.vectors = make2(-ph * s, c, c, std::conj(ph) * s);
  return out;
}

/// Principal square root of a Hermitian positive semi-definite 2x2 matrix.
inline Matrix2C herm_sqrt_psd(const Matrix2C& m) {
  const auto e = eigh2(m);
  Matrix2C r;
  for (int n = 0; n < 2; ++n) {
    double lam = e.values[n];
    if (lam < -1e-10) throw Error(ErrorKind::NotPositive, "matrix is not positive semi-definite");
    lam = std::max(lam, 0.0);
    const Vec2 v{e.vectors(0, n), e.vectors(1, n)};
    r += Complex(std::sqrt(lam)) * outer(v, v);
  }
  return r;
}

/// Solves B X + X B = C for Hermitian positive definite B.
inline Matrix2C sylvester_sym(const Matrix2C& b, const Matrix2C& c) {
  const auto e = eigh2(b);
  const double lmax = std::max(std::abs(e.values[0]), std::abs(e.values[1]));
  const auto& u = e.vectors;
  const Matrix2C ct = u.adjoint() * c * u;
  Matrix2C xt;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double den = e.values[i] + e.values[j];
      if (den <= 1e-12 * std::max(lmax, 1e-300))
        throw Error(ErrorKind::IllConditioned, "Sylvester operator is singular");
      xt(i, j) = ct(i, j) / den;
    }
  return u * xt * u.adjoint();
}

/// Heap-allocated dense matrix, row-major.
template <typename T>
struct DenseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<T> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T{}) {}

  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

template <typename T>
struct HermitianEigen {
  std::vector<double> values;  ///< descending
  DenseMatrix<T> vectors;      ///< columns are orthonormal eigenvectors
};

namespace detail {
inline double conj_if(double x) { return x; }
inline Complex conj_if(Complex x) { return std::conj(x); }
inline double real_of(double x) { return x; }
inline double real_of(Complex x) { return std::real(x); }
}  // namespace detail

/// Cyclic Jacobi eigensolver for real symmetric or complex Hermitian matrices.
template <typename T>
HermitianEigen<T> jacobi_eigh(DenseMatrix<T> a, double tol = 1e-13, int max_sweeps = 100) {
  const std::size_t n = a.rows;
  DenseMatrix<T> v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = T(1);
  double total = 0.0;
  for (const auto& x : a.data) total += std::norm(x);
  total = std::sqrt(total);
  auto off = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += std::norm(a(i, j));
    return std::sqrt(s);
  };
  int sweep = 0;
  while (total > 0.0 && off() > tol * total) {
    if (++sweep > max_sweeps) throw Error(ErrorKind::NoConvergence, "Jacobi sweeps exhausted");
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const T apq = a(p, q);
        const double mag = std::abs(apq);
        if (mag <= 1e-300) continue;
        const T ph = apq / mag;  // e^{i phi}
        const double app = detail::real_of(a(p, p)), aqq = detail::real_of(a(q, q));
        const double theta = 0.5 * std::atan2(2.0 * mag, app - aqq);
        const double c = std::cos(theta), s = std::sin(theta);
        // V = diag(1, conj(ph)) * [[c, -s], [s, c]]
        const T v00 = T(c), v01 = T(-s), v10 = detail::conj_if(ph) * s, v11 = detail::conj_if(ph) * c;
        for (std::size_t i = 0; i < n; ++i) {
          const T aip = a(i, p), aiq = a(i, q);
          a(i, p) = aip * v00 + aiq * v10;
          a(i, q) = aip * v01 + aiq * v11;
        }
        for (std::size_t j = 0; j < n; ++j) {
          const T apj = a(p, j), aqj = a(q, j);
          a(p, j) = detail::conj_if(v00) * apj + detail::conj_if(v10) * aqj;
          a(q, j) = detail::conj_if(v01) * apj + detail::conj_if(v11) * aqj;
        }
        a(p, q) = T(0);
        a(q, p) = T(0);
        for (std::size_t i = 0; i < n; ++i) {
          const T vip = v(i, p), viq = v(i, q);
          v(i, p) = vip * v00 + viq * v10;
          v(i, q) = vip * v01 + viq * v11;
        }
      }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return detail::real_of(a(x, x)) > detail::real_of(a(y, y));
  });
  HermitianEigen<T> out;
  out.values.resize(n);
  out.vectors = DenseMatrix<T>(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = detail::real_of(a(order[k], order[k]));
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

/// exp(-i H t) for Hermitian H through a Jacobi spectral decomposition.
template <std::size_t N>
SquareMatrix<N> expm_hermitian(const SquareMatrix<N>& h, double t) {
  DenseMatrix<Complex> d(N, N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) d(i, j) = 0.5 * (h(i, j) + std::conj(h(j, i)));
  const auto e = jacobi_eigh(d);
  SquareMatrix<N> r;
  for (std::size_t k = 0; k < N; ++k) {
    const Complex ph = std::exp(Complex(0.0, -e.values[k] * t));
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j)
        r(i, j) += e.vectors(i, k) * ph * std::conj(e.vectors(j, k));
  }
  return r;
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double x) {
  x = std::remainder(x, 2.0 * kPi);
  if (x <= -kPi) x += 2.0 * kPi;
  return x;
}

}  // namespace nhknot
