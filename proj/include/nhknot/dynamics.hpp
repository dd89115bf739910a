#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "dilation.hpp"
#include "error.hpp"
#include "io.hpp"
#include "model.hpp"
#include "numerics.hpp"

namespace nhknot {

/// expm2(-i He t) psi0; the norm is not preserved.
inline Vec2 evolve_nonunitary(const Matrix2C& he, const Vec2& psi0, double t) {
  return expm2(Complex(0.0, -t) * he) * psi0;
}

/// Renormalized populations of |-1> (index 1) and of the x/y "minus" states.
struct Populations {
  double Pz = 0.0, Px = 0.0, Py = 0.0;
};

inline Populations populations(const Vec2& psi) {
  const double n2 = std::norm(psi[0]) + std::norm(psi[1]);
  Populations p;
  if (n2 == 0.0) return p;
  const double s = 1.0 / std::sqrt(2.0);
  p.Pz = std::norm(psi[1]) / n2;
  p.Px = std::norm(s * (psi[0] - psi[1])) / n2;
  p.Py = std::norm(s * (psi[0] + kI * psi[1])) / n2;
  return p;
}

struct StateTrajectory {
  std::vector<double> t;
  std::vector<Vec2> psi;  ///< unnormalized
  std::vector<double> norm;
  std::vector<Populations> pop;

  void push(double time, const Vec2& v) {
    t.push_back(time);
    psi.push_back(v);
    norm.push_back(nhknot::norm(v));
    pop.push_back(populations(v));
  }
};

inline long step_count(double t_end, double dt) {
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw Error(ErrorKind::InvalidConfig, "dt must be positive and t_end >= 0");
  return std::max(1L, static_cast<long>(std::ceil(t_end / dt - 1e-9)));
}

/// Closed-form trajectory sampled on a uniform grid.
inline StateTrajectory trajectory(const Matrix2C& he, const Vec2& psi0, double t_end, double dt) {
  const long n = step_count(t_end, dt);
  const double h = t_end / n;
  const Matrix2C step = expm2(Complex(0.0, -h) * he);
  StateTrajectory tr;
  Vec2 psi = psi0;
  tr.push(0.0, psi);
  for (long i = 1; i <= n; ++i) {
    psi = step * psi;
    tr.push(i * h, psi);
  }
  return tr;
}

inline void write_trajectory_csv(std::ostream& os, const StateTrajectory& tr) {
  os << "t,re0,im0,re1,im1,norm,Pz,Px,Py\n";
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    CsvRow row(os);
    row << tr.t[i] << std::real(tr.psi[i][0]) << std::imag(tr.psi[i][0]) << std::real(tr.psi[i][1])
        << std::imag(tr.psi[i][1]) << tr.norm[i] << tr.pop[i].Pz << tr.pop[i].Px << tr.pop[i].Py;
  }
}

/// Ancilla states in the nuclear sigma_z basis.
inline Vec2 ancilla_minus() { return {1.0 / std::sqrt(2.0), Complex(0.0, -1.0 / std::sqrt(2.0))}; }
inline Vec2 ancilla_plus() { return {Complex(0.0, -1.0 / std::sqrt(2.0)), 1.0 / std::sqrt(2.0)}; }

inline Vec4 dilated_initial_state(const Vec2& psi0, double eta0) {
  return kron(psi0, ancilla_minus()) + kron(Complex(eta0) * psi0, ancilla_plus());
}

/// Electron state conditioned on the ancilla in |a>: (I (x) <a|) Psi.
inline Vec2 project_ancilla(const Vec4& psi, const Vec2& a) {
  return {std::conj(a[0]) * psi[0] + std::conj(a[1]) * psi[1], std::conj(a[0]) * psi[2] + std::conj(a[1]) * psi[3]};
}

inline Vec2 postselect(const Vec4& psi) { return project_ancilla(psi, ancilla_minus()); }

/// One midpoint step of the dilated propagator. H_en is block diagonal in the
/// nuclear sigma_z basis: P + Q on |up>, P - Q on |down>.
inline Vec4 dilated_step(const Matrix2C& he, double eta0, double t_mid, double h, const Vec4& psi) {
  const DilatedHamiltonian d = dilated_hamiltonian(he, eta0, t_mid, false);
  const Matrix2C up = expm2(Complex(0.0, -h) * (d.P + d.Q));
  const Matrix2C dn = expm2(Complex(0.0, -h) * (d.P - d.Q));
  const Vec2 a = up * Vec2{psi[0], psi[2]};
  const Vec2 b = dn * Vec2{psi[1], psi[3]};
  return {a[0], b[0], a[1], b[1]};
}

struct DilatedEvolution {
  std::vector<double> t;
  std::vector<Vec4> dilated;
  StateTrajectory target;        ///< postselected electron states
  Vec2 direct_final{};           ///< closed-form non-unitary result at t_end
  double final_fidelity = 0.0;   ///< postselected vs direct
  double max_norm_drift = 0.0;   ///< relative drift of the 4-dim norm
  double step_shift = 0.0;       ///< |F(dt) - F(dt/2)| when checked
};

struct DilatedOptions {
  double dt = 1e-3;
  bool check_step = true;
  bool record = true;
};

namespace detail {
inline DilatedEvolution run_dilated(const Matrix2C& he, double eta0, const Vec2& psi0, double t_end, double dt,
                                    bool record) {
  const long n = step_count(t_end, dt);
  const double h = t_end / n;
  DilatedEvolution out;
  Vec4 psi = dilated_initial_state(psi0, eta0);
  const double n0 = norm(psi);
  auto keep = [&](double t) {
    out.max_norm_drift = std::max(out.max_norm_drift, std::abs(norm(psi) - n0) / n0);
    if (!record) return;
    out.t.push_back(t);
    out.dilated.push_back(psi);
    out.target.push(t, postselect(psi));
  };
  keep(0.0);
  for (long i = 0; i < n; ++i) {
    psi = dilated_step(he, eta0, (i + 0.5) * h, h, psi);
    keep((i + 1) * h);
  }
  if (!record) {
    out.t.push_back(t_end);
    out.dilated.push_back(psi);
    out.target.push(t_end, postselect(psi));
  }
  out.direct_final = evolve_nonunitary(he, psi0, t_end);
  out.final_fidelity = fidelity(out.target.psi.back(), out.direct_final);
  return out;
}
}  // namespace detail

/// Evolves |psi0>|-> + eta0 |psi0>|+> under H_en(t) and postselects the ancilla on |->.
inline DilatedEvolution evolve_dilated(const Matrix2C& he, double eta0, const Vec2& psi0, double t_end,
                                       const DilatedOptions& opt = {}) {
  const double horizon = positivity_horizon(he, eta0, t_end);
  if (horizon < t_end)
    throw TimedError(ErrorKind::PositivityLost, "evolution exceeds positivity horizon t* = " + format_number(horizon),
                     horizon);
  DilatedEvolution out = detail::run_dilated(he, eta0, psi0, t_end, opt.dt, opt.record);
  if (opt.check_step) {
    const DilatedEvolution fine = detail::run_dilated(he, eta0, psi0, t_end, opt.dt / 2.0, false);
    out.step_shift = std::abs(fine.final_fidelity - out.final_fidelity);
    if (out.step_shift > 1e-6)
      throw Error(ErrorKind::StepTooCoarse, "halving dt shifts the final fidelity by " + format_number(out.step_shift));
  }
  return out;
}

/// Generator G in {H, -H, iH, -iH}.
struct GeneratorChoice {
  int sign = 1;
  bool imaginary = false;

  Matrix2C apply(const Matrix2C& h) const {
    return Complex(sign) * (imaginary ? kI : Complex(1.0)) * h;
  }
  std::string name() const { return std::string(sign > 0 ? "+" : "-") + (imaginary ? "iH" : "H"); }
};

inline void check_band(int band) {
  if (band != 1 && band != 2) throw Error(ErrorKind::InvalidBand, "band must be 1 or 2");
}

inline GeneratorChoice choose_generator(const BiorthEigensystem& es, int band) {
  check_band(band);
  if (std::abs(es.E[0] - es.E[1]) <= 1e-12) throw Error(ErrorKind::ExceptionalPoint, "coalescing bands");
  const int b = band - 1;
  const double gap = std::imag(es.E[b]) - std::imag(es.E[1 - b]);
  if (std::abs(gap) > 1e-9) return {gap > 0.0 ? 1 : -1, false};
  const bool larger = std::real(es.E[b]) > std::real(es.E[1 - b]);
  return {larger ? 1 : -1, true};
}

struct PrepareOptions {
  double gamma = 3.5;
  double t_end = 1.2;
  double threshold = 0.999;
  double near_ep_threshold = 0.99;
  double near_ep_discriminant = 0.05;  ///< |d.d| below which the relaxed threshold applies
  bool enforce = true;
  double record_dt = 0.0;  ///< > 0 records a trajectory
};

struct Preparation {
  Vec2 state{};  ///< normalized
  double fidelity = 0.0;
  GeneratorChoice generator;
  StateTrajectory trajectory;
};

/// Decay preparation of band `band` of the given eigensystem of h.
inline Preparation prepare_eigenstate(const Matrix2C& h, const BiorthEigensystem& es, int band,
                                      const PrepareOptions& opt = {}) {
  check_band(band);
  const int b = band - 1;
  Preparation out;
  out.generator = choose_generator(es, band);
  Vec2 psi0{1.0, 0.0};
  if (std::abs(inner(es.L[b], psi0)) < 1e-6) psi0 = {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
  const Matrix2C g = Complex(opt.gamma) * out.generator.apply(h);
  if (opt.record_dt > 0.0) out.trajectory = trajectory(g, psi0, opt.t_end, opt.record_dt);
  // chunked so that long decay times never overflow
  Vec2 psi = psi0;
  const long chunks = std::max(1L, static_cast<long>(std::ceil(opt.t_end / 0.25)));
  const Matrix2C step = expm2(Complex(0.0, -opt.t_end / chunks) * g);
  for (long i = 0; i < chunks; ++i) psi = normalized(step * psi);
  out.state = psi;
  out.fidelity = fidelity(es.R[b], psi);
  if (opt.enforce) {
    const Complex hh = 0.5 * (h(0, 0) - h(1, 1));
    const double disc = std::abs(hh * hh + h(0, 1) * h(1, 0));
    const double thr = disc < opt.near_ep_discriminant ? opt.near_ep_threshold : opt.threshold;
    if (out.fidelity < thr)
      throw Error(ErrorKind::SlowConvergence,
                  "fidelity " + format_number(out.fidelity) + " below " + format_number(thr) +
                      "; gap |Im(E1)-Im(E2)| = " + format_number(std::abs(std::imag(es.E[0]) - std::imag(es.E[1]))));
  }
  return out;
}

inline Preparation prepare_eigenstate(const TwisterParams& p, double k, int band, double gamma = 3.5,
                                      double t_end = 1.2) {
  const Matrix2C h = hamiltonian(p, k);
  PrepareOptions opt;
  opt.gamma = gamma;
  opt.t_end = t_end;
  return prepare_eigenstate(h, biorth_eigensystem(h), band, opt);
}

}  // namespace nhknot
