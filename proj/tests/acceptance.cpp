// Acceptance checks 1-8; one PASS/FAIL line each, non-zero exit on any failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "nhknot/nhknot.hpp"

using namespace nhknot;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail, double seconds) {
  std::printf("criterion %d: %s  %s  (%.1f s)\n", id, ok ? "PASS" : "FAIL", detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x) { return format_number(x); }

std::string join(const std::vector<int>& v) {
  std::string s;
  for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

void boundaries_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const SweepConfig c;
  const auto r = run_diffusion_map(sweep_features(run_sweep(c)), diffusion_options(c));
  const bool changes = r.change_after == std::vector<int>{9, 29};
  const bool bracket = r.boundary_m1.size() == 2 && sweep_m1(9) < 0.8 && 0.8 < sweep_m1(10) && sweep_m1(28) < 1.6 &&
                       1.6 < sweep_m1(30);
  const double s = since(t0);
  report(1, r.clustering.n_clusters == 3 && changes && bracket && s < 60.0,
         "clusters " + std::to_string(r.clustering.n_clusters) + ", changes after " + join(r.change_after), s);
}

void berry_2() {
  const auto t0 = std::chrono::steady_clock::now();
  const double a = berry_phase(TwisterParams{0.5338, 0.6}).Q;
  const double b = berry_phase(TwisterParams{1.2730, 0.6}).Q;
  const double c = berry_phase(TwisterParams{1.8889, 0.6}).Q;
  const double err = std::max({std::abs(a - 2.0), std::abs(b - 2.0), std::abs(c)});
  report(2, err <= 1e-6, "Q = " + fmt(a) + ", " + fmt(b) + ", " + fmt(c) + "; max error " + fmt(err), since(t0));
}

void tables_3() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream f(std::string(NHKNOT_TEST_DATA) + "/eigenstate_tables.csv");
  std::string line;
  std::getline(f, line);
  double worst = 0.0;
  int rows = 0;
  PrepareOptions opt;
  opt.t_end = 10.0;
  while (std::getline(f, line)) {
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream is(line);
    double m1, kp, x, y, z;
    int band;
    is >> m1 >> band >> kp >> x >> y >> z;
    const TwisterParams p{m1, 0.6};
    const double k = kp * kPi;
    const auto prep = prepare_eigenstate(hamiltonian(p, k), labeled_eigensystem(p, k), band, opt);
    const auto r = bloch_vector(prep.state);
    worst = std::max({worst, std::abs(r[0] - x), std::abs(r[1] - y), std::abs(r[2] - z)});
    ++rows;
  }
  const double s = since(t0);
  report(3, rows == 96 && worst <= 2e-3 && s < 60.0,
         std::to_string(rows) + " rows, max component error " + fmt(worst) + " (decay t_end 10)", s);
}

void exceptional_4() {
  const auto t0 = std::chrono::steady_clock::now();
  const double a = std::abs(discriminant({0.8, 0.6}, kPi));
  const double b = std::abs(discriminant({1.6, 0.6}, 2.0 * kPi));
  report(4, a <= 1e-12 && b <= 1e-12, "|d.d| = " + fmt(a) + ", " + fmt(b), since(t0));
}

void dilation_5() {
  const auto t0 = std::chrono::steady_clock::now();
  SweepConfig c;
  c.mode = SweepMode::Dilated;
  const SweepData d = run_sweep(c);
  double worst_f = 1.0, worst_drift = 0.0;
  for (const auto& p : d.points) {
    worst_f = std::min(worst_f, p.dilation_fidelity);
    worst_drift = std::max(worst_drift, p.norm_drift);
  }
  const double s = since(t0);
  report(5, d.points.size() == 1184 && 1.0 - worst_f <= 1e-6 && worst_drift <= 1e-9 && s < 300.0,
         std::to_string(d.points.size()) + " points, min fidelity 1 - " + fmt(1.0 - worst_f) + ", max drift " +
             fmt(worst_drift),
         s);
}

void tomography_6() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  const PlCalibration cal;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Vec2 psi = normalized(Vec2{Complex(g(rng), g(rng)), Complex(g(rng), g(rng))});
    const Vec4 full = kron(psi, ancilla_minus());
    BasisPopulations raw{};
    for (int b = 0; b < 3; ++b)
      raw[b] = solve_populations(
          simulate_pl_rates(readout_populations(full, basis_rotation(static_cast<Basis>(b))), cal), cal);
    const auto st = reconstruct_state(mle_reconstruct(raw), psi);
    const auto want = bloch_vector(psi);
    for (int b = 0; b < 3; ++b) worst = std::max(worst, std::abs(st.bloch[b] - want[b]));
  }
  // shot-noise scaling on a mixed-weight readout
  BasisPopulations truth{};
  const std::array<double, 3> r{0.48, -0.6, 0.64};
  for (int b = 0; b < 3; ++b) truth[b] = {0.15 * (1 + r[b]), 0.3, 0.15 * (1 - r[b]), 0.4};
  TomographySettings s;
  std::vector<double> lx, ly;
  for (long shots : {10000L, 100000L, 1000000L}) {
    s.shots = shots;
    const auto m = monte_carlo_errors(truth, state_from_bloch(r), s, 400, 6);
    lx.push_back(std::log(static_cast<double>(shots)));
    ly.push_back(std::log((m.std[0] + m.std[1] + m.std[2]) / 3.0));
  }
  const double slope = (ly[2] - ly[0]) / (lx[2] - lx[0]);
  report(6, worst <= 1e-9 && std::abs(slope + 0.5) <= 0.1,
         "noiseless max error " + fmt(worst) + ", std exponent " + fmt(slope), since(t0));
}

/// Berry phase of the loop built from reconstructed states of sample l.
double measured_q(const SweepData& d, std::size_t l) {
  const TwisterParams p{d.m1[l], d.cfg.m2};
  const BandLoop loop = track_bands(p, d.k);
  std::vector<BiorthEigensystem> bands;
  for (std::size_t n = 0; n < d.k.size(); ++n) {
    const auto& ex = d.exact[l][n];
    const Vec2 r1 = state_from_bloch(d.points[point_index(d, l, n, 1)].bloch);
    const Vec2 r2 = state_from_bloch(d.points[point_index(d, l, n, 2)].bloch);
    auto es = biorth_from_right(r1, r2, hamiltonian(p, d.k[n]));
    // reporting labels follow the tracked loop
    if (std::abs(inner(loop.bands[n].R[0], ex.R[1])) > std::abs(inner(loop.bands[n].R[0], ex.R[0]))) swap_bands(es);
    bands.push_back(es);
  }
  return berry_phase_Q(loop_from_states(d.k, bands, loop.swap)).Q;
}

void noisy_7() {
  const auto t0 = std::chrono::steady_clock::now();
  const SweepConfig theory;
  const auto ref = run_diffusion_map(sweep_features(run_sweep(theory)), diffusion_options(theory));
  SweepConfig c;
  c.mode = SweepMode::Experiment;
  c.t_end = 10.0;
  const SweepData base = run_sweep(c);
  int bad_clusters = 0, bad_bounds = 0, bad_fidelity = 0;
  double worst_frac = 1.0, worst_q = 0.0;
  const std::size_t samples[3] = {2, 20, 35};  // m1 = 0.5338, 1.2730, 1.8889
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SweepData d = base;
    reconstruct_points(d, seed, c.shots);
    int good = 0;
    for (const auto& p : d.points)
      if (p.fidelity >= 0.985) ++good;
    const double frac = static_cast<double>(good) / d.points.size();
    worst_frac = std::min(worst_frac, frac);
    if (frac < 0.97) ++bad_fidelity;
    DiffusionOptions o = diffusion_options(c);
    o.cluster.seed = seed;
    const auto r = run_diffusion_map(sweep_features(d), o);
    if (r.clustering.n_clusters != 3) ++bad_clusters;
    if (r.boundary_m1 != ref.boundary_m1) ++bad_bounds;
    for (std::size_t l : samples) {
      const double q = measured_q(d, l);
      worst_q = std::max(worst_q, std::abs(q - std::round(q)));
    }
  }
  report(7, bad_clusters == 0 && bad_bounds == 0 && bad_fidelity == 0 && worst_q <= 0.05,
         "20 seeds: min fraction F >= 0.985 " + fmt(worst_frac) + ", cluster-count misses " +
             std::to_string(bad_clusters) + ", boundary shifts " + std::to_string(bad_bounds) +
             ", max |Q - round(Q)| " + fmt(worst_q),
         since(t0));
}

void concordance_8() {
  const auto t0 = std::chrono::steady_clock::now();
  int agree = 0;
  std::string err;
  for (int l = 1; l <= 37; ++l) {
    try {
      const auto r = classify_knot(TwisterParams{sweep_m1(l), 0.6});
      if (r.analytic == r.winding && r.winding == r.berry) ++agree;
    } catch (const Error& e) {
      err = " (sample " + std::to_string(l) + ": " + e.what() + ")";
    }
  }
  report(8, agree == 37, std::to_string(agree) + "/37 samples concordant" + err, since(t0));
}

}  // namespace

int main() {
  const std::vector<void (*)()> checks{boundaries_1, berry_2,      tables_3, exceptional_4,
                                       dilation_5,   tomography_6, noisy_7,  concordance_8};
  for (std::size_t i = 0; i < checks.size(); ++i) {
    try {
      checks[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i) + 1, false, std::string("error: ") + e.what(), 0.0);
    }
  }
  return failures == 0 ? 0 : 1;
}
