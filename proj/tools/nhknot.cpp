// nhknot: sweep, clustering and diagnostics for the two-band twister model.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nhknot/nhknot.hpp"

namespace fs = std::filesystem;
using namespace nhknot;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string mode;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key=value config file");
  app->add_option("--seed", c.seed, "RNG seed");
  app->add_option("--out-dir", c.out_dir, "output directory");
  app->add_option("--mode", c.mode, "theory | dilated | experiment-emulation");
  app->add_option("--set", c.overrides, "config override key=value (repeatable)");
}

SweepConfig load_config(const Common& c) {
  SweepConfig cfg = c.config.empty() ? SweepConfig{} : parse_config(read_file(c.config));
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::InvalidConfig, "--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.mode.empty()) cfg.mode = parse_mode(c.mode);
  validate(cfg);
  return cfg;
}

std::string out_path(const Common& c, const std::string& name) {
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + c.out_dir + ": " + ec.message());
  return (fs::path(c.out_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  auto os = open_output(path);
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

/// Replaces this command's stage in <out-dir>/manifest.json; stages of other commands
/// are kept when they ran under the same config hash.
void write_manifest(const Common& c, RunManifest m) {
  const std::string path = out_path(c, "manifest.json");
  if (fs::exists(path)) {
    try {
      const RunManifest old = parse_manifest_json(read_file(path));
      const std::string name = m.stages.back().name;
      if (old.config_hash == m.config_hash)
        for (const auto& s : old.stages)
          if (s.name != name) m.stages.insert(m.stages.end() - 1, s);
    } catch (const IoError&) {
    }
  }
  write_text(path, manifest_json(m).dump(2) + "\n");
}

struct Point {
  double m1 = 0.5338, m2 = 0.6, k = 0.125 * kPi;
  int band = 1;
  double gamma = 3.5, eta0 = 30.0, t_end = 1.2, dt = 1e-3;
};

void add_point(CLI::App* app, Point& p, bool dynamics) {
  app->add_option("--m1", p.m1, "m1");
  app->add_option("--m2", p.m2, "m2");
  if (!dynamics) return;
  app->add_option("--k", p.k, "momentum");
  app->add_option("--band", p.band, "band 1 or 2");
  app->add_option("--gamma", p.gamma, "generator scale");
  app->add_option("--eta0", p.eta0, "initial dilation parameter");
  app->add_option("--t-end", p.t_end, "evolution time");
  app->add_option("--dt", p.dt, "time step");
}

int cmd_sweep(const Common& c) {
  const SweepConfig cfg = load_config(c);
  RunManifest m;
  m.config_hash = config_hash(cfg);
  StageTimer t;
  const SweepData d = sweep(cfg);
  const auto feats = sweep_features(d);
  const std::string fpath = out_path(c, "features.json");
  const std::string spath = out_path(c, "states.csv");
  const std::string cpath = out_path(c, "config.txt");
  write_text(fpath, features_json(feats, cfg.N, cfg.epsilon).dump(1) + "\n");
  {
    auto os = open_output(spath);
    write_states_csv(os, d);
  }
  write_text(cpath, serialize(cfg));
  m.stages.push_back({"sweep", {fpath, spath, cpath}, t.seconds()});
  write_manifest(c, m);
  std::cout << "mode " << to_string(cfg.mode) << ": " << d.m1.size() << " samples x " << d.k.size() << " momenta\n";
  return 0;
}

int cmd_cluster(const Common& c, const std::string& features, std::optional<double> eps, std::optional<double> delta,
                std::optional<int> t_steps, std::string p_norm) {
  SweepConfig cfg = load_config(c);
  const std::string in = features.empty() ? (fs::path(c.out_dir) / "features.json").string() : features;
  const FeatureSet set = parse_features_json(read_file(in), in);
  if (eps) cfg.epsilon = *eps;
  if (delta) cfg.delta = *delta;
  if (t_steps) cfg.diffusion_t = *t_steps;
  if (!p_norm.empty()) cfg.p_norm = parse_pnorm(p_norm);
  validate(cfg);
  RunManifest m;
  m.config_hash = config_hash(cfg);
  StageTimer t;
  const DiffusionResult r = run_diffusion_map(set.samples, diffusion_options(cfg));
  const std::string lpath = out_path(c, "labels.csv");
  const std::string spath = out_path(c, "spectrum.csv");
  const std::string kpath = out_path(c, "kernel.csv");
  {
    auto os = open_output(lpath);
    write_labels_csv(os, set.samples, r.clustering);
  }
  {
    auto os = open_output(spath);
    write_spectrum_csv(os, r.spectrum);
  }
  {
    auto os = open_output(kpath);
    write_matrix_csv(os, kernel_matrix(set.samples, cfg.epsilon, cfg.p_norm));
  }
  m.stages.push_back({"cluster", {lpath, spath, kpath}, t.seconds()});
  write_manifest(c, m);
  std::cout << "clusters " << r.clustering.n_clusters << " (eigenvalues near 1: " << r.clustering.n_raw << ")\n";
  std::cout << "label changes after:";
  for (int l : r.change_after) std::cout << ' ' << l;
  std::cout << "\nboundaries m1:";
  for (double b : r.boundary_m1) std::cout << ' ' << format_number(b);
  std::cout << '\n';
  return 0;
}

int cmd_knots(const Common& c) {
  const SweepConfig cfg = load_config(c);
  StageTimer t;
  const std::string path = out_path(c, "knots.csv");
  auto os = open_output(path);
  os << "l,m1,W,Q,swap,analytic,winding,berry,label\n";
  for (int l = 1; l <= cfg.samples; ++l) {
    const KnotReport r = classify_knot(TwisterParams{sweep_m1(l, cfg.m1_offset, cfg.m1_step), cfg.m2});
    CsvRow row(os);
    row << l << r.p.m1 << r.W << r.Q << (r.swap ? 1 : 0) << to_string(r.analytic) << to_string(r.winding)
        << to_string(r.berry) << to_string(r.label);
  }
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.stages.push_back({"knots", {path}, t.seconds()});
  write_manifest(c, m);
  return 0;
}

int cmd_berry(const Common& c, const Point& p, int points) {
  const BerryPhase b = berry_phase(TwisterParams{p.m1, p.m2}, points);
  const std::string path = out_path(c, "berry.csv");
  auto os = open_output(path);
  os << "m1,m2,points,Q,Q_half,swap\n";
  {
    CsvRow row(os);
    row << p.m1 << p.m2 << points << b.Q << b.Q_half << (b.swap ? 1 : 0);
  }
  std::printf("Q = %.6f%s\n", b.Q, b.swap ? " (bands swap; cycle 0 -> 4 pi)" : "");
  return 0;
}

int cmd_bands(const Common& c, const Point& p, int points) {
  const BandLoop loop = track_bands(TwisterParams{p.m1, p.m2}, momentum_grid(points));
  const std::string path = out_path(c, "bands.csv");
  auto os = open_output(path);
  write_bands_csv(os, loop);
  return 0;
}

int cmd_pulses(const Common& c, const Point& p) {
  const PulseSchedule s = pulse_schedule(TwisterParams{p.m1, p.m2}, p.k, p.gamma, p.eta0, p.t_end, p.dt);
  const std::string path = out_path(c, "pulses.csv");
  auto os = open_output(path);
  write_schedule_csv(os, s.samples);
  std::cout << s.samples.size() << " samples\n";
  return 0;
}

int cmd_tomo(const Common& c, const Point& p, int trials) {
  SweepConfig cfg = load_config(c);
  check_band(p.band);
  const Matrix2C h = hamiltonian(TwisterParams{p.m1, p.m2}, p.k);
  const BiorthEigensystem es = labeled_eigensystem(TwisterParams{p.m1, p.m2}, p.k, cfg.N);
  cfg.gamma = p.gamma;
  cfg.eta0 = p.eta0;
  cfg.t_end = p.t_end;
  cfg.dt = p.dt;
  PointRecord rec;
  rec.band = p.band;
  detail::prepare_dilated(cfg, h, es, p.band, rec, true);
  TomographySettings s;
  s.cal = cfg.cal;
  s.shots = cfg.shots;
  const MonteCarloSummary mc = monte_carlo_errors(rec.truth, es.R[p.band - 1], s, trials, cfg.seed);
  const std::string path = out_path(c, "tomo.csv");
  auto os = open_output(path);
  os << "bx,by,bz,std_x,std_y,std_z,fidelity_mean,fidelity_std,t_eff,trials,failures\n";
  CsvRow row(os);
  row << mc.mean[0] << mc.mean[1] << mc.mean[2] << mc.std[0] << mc.std[1] << mc.std[2] << mc.fidelity_mean
      << mc.fidelity_std << rec.t_eff << trials << mc.failures;
  return 0;
}

int cmd_evolve(const Common& c, const Point& p, bool dilated) {
  check_band(p.band);
  const TwisterParams tp{p.m1, p.m2};
  const Matrix2C h = hamiltonian(tp, p.k);
  const BiorthEigensystem es = labeled_eigensystem(tp, p.k);
  const Matrix2C he = Complex(p.gamma) * choose_generator(es, p.band).apply(h);
  const Vec2 psi0{1.0, 0.0};
  const std::string path = out_path(c, "trajectory.csv");
  auto os = open_output(path);
  if (dilated) {
    DilatedOptions opt;
    opt.dt = p.dt;
    const DilatedEvolution ev = evolve_dilated(he, p.eta0, psi0, p.t_end, opt);
    write_trajectory_csv(os, ev.target);
    std::cout << "postselected vs direct fidelity " << format_number(ev.final_fidelity) << '\n';
  } else {
    write_trajectory_csv(os, trajectory(he, psi0, p.t_end, p.dt));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-Hermitian knotted phases: sweep, learn and classify"};
  app.require_subcommand(1);
  Common common;
  Point point;
  Point pulse_point;  // defaults to the pulse-sequence example: m1 = 0.9855, 601 samples
  pulse_point.m1 = 0.9855;
  pulse_point.dt = 2e-3;

  auto* sweep_cmd = app.add_subcommand("sweep", "generate the feature set of a sweep");
  add_common(sweep_cmd, common);

  std::string features, p_norm;
  std::optional<double> eps, delta;
  std::optional<int> t_steps;
  auto* cluster_cmd = app.add_subcommand("cluster", "diffusion-map clustering of a feature set");
  add_common(cluster_cmd, common);
  cluster_cmd->add_option("--features", features, "feature-set JSON (default <out-dir>/features.json)");
  cluster_cmd->add_option("--epsilon", eps, "kernel width");
  cluster_cmd->add_option("--delta", delta, "eigenvalue threshold 1 - delta");
  cluster_cmd->add_option("--t", t_steps, "diffusion time");
  cluster_cmd->add_option("--p-norm", p_norm, "1 | 2 | inf");

  auto* knots_cmd = app.add_subcommand("knots", "knot labels of every sweep sample");
  add_common(knots_cmd, common);

  int points = 256;
  auto* berry_cmd = app.add_subcommand("berry", "global biorthogonal Berry phase");
  add_common(berry_cmd, common);
  add_point(berry_cmd, point, false);
  berry_cmd->add_option("--points", points, "k grid size");

  int band_points = 256;
  auto* bands_cmd = app.add_subcommand("bands", "continuity-tracked complex bands");
  add_common(bands_cmd, common);
  add_point(bands_cmd, point, false);
  bands_cmd->add_option("--points", band_points, "k grid size");

  auto* pulses_cmd = app.add_subcommand("pulses", "microwave schedule of the dilated Hamiltonian");
  add_common(pulses_cmd, common);
  add_point(pulses_cmd, pulse_point, true);

  int trials = 1000;
  auto* tomo_cmd = app.add_subcommand("tomo", "Monte Carlo tomography of one prepared eigenstate");
  add_common(tomo_cmd, common);
  add_point(tomo_cmd, point, true);
  tomo_cmd->add_option("--trials", trials, "Monte Carlo trials");

  bool dilated = false;
  auto* evolve_cmd = app.add_subcommand("evolve", "decay trajectory toward one eigenstate");
  add_common(evolve_cmd, common);
  add_point(evolve_cmd, point, true);
  evolve_cmd->add_flag("--dilated", dilated, "evolve through the dilation and postselect");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sweep_cmd->parsed()) return cmd_sweep(common);
    if (cluster_cmd->parsed()) return cmd_cluster(common, features, eps, delta, t_steps, p_norm);
    if (knots_cmd->parsed()) return cmd_knots(common);
    if (berry_cmd->parsed()) return cmd_berry(common, point, points);
    if (bands_cmd->parsed()) return cmd_bands(common, point, band_points);
    if (pulses_cmd->parsed()) return cmd_pulses(common, pulse_point);
    if (tomo_cmd->parsed()) return cmd_tomo(common, point, trials);
    if (evolve_cmd->parsed()) return cmd_evolve(common, point, dilated);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::InvalidConfig ? 1 : 2;
  }
  return 1;
}
