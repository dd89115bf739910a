#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dilation.hpp"
#include "dynamics.hpp"
#include "error.hpp"
#include "io.hpp"
#include "learn.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "tomography.hpp"
#include "topology.hpp"

namespace nhknot {

enum class SweepMode { Theory, Dilated, Experiment };

inline const char* to_string(SweepMode m) {
  switch (m) {
    case SweepMode::Theory: return "theory";
    case SweepMode::Dilated: return "dilated";
    case SweepMode::Experiment: return "experiment-emulation";
  }
  return "?";
}

inline SweepMode parse_mode(const std::string& s) {
  if (s == "theory") return SweepMode::Theory;
  if (s == "dilated") return SweepMode::Dilated;
  if (s == "experiment-emulation" || s == "experiment") return SweepMode::Experiment;
  throw Error(ErrorKind::InvalidConfig, "unknown mode '" + s + "'");
}

struct SweepConfig {
  double m2 = 0.6;
  double m1_offset = 0.4106;
  double m1_step = 4.0 / (kPi * kPi * kPi * kPi);
  int samples = 37;
  int N = 16;
  double gamma = 3.5;
  double eta0 = 30.0;
  double t_end = 1.2;
  double dt = 1e-3;
  double horizon_margin = 0.1;  ///< dilated runs stop before min eig(R - I) falls below this
  double epsilon = 0.08;
  double delta = 0.01;
  PNorm p_norm = PNorm::L1;
  int diffusion_t = 100;
  long shots = 1000000;
  std::uint64_t seed = 1;
  SweepMode mode = SweepMode::Theory;
  PlCalibration cal;
  bool mle_weighted = false;

  std::vector<double> m1_values() const {
    std::vector<double> v(samples);
    for (int l = 1; l <= samples; ++l) v[l - 1] = sweep_m1(l, m1_offset, m1_step);
    return v;
  }
};

/// Canonical key=value serialization; also the config file format.
inline std::string serialize(const SweepConfig& c) {
  std::ostringstream os;
  os << "m2=" << format_number(c.m2) << "\n"
     << "m1_offset=" << format_number(c.m1_offset) << "\n"
     << "m1_step=" << format_number(c.m1_step) << "\n"
     << "samples=" << c.samples << "\n"
     << "N=" << c.N << "\n"
     << "gamma=" << format_number(c.gamma) << "\n"
     << "eta0=" << format_number(c.eta0) << "\n"
     << "t_end=" << format_number(c.t_end) << "\n"
     << "dt=" << format_number(c.dt) << "\n"
     << "horizon_margin=" << format_number(c.horizon_margin) << "\n"
     << "epsilon=" << format_number(c.epsilon) << "\n"
     << "delta=" << format_number(c.delta) << "\n"
     << "p_norm=" << to_string(c.p_norm) << "\n"
     << "diffusion_t=" << c.diffusion_t << "\n"
     << "shots=" << c.shots << "\n"
     << "seed=" << c.seed << "\n"
     << "mode=" << to_string(c.mode) << "\n"
     << "N1=" << format_number(c.cal.N[0]) << "\n"
     << "N2=" << format_number(c.cal.N[1]) << "\n"
     << "N3=" << format_number(c.cal.N[2]) << "\n"
     << "N4=" << format_number(c.cal.N[3]) << "\n"
     << "mle_weighted=" << (c.mle_weighted ? 1 : 0) << "\n";
  return os.str();
}

inline std::string config_hash(const SweepConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(serialize(c))));
  return buf;
}

namespace detail {
inline double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw Error(ErrorKind::InvalidConfig, "config key '" + key + "': not a number: '" + v + "'");
  return x;
}
inline long long parse_int(const std::string& key, const std::string& v) {
  long long x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw Error(ErrorKind::InvalidConfig, "config key '" + key + "': not an integer: '" + v + "'");
  return x;
}
inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}
}  // namespace detail

inline void set_config_value(SweepConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_double;
  using detail::parse_int;
  if (key == "m2") c.m2 = parse_double(key, value);
  else if (key == "m1_offset") c.m1_offset = parse_double(key, value);
  else if (key == "m1_step") c.m1_step = parse_double(key, value);
  else if (key == "samples") c.samples = static_cast<int>(parse_int(key, value));
  else if (key == "N") c.N = static_cast<int>(parse_int(key, value));
  else if (key == "gamma") c.gamma = parse_double(key, value);
  else if (key == "eta0") c.eta0 = parse_double(key, value);
  else if (key == "t_end") c.t_end = parse_double(key, value);
  else if (key == "dt") c.dt = parse_double(key, value);
  else if (key == "horizon_margin") c.horizon_margin = parse_double(key, value);
  else if (key == "epsilon") c.epsilon = parse_double(key, value);
  else if (key == "delta") c.delta = parse_double(key, value);
  else if (key == "p_norm") c.p_norm = parse_pnorm(value);
  else if (key == "diffusion_t") c.diffusion_t = static_cast<int>(parse_int(key, value));
  else if (key == "shots") c.shots = static_cast<long>(parse_int(key, value));
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "mode") c.mode = parse_mode(value);
  else if (key == "N1") c.cal.N[0] = parse_double(key, value);
  else if (key == "N2") c.cal.N[1] = parse_double(key, value);
  else if (key == "N3") c.cal.N[2] = parse_double(key, value);
  else if (key == "N4") c.cal.N[3] = parse_double(key, value);
  else if (key == "mle_weighted") c.mle_weighted = parse_int(key, value) != 0;
  else throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
}

inline void validate(const SweepConfig& c) {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (c.samples < 1) bad("samples must be >= 1");
  if (c.N < 1) bad("N must be >= 1");
  if (!(c.gamma > 0.0)) bad("gamma must be positive");
  if (!(c.eta0 > 0.0)) bad("eta0 must be positive");
  if (!(c.t_end > 0.0) || !(c.dt > 0.0)) bad("t_end and dt must be positive");
  if (!(c.epsilon > 0.0)) throw Error(ErrorKind::InvalidEpsilon, "epsilon must be positive");
  if (!(c.delta > 0.0 && c.delta < 0.5)) bad("delta must lie in (0, 0.5)");
  if (c.diffusion_t < 1) bad("diffusion_t must be >= 1");
  if (c.shots < 0) bad("shots must be >= 0");
}

inline SweepConfig parse_config(const std::string& text) {
  SweepConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(lineno) + ": expected key=value");
    set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  validate(c);
  return c;
}

/// k grid of the sweep: k_n = 2 pi n / N, n = 1..N.
inline std::vector<double> sweep_grid(int n_points) {
  std::vector<double> k(n_points);
  for (int n = 1; n <= n_points; ++n) k[n - 1] = 2.0 * kPi * n / n_points;
  return k;
}

/// One prepared (l, k, band) point.
struct PointRecord {
  int l = 0;
  double m1 = 0.0;
  int n = 0;
  double k = 0.0;
  int band = 1;
  std::string generator;
  double t_eff = 0.0;
  std::array<double, 3> bloch{};
  double fidelity = 1.0;   ///< prepared or reconstructed state vs the exact eigenvector
  double dilation_fidelity = 1.0;  ///< postselected vs direct evolution (dilated modes)
  double norm_drift = 0.0;
  BasisPopulations truth{};  ///< readout populations (experiment mode)
};

struct SweepData {
  SweepConfig cfg;
  std::vector<double> m1;
  std::vector<double> k;
  std::vector<std::vector<BiorthEigensystem>> exact;  ///< [l][n], reporting labels
  std::vector<PointRecord> points;                     ///< index ((l * N) + n) * 2 + band - 1
};

inline std::size_t point_index(const SweepData& d, std::size_t l, std::size_t n, int band) {
  return (l * d.k.size() + n) * 2 + static_cast<std::size_t>(band - 1);
}

namespace detail {

/// Dilated preparation of one band; the run stops at the safe horizon when shorter than t_end.
inline void prepare_dilated(const SweepConfig& c, const Matrix2C& h, const BiorthEigensystem& es, int band,
                            PointRecord& rec, bool experiment) {
  const GeneratorChoice g = choose_generator(es, band);
  rec.generator = g.name();
  const Matrix2C he = Complex(c.gamma) * g.apply(h);
  const double t_safe = time_to_margin(he, c.eta0, c.horizon_margin, c.t_end);
  rec.t_eff = std::min(c.t_end, t_safe);
  const int b = band - 1;
  if (!experiment) {
    Vec2 psi0{1.0, 0.0};
    if (std::abs(inner(es.L[b], psi0)) < 1e-6) psi0 = {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
    const auto ev = run_dilated(he, c.eta0, psi0, rec.t_eff, c.dt, false);
    const Vec2 state = normalized(ev.target.psi.back());
    rec.bloch = bloch_vector(state);
    rec.fidelity = fidelity(es.R[b], state);
    rec.dilation_fidelity = ev.final_fidelity;
    rec.norm_drift = ev.max_norm_drift;
    return;
  }
  // one run per measurement basis: the same physical state evolved under U^dag He U
  Vec2 psi0{1.0, 0.0};
  if (std::abs(inner(es.L[b], psi0)) < 1e-6) psi0 = {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
  double worst = 1.0;
  for (int basis = 0; basis < 3; ++basis) {
    const Matrix2C u = basis_rotation(static_cast<Basis>(basis));
    const Matrix2C hb = u.adjoint() * he * u;
    const auto ev = run_dilated(hb, c.eta0, u.adjoint() * psi0, rec.t_eff, c.dt, false);
    rec.truth[basis] = readout_populations(ev.dilated.back());
    worst = std::min(worst, ev.final_fidelity);
    rec.norm_drift = std::max(rec.norm_drift, ev.max_norm_drift);
  }
  rec.dilation_fidelity = worst;
}

}  // namespace detail

/// Deterministic part of a sweep: eigensystems and (in dilated modes) the prepared states.
inline SweepData run_sweep(const SweepConfig& c, unsigned workers = 0) {
  validate(c);
  SweepData d;
  d.cfg = c;
  d.m1 = c.m1_values();
  make_sweep(c.m2, d.m1);
  d.k = sweep_grid(c.N);
  const std::size_t L = d.m1.size(), N = d.k.size();
  d.exact.resize(L);
  parallel_for(
      L,
      [&](std::size_t l) {
        const TwisterParams p{d.m1[l], c.m2};
        // labels follow continuity tracking even when N is too small to track on
        std::vector<double> grid = d.k;
        if (N < 2) grid = sweep_grid(2);
        auto all = labeled_eigensystems(p, grid);
        if (N < 2) all = {all.back()};
        d.exact[l] = std::move(all);
      },
      workers);
  d.points.resize(L * N * 2);
  parallel_for(
      L * N * 2,
      [&](std::size_t idx) {
        const std::size_t l = idx / (2 * N), n = (idx / 2) % N;
        const int band = static_cast<int>(idx % 2) + 1;
        PointRecord& rec = d.points[idx];
        rec.l = static_cast<int>(l) + 1;
        rec.m1 = d.m1[l];
        rec.n = static_cast<int>(n) + 1;
        rec.k = d.k[n];
        rec.band = band;
        const auto& es = d.exact[l][n];
        const Matrix2C h = hamiltonian(TwisterParams{d.m1[l], c.m2}, d.k[n]);
        try {
          if (c.mode == SweepMode::Theory) {
            rec.generator = choose_generator(es, band).name();
            rec.bloch = bloch_vector(es.R[band - 1]);
          } else {
            detail::prepare_dilated(c, h, es, band, rec, c.mode == SweepMode::Experiment);
          }
        } catch (const Error& e) {
          throw Error(e.kind(), std::string(e.what()) + " at (l=" + std::to_string(rec.l) +
                                    ", k=" + format_number(rec.k) + ", band=" + std::to_string(band) + ")");
        }
      },
      workers);
  return d;
}

/// Applies shot noise and reconstruction to experiment-mode data (seeded per point).
inline void reconstruct_points(SweepData& d, std::uint64_t seed, long shots, unsigned workers = 0) {
  TomographySettings s;
  s.cal = d.cfg.cal;
  s.shots = shots;
  const std::size_t N = d.k.size();
  parallel_for(
      d.points.size(),
      [&](std::size_t idx) {
        PointRecord& rec = d.points[idx];
        const auto& es = d.exact[idx / (2 * N)][(idx / 2) % N];
        auto rng = counter_rng(seed, 0x7377, idx);
        BasisPopulations raw{};
        for (int b = 0; b < 3; ++b) raw[b] = solve_populations(simulate_pl_rates(rec.truth[b], s.cal, s.shots, rng), s.cal);
        MleOptions mo;
        if (d.cfg.mle_weighted) {
          std::array<double, 12> w{};
          for (int b = 0; b < 3; ++b)
            for (int i = 0; i < 4; ++i) w[4 * b + i] = 1.0 / std::max(raw[b][i] * raw[b][i], 1e-4);
          mo.weights = w;
        }
        const auto st = reconstruct_state(mle_reconstruct(raw, mo), es.R[rec.band - 1]);
        rec.bloch = st.bloch;
        rec.fidelity = st.fidelity;
      },
      workers);
}

/// d-hat grids from the current per-point states (exact ones in theory mode).
inline std::vector<SampleGrid> unit_d_grids(const SweepData& d) {
  const std::size_t L = d.m1.size(), N = d.k.size();
  std::vector<SampleGrid> out(L);
  for (std::size_t l = 0; l < L; ++l) {
    out[l].l = static_cast<int>(l) + 1;
    out[l].m1 = d.m1[l];
    for (std::size_t n = 0; n < N; ++n) {
      if (d.cfg.mode == SweepMode::Theory) {
        out[l].dhat.push_back(unit_d_from_states(d.exact[l][n]));
        continue;
      }
      const Matrix2C h = hamiltonian(TwisterParams{d.m1[l], d.cfg.m2}, d.k[n]);
      const Vec2 r1 = state_from_bloch(d.points[point_index(d, l, n, 1)].bloch);
      const Vec2 r2 = state_from_bloch(d.points[point_index(d, l, n, 2)].bloch);
      out[l].dhat.push_back(unit_d_from_states(biorth_from_right(r1, r2, h)));
    }
  }
  return out;
}

inline std::vector<FeatureVector> sweep_features(const SweepData& d) {
  return build_features(unit_d_grids(d), static_cast<int>(d.k.size()));
}

inline DiffusionOptions diffusion_options(const SweepConfig& c) {
  DiffusionOptions o;
  o.epsilon = c.epsilon;
  o.norm = c.p_norm;
  o.t_steps = c.diffusion_t;
  o.cluster.delta = c.delta;
  o.cluster.seed = c.seed;
  return o;
}

inline constexpr const char* kToolVersion = "0.1.0";

/// Rounds to the 12 significant digits used by every text output.
inline double round12(double x) {
  if (!std::isfinite(x)) return x;
  const std::string t = format_number(x);
  double y = 0.0;
  std::from_chars(t.data(), t.data() + t.size(), y);
  return y;
}

inline nlohmann::ordered_json features_json(const std::vector<FeatureVector>& x, int n_points, double epsilon) {
  nlohmann::ordered_json j;
  j["N"] = n_points;
  j["epsilon"] = round12(epsilon);
  j["samples"] = nlohmann::ordered_json::array();
  for (const auto& f : x) {
    nlohmann::ordered_json s;
    s["l"] = f.l;
    s["m1"] = round12(f.m1);
    s["features"] = nlohmann::ordered_json::array();
    for (double v : f.values) s["features"].push_back(round12(v));
    j["samples"].push_back(std::move(s));
  }
  return j;
}

struct FeatureSet {
  int N = 0;
  double epsilon = 0.08;
  std::vector<FeatureVector> samples;
};

/// Parses and validates a feature-set file; failures name the offending field.
inline FeatureSet parse_features_json(const std::string& text, const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
  auto fail = [&](const std::string& field, const std::string& what) {
    throw IoError(path + ": field '" + field + "': " + what);
  };
  if (!j.is_object()) fail("/", "expected an object");
  FeatureSet fs;
  if (!j.contains("N") || !j["N"].is_number_integer()) fail("N", "expected an integer");
  fs.N = j["N"].get<int>();
  if (fs.N < 1) fail("N", "must be >= 1");
  if (j.contains("epsilon")) {
    if (!j["epsilon"].is_number()) fail("epsilon", "expected a number");
    fs.epsilon = j["epsilon"].get<double>();
  }
  if (!j.contains("samples") || !j["samples"].is_array()) fail("samples", "expected an array");
  const std::size_t width = 6 * static_cast<std::size_t>(fs.N);
  for (std::size_t i = 0; i < j["samples"].size(); ++i) {
    const auto& s = j["samples"][i];
    const std::string at = "samples[" + std::to_string(i) + "]";
    if (!s.is_object()) fail(at, "expected an object");
    if (!s.contains("l") || !s["l"].is_number_integer()) fail(at + ".l", "expected an integer");
    if (!s.contains("m1") || !s["m1"].is_number()) fail(at + ".m1", "expected a number");
    if (!s.contains("features") || !s["features"].is_array()) fail(at + ".features", "expected an array");
    if (s["features"].size() != width)
      fail(at + ".features", "expected " + std::to_string(width) + " values, got " + std::to_string(s["features"].size()));
    FeatureVector f{s["l"].get<int>(), s["m1"].get<double>(), {}};
    for (std::size_t q = 0; q < width; ++q) {
      if (!s["features"][q].is_number()) fail(at + ".features[" + std::to_string(q) + "]", "expected a number");
      f.values.push_back(s["features"][q].get<double>());
    }
    fs.samples.push_back(std::move(f));
  }
  if (fs.samples.empty()) fail("samples", "must not be empty");
  return fs;
}

inline void write_states_csv(std::ostream& os, const SweepData& d) {
  os << "l,m1,n,k,band,generator,t_eff,bx,by,bz,fidelity,dilation_fidelity,norm_drift\n";
  for (const auto& p : d.points) {
    CsvRow row(os);
    row << p.l << p.m1 << p.n << p.k << p.band << p.generator << p.t_eff << p.bloch[0] << p.bloch[1] << p.bloch[2]
        << p.fidelity << p.dilation_fidelity << p.norm_drift;
  }
}

struct StageRecord {
  std::string name;
  std::vector<std::string> outputs;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::string version = kToolVersion;
  std::vector<StageRecord> stages;
};

inline nlohmann::ordered_json manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["config_hash"] = m.config_hash;
  j["version"] = m.version;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : m.stages) j["stages"].push_back({{"name", s.name}, {"outputs", s.outputs}, {"seconds", s.seconds}});
  return j;
}

inline RunManifest parse_manifest_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.config_hash = j.at("config_hash").get<std::string>();
    m.version = j.at("version").get<std::string>();
    for (const auto& s : j.at("stages"))
      m.stages.push_back({s.at("name").get<std::string>(), s.at("outputs").get<std::vector<std::string>>(),
                          s.at("seconds").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

/// Wall-clock timer for manifest stages.
class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Full sweep per mode, noise included in experiment mode.
inline SweepData sweep(const SweepConfig& c, unsigned workers = 0) {
  SweepData d = run_sweep(c, workers);
  if (c.mode == SweepMode::Experiment) reconstruct_points(d, c.seed, c.shots, workers);
  return d;
}

}  // namespace nhknot
