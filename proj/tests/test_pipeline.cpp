#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nhknot/pipeline.hpp"

using namespace nhknot;
namespace fs = std::filesystem;

namespace {

void expect_kind(ErrorKind kind, const std::function<void()>& f) {
  try {
    f();
    FAIL() << "expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "nhknot_cli_out.txt";
  const std::string cmd = std::string(NHKNOT_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  r.out = ss.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nhknot_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int count_lines(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) ++n;
  return n;
}

}  // namespace

TEST(Config, RoundTrip) {
  SweepConfig c;
  c.gamma = 2.5;
  c.mode = SweepMode::Experiment;
  c.p_norm = PNorm::L2;
  c.cal.N = {1.0, 0.8, 0.6, 0.7};
  const SweepConfig back = parse_config(serialize(c));
  EXPECT_EQ(serialize(back), serialize(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_NE(config_hash(c), config_hash(SweepConfig{}));
}

TEST(Config, CommentsAndErrors) {
  const auto c = parse_config("# header\n gamma = 2.0  # trailing\n\nN=8\n");
  EXPECT_EQ(c.gamma, 2.0);
  EXPECT_EQ(c.N, 8);
  expect_kind(ErrorKind::InvalidConfig, [] { parse_config("colour=blue\n"); });
  expect_kind(ErrorKind::InvalidConfig, [] { parse_config("gamma\n"); });
  expect_kind(ErrorKind::InvalidConfig, [] { parse_config("gamma=fast\n"); });
  expect_kind(ErrorKind::InvalidConfig, [] { parse_config("N=0\n"); });
  expect_kind(ErrorKind::InvalidConfig, [] { parse_config("mode=quantum\n"); });
  expect_kind(ErrorKind::InvalidEpsilon, [] { parse_config("epsilon=0\n"); });
}

TEST(Sweep, TheoryGrid) {
  const SweepData d = run_sweep(SweepConfig{});
  EXPECT_EQ(d.points.size(), 37u * 16u * 2u);
  EXPECT_EQ(d.exact.size(), 37u);
  for (const auto& row : d.exact) EXPECT_EQ(row.size(), 16u);
  const auto& p = d.points[point_index(d, 3, 5, 2)];
  EXPECT_EQ(p.l, 4);
  EXPECT_EQ(p.n, 6);
  EXPECT_EQ(p.band, 2);
  const auto f = sweep_features(d);
  ASSERT_EQ(f.size(), 37u);
  EXPECT_EQ(f[0].values.size(), 96u);
}

TEST(Sweep, SingleMomentum) {
  SweepConfig c;
  c.N = 1;
  const auto f = sweep_features(run_sweep(c));
  ASSERT_EQ(f.size(), 37u);
  for (const auto& v : f) EXPECT_EQ(v.values.size(), 6u);
}

TEST(Sweep, DeterministicAcrossWorkers) {
  SweepConfig c;
  c.samples = 4;
  c.N = 4;
  c.mode = SweepMode::Experiment;
  c.shots = 100000;
  const SweepData a = sweep(c, 1);
  const SweepData b = sweep(c, 3);
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].bloch, b.points[i].bloch);
    EXPECT_EQ(a.points[i].fidelity, b.points[i].fidelity);
  }
  std::ostringstream sa, sb;
  write_states_csv(sa, a);
  write_states_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(FeaturesJson, RoundTrip) {
  SweepConfig c;
  c.samples = 3;
  c.N = 4;
  const auto f = sweep_features(run_sweep(c));
  const std::string text = features_json(f, 4, 0.08).dump(1);
  const FeatureSet fs = parse_features_json(text, "f.json");
  EXPECT_EQ(fs.N, 4);
  EXPECT_EQ(fs.epsilon, 0.08);
  ASSERT_EQ(fs.samples.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(fs.samples[i].l, f[i].l);
    for (std::size_t q = 0; q < f[i].values.size(); ++q) EXPECT_NEAR(fs.samples[i].values[q], f[i].values[q], 1e-12);
  }
  EXPECT_EQ(features_json(f, 4, 0.08).dump(), features_json(f, 4, 0.08).dump());
}

TEST(FeaturesJson, SchemaErrorsNameTheField) {
  auto expect_field = [](const std::string& text, const std::string& field) {
    try {
      parse_features_json(text, "bad.json");
      FAIL() << text;
    } catch (const IoError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
      EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
    }
  };
  expect_field("{", "invalid JSON");
  expect_field(R"({"samples": []})", "'N'");
  expect_field(R"({"N": 1})", "'samples'");
  expect_field(R"({"N": 1, "samples": [{"l": 1, "m1": 0.5, "features": [1, 2]}]})", "samples[0].features");
  expect_field(R"({"N": 1, "samples": [{"m1": 0.5, "features": [1, 2, 3, 4, 5, 6]}]})", "samples[0].l");
  expect_field(R"({"N": 1, "samples": [{"l": 1, "m1": 0.5, "features": [1, 2, "x", 4, 5, 6]}]})",
               "samples[0].features[2]");
}

TEST(Manifest, RoundTrip) {
  RunManifest m;
  m.config_hash = config_hash(SweepConfig{});
  m.stages.push_back({"sweep", {"a.json", "b.csv"}, 1.5});
  m.stages.push_back({"cluster", {"c.csv"}, 0.25});
  const RunManifest back = parse_manifest_json(manifest_json(m).dump());
  EXPECT_EQ(back.config_hash, m.config_hash);
  EXPECT_EQ(back.version, kToolVersion);
  ASSERT_EQ(back.stages.size(), 2u);
  EXPECT_EQ(back.stages[0].outputs, m.stages[0].outputs);
  EXPECT_EQ(back.stages[1].seconds, 0.25);
  EXPECT_THROW(parse_manifest_json("{}"), IoError);
}

TEST(Cli, BerryPrintsQ) {
  const auto dir = scratch("berry");
  const auto r = run_cli("berry --m1 0.5338 --out-dir " + dir.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("Q = 2.000000"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "berry.csv"));
}

TEST(Cli, PulsesSchedule) {
  const auto dir = scratch("pulses");
  const auto r = run_cli("pulses --out-dir " + dir.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count_lines(dir / "pulses.csv"), 602);
}

TEST(Cli, SweepThenClusterIsDeterministic) {
  const auto dir = scratch("sweep");
  ASSERT_EQ(run_cli("sweep --out-dir " + dir.string()).code, 0);
  const auto first = run_cli("cluster --out-dir " + dir.string());
  EXPECT_EQ(first.code, 0) << first.out;
  EXPECT_NE(first.out.find("clusters 3"), std::string::npos) << first.out;
  EXPECT_NE(first.out.find("label changes after: 9 29"), std::string::npos) << first.out;
  std::ifstream a(dir / "labels.csv");
  std::stringstream la;
  la << a.rdbuf();
  ASSERT_EQ(run_cli("cluster --out-dir " + dir.string()).code, 0);
  std::ifstream b(dir / "labels.csv");
  std::stringstream lb;
  lb << b.rdbuf();
  EXPECT_EQ(la.str(), lb.str());
  const RunManifest m = parse_manifest_json([&] {
    std::ifstream is(dir / "manifest.json");
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }());
  ASSERT_EQ(m.stages.size(), 2u);
  EXPECT_EQ(m.stages[0].name, "sweep");
  EXPECT_EQ(m.stages[1].name, "cluster");
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  {
    std::ofstream os(dir / "bad.cfg");
    os << "colour=blue\n";
  }
  EXPECT_EQ(run_cli("sweep --config " + (dir / "bad.cfg").string() + " --out-dir " + dir.string()).code, 1);
  EXPECT_EQ(run_cli("sweep --config " + (dir / "missing.cfg").string() + " --out-dir " + dir.string()).code, 1);
  EXPECT_EQ(run_cli("berry --no-such-flag").code, 1);
  EXPECT_EQ(run_cli("cluster --out-dir " + (dir / "empty").string()).code, 1);
  // exactly at the exceptional point
  EXPECT_EQ(run_cli("evolve --m1 0.8 --k 3.141592653589793 --out-dir " + dir.string()).code, 2);
  EXPECT_EQ(run_cli("evolve --band 3 --out-dir " + dir.string()).code, 2);
}
