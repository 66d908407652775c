#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "trapsim/experiments.hpp"
#include "trapsim/walk.hpp"

using namespace trapsim;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path root;
  explicit TempDir(const std::string& tag) {
    root = fs::temp_directory_path() / ("trapsim_cli_" + tag);
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempDir() { fs::remove_all(root); }
  std::string str() const { return root.string(); }
  std::string sub(const std::string& name) const { return (root / name).string(); }
};

std::string write_config(const TempDir& dir, const std::string& name,
                         const std::string& body) {
  std::string path = dir.sub(name);
  std::ofstream out(path, std::ios::trunc);
  out << body;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

nlohmann::json summary_of(const TempDir& dir, const std::string& out) {
  return nlohmann::json::parse(slurp(dir.sub(out + "/summary.json")));
}

}  // namespace

TEST(RunExperiment, RejectsBrokenConfigs) {
  TempDir dir("reject");
  EXPECT_EQ(run_experiment_file(dir.sub("nonexistent.toml")).exit_code, 2);

  std::string syntax = write_config(dir, "syntax.toml", "not a config\n");
  EXPECT_EQ(run_experiment_file(syntax).exit_code, 2);

  std::string nameless = write_config(dir, "nameless.toml", "output = \"" + dir.sub("o1") + "\"\n");
  EXPECT_EQ(run_experiment_file(nameless).exit_code, 2);

  std::string unknown = write_config(
      dir, "unknown.toml",
      "experiment = \"frobnicate\"\noutput = \"" + dir.sub("o2") + "\"\n");
  RunReport r = run_experiment_file(unknown);
  EXPECT_EQ(r.exit_code, 2);
  nlohmann::json s = summary_of(dir, "o2");
  EXPECT_NE(s["error"].get<std::string>().find("unknown experiment"), std::string::npos);
}

TEST(RunExperiment, SchemaViolationsExitTwo) {
  TempDir dir("schema");
  // missing required parameter
  std::string missing = write_config(
      dir, "missing.toml",
      "experiment = \"potential-identities\"\noutput = \"" + dir.sub("m") + "\"\n");
  RunReport r1 = run_experiment_file(missing);
  EXPECT_EQ(r1.exit_code, 2);
  EXPECT_NE(r1.message.find("missing parameter 'd'"), std::string::npos);

  // unknown parameter
  std::string extra = write_config(dir, "extra.toml",
                                   "experiment = \"potential-identities\"\noutput = \"" +
                                       dir.sub("e") + "\"\n[params]\nd = 2\nbogus = 1\n");
  RunReport r2 = run_experiment_file(extra);
  EXPECT_EQ(r2.exit_code, 2);
  EXPECT_NE(r2.message.find("unknown parameter 'bogus'"), std::string::npos);

  // unknown top-level key
  std::string toplevel = write_config(dir, "toplevel.toml",
                                      "experiment = \"potential-identities\"\noutput = \"" +
                                          dir.sub("t") + "\"\nstray = 1\n[params]\nd = 2\n");
  EXPECT_EQ(run_experiment_file(toplevel).exit_code, 2);

  // wrong type
  std::string wrong = write_config(dir, "wrong.toml",
                                   "experiment = \"potential-identities\"\noutput = \"" +
                                       dir.sub("w") + "\"\n[params]\nd = \"two\"\n");
  EXPECT_EQ(run_experiment_file(wrong).exit_code, 2);

  // error lands in summary.json too
  nlohmann::json s = summary_of(dir, "m");
  EXPECT_EQ(s["experiment"], "potential-identities");
  EXPECT_TRUE(s.contains("error"));
}

TEST(RunExperiment, DimensionOutOfRangeExitsTwo) {
  TempDir dir("dim");
  std::string cfg = write_config(dir, "d4.toml",
                                 "experiment = \"potential-identities\"\noutput = \"" +
                                     dir.sub("o") + "\"\n[params]\nd = 4\nN = 8\n");
  RunReport r = run_experiment_file(cfg);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(r.message, "dimension out of range");

  std::string stay = write_config(dir, "stay3.toml",
                                  "experiment = \"stay2d\"\noutput = \"" + dir.sub("s") +
                                      "\"\n[params]\nd = 3\nN = [8]\nseeds = [1]\n");
  EXPECT_EQ(run_experiment_file(stay).exit_code, 2);
}

TEST(RunExperiment, IdentitySuiteMatchesDirectEvaluation) {
  TempDir dir("ident");
  std::string cfg = write_config(dir, "pi.toml",
                                 "experiment = \"potential-identities\"\noutput = \"" +
                                     dir.sub("o") + "\"\n[params]\nd = 2\nN = 8\n");
  RunReport r = run_experiment_file(cfg);
  ASSERT_EQ(r.exit_code, 0) << r.message;
  nlohmann::json s = summary_of(dir, "o");
  EXPECT_EQ(s["verdict"], "pass");
  EXPECT_EQ(s["results"]["instances"], 50);
  EXPECT_LE(s["results"]["max_rel_err"].get<double>(), 1e-8);
  // resolved defaults are embedded
  EXPECT_EQ(s["config"]["instances"], 50);
  EXPECT_EQ(s["config"]["alpha"], 0.5);
  EXPECT_EQ(s["seeds"].size(), 50u);
  // results.csv header
  std::string csv = slurp(dir.sub("o/results.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "d,N,instance,env_seed,escape_lhs,escape_rhs,escape_rel_err,"
            "hitting_lhs,hitting_rhs,hitting_rel_err");
}

TEST(RunExperiment, CapacityLimitRunsBothDimensions) {
  TempDir dir("cap");
  std::string d3 = write_config(dir, "d3.toml",
                                "experiment = \"capacity-limits\"\noutput = \"" +
                                    dir.sub("o3") + "\"\n[params]\nd = 3\nN = [8, 16]\nvd_box = 32\n");
  ASSERT_EQ(run_experiment_file(d3).exit_code, 0);
  nlohmann::json s3 = summary_of(dir, "o3");
  double target = s3["results"]["target"].get<double>();
  EXPECT_NEAR(target, 0.6595 / 2.0, 0.002);
  EXPECT_TRUE(fs::exists(dir.sub("o3/plot.svg")));

  std::string d2 = write_config(dir, "d2.toml",
                                "experiment = \"capacity-limits\"\noutput = \"" +
                                    dir.sub("o2") + "\"\n[params]\nd = 2\nN = [16, 32]\n");
  ASSERT_EQ(run_experiment_file(d2).exit_code, 0);
  nlohmann::json s2 = summary_of(dir, "o2");
  EXPECT_EQ(s2["results"]["target"].get<double>(), M_PI / 4.0);
  // scaled value climbs toward the limit from below on this pair
  auto scaled = s2["results"]["scaled"].get<std::vector<double>>();
  ASSERT_EQ(scaled.size(), 2u);
  EXPECT_LT(scaled[0], scaled[1]);
  EXPECT_LT(scaled[1], M_PI / 4.0);

  std::string odd = write_config(dir, "odd.toml",
                                 "experiment = \"capacity-limits\"\noutput = \"" +
                                     dir.sub("oo") + "\"\n[params]\nd = 2\nN = [15, 31]\n");
  EXPECT_EQ(run_experiment_file(odd).exit_code, 2);
}

TEST(RunExperiment, TraceConvergenceSmoke) {
  TempDir dir("trace");
  std::string cfg = write_config(
      dir, "tr.toml",
      "experiment = \"trace-convergence\"\noutput = \"" + dir.sub("o") +
          "\"\n[params]\nd = 3\nN = [8, 12]\nM = 2\n"
          "atoms_x = [0.25, 0.75]\natoms_y = [0.25, 0.75]\natoms_z = [0.25, 0.75]\n"
          "atoms_w = [2.0, 1.5]\n");
  RunReport r = run_experiment_file(cfg);
  ASSERT_EQ(r.exit_code, 0) << r.message;
  nlohmann::json s = summary_of(dir, "o");
  auto errs = s["results"]["max_rel_err_by_N"].get<std::vector<double>>();
  ASSERT_EQ(errs.size(), 2u);
  EXPECT_GT(errs[0], errs[1]);  // finer lattice sits closer to the limit
  EXPECT_GT(s["results"]["rate_constant"].get<double>(), 0.6);

  // mismatched atom lists are a schema error
  std::string bad = write_config(
      dir, "bad.toml",
      "experiment = \"trace-convergence\"\noutput = \"" + dir.sub("b") +
          "\"\n[params]\nd = 3\nN = [8]\nM = 2\natoms_x = [0.25]\natoms_y = [0.25, 0.5]\n"
          "atoms_z = [0.25]\natoms_w = [1.0]\n");
  EXPECT_EQ(run_experiment_file(bad).exit_code, 2);
}

TEST(RunExperiment, SmallStochasticRunnersComplete) {
  TempDir dir("stoch");
  std::string occ = write_config(dir, "occ.toml",
                                 "experiment = \"occupation\"\noutput = \"" + dir.sub("oc") +
                                     "\"\n[params]\nd = 3\nN = 8\nM = [2, 4]\nseeds = [1, 2]\n"
                                     "replicas = 10\nhorizon = 2.0\n");
  ASSERT_EQ(run_experiment_file(occ).exit_code, 0);
  EXPECT_TRUE(summary_of(dir, "oc").contains("verdict"));

  std::string st = write_config(dir, "st.toml",
                                "experiment = \"stay2d\"\noutput = \"" + dir.sub("st") +
                                    "\"\n[params]\nN = [16, 32]\nseeds = [3]\nreplicas = 50\n");
  ASSERT_EQ(run_experiment_file(st).exit_code, 0);

  std::string tb = write_config(dir, "tb.toml",
                                "experiment = \"two-blocks\"\noutput = \"" + dir.sub("tb") +
                                    "\"\n[params]\nN = 64\nseeds = [1]\neps = [0.25, 0.125]\n"
                                    "replicas = 10\n");
  ASSERT_EQ(run_experiment_file(tb).exit_code, 0);

  std::string kp = write_config(dir, "kp.toml",
                                "experiment = \"kproc-diagonal\"\noutput = \"" + dir.sub("kp") +
                                    "\"\n[params]\nd = 3\nN = [8, 12]\nell = [3, 4]\n"
                                    "replicas = 20\nhorizon = 0.5\n");
  ASSERT_EQ(run_experiment_file(kp).exit_code, 0);
  EXPECT_EQ(summary_of(dir, "kp")["verdict"], "diagnostic");

  std::string env = write_config(dir, "env.toml",
                                 "experiment = \"env-check\"\noutput = \"" + dir.sub("ev") +
                                     "\"\n[params]\nd = 1\nN = [64, 128, 256]\nseeds = [1, 2, 3]\n");
  ASSERT_EQ(run_experiment_file(env).exit_code, 0);
  EXPECT_TRUE(fs::exists(dir.sub("ev/results.csv")));
}

TEST(RunExperiment, HydroRunWritesDensityArtifacts) {
  TempDir dir("hydro");
  std::string cfg = write_config(dir, "hy.toml",
                                 "experiment = \"hydro\"\noutput = \"" + dir.sub("o") +
                                     "\"\n[params]\nN = [16]\nreplicas = 15\nt = 0.2\n");
  RunReport r = run_experiment_file(cfg);
  ASSERT_EQ(r.exit_code, 0) << r.message;
  nlohmann::json s = summary_of(dir, "o");
  EXPECT_TRUE(s["results"]["by_N"][0].contains("sigma_gap"));
  ASSERT_TRUE(fs::exists(dir.sub("o/density_N16.bin")));
  DensityMatrix m = read_density_binary(dir.sub("o/density_N16.bin"));
  EXPECT_EQ(m.N, 16u);
  EXPECT_EQ(m.n_times, 4u);  // default grid: 0, t/4, t/2, t
  EXPECT_TRUE(fs::exists(dir.sub("o/density_N16.csv")));
  EXPECT_TRUE(fs::exists(dir.sub("o/plot.svg")));
}

TEST(RunExperiment, RerunsAreByteIdenticalAcrossThreadCounts) {
  TempDir dir("det");
  auto run_with = [&](const std::string& out, const char* threads) {
    setenv("TRAPSIM_THREADS", threads, 1);
    std::string cfg = write_config(dir, "cfg_" + out + ".toml",
                                   "experiment = \"hydro\"\noutput = \"" + dir.sub(out) +
                                       "\"\n[params]\nN = [16]\nreplicas = 12\nt = 0.1\n");
    RunReport r = run_experiment_file(cfg);
    unsetenv("TRAPSIM_THREADS");
    ASSERT_EQ(r.exit_code, 0) << r.message;
  };
  run_with("a", "1");
  run_with("b", "4");
  EXPECT_EQ(slurp(dir.sub("a/results.csv")), slurp(dir.sub("b/results.csv")));
  EXPECT_EQ(slurp(dir.sub("a/summary.json")), slurp(dir.sub("b/summary.json")));
  EXPECT_EQ(slurp(dir.sub("a/density_N16.bin")), slurp(dir.sub("b/density_N16.bin")));
  EXPECT_EQ(slurp(dir.sub("a/plot.svg")), slurp(dir.sub("b/plot.svg")));
}

TEST(ReplayReport, EmptyPayloadSingleSegmentAndRoundTrip) {
  TempDir dir("replay");

  // header-only file: d=2, N=4, zero records
  std::string empty_path = dir.sub("empty.traj");
  {
    std::string buf = "TRAJ";
    auto put_u32 = [&buf](std::uint32_t v) {
      for (int i = 0; i < 4; ++i) buf += static_cast<char>((v >> (8 * i)) & 0xFF);
    };
    put_u32(2);
    put_u32(4);
    put_u32(0);
    std::ofstream out(empty_path, std::ios::binary);
    out << buf;
  }
  TrajectoryFile empty = load_trajectory(empty_path);
  EXPECT_EQ(empty.traj.segments.size(), 0u);
  EXPECT_EQ(empty.traj.total_time, 0.0);
  std::string report = trajectory_report(empty);
  EXPECT_NE(report.find("segments: 0"), std::string::npos);
  EXPECT_NE(report.find("total time: 0"), std::string::npos);

  // single segment (site 5, holding 1.0)
  TorusSpec spec{2, 4};
  Trajectory one;
  one.start = 5;
  one.segments = {{5, 1.0}};
  one.total_time = 1.0;
  std::string one_path = dir.sub("one.traj");
  save_trajectory(one_path, spec, one);
  TrajectoryFile back = load_trajectory(one_path);
  EXPECT_EQ(back.traj.total_time, 1.0);
  std::string one_report = trajectory_report(back);
  EXPECT_NE(one_report.find("segments: 1"), std::string::npos);
  EXPECT_NE(one_report.find("total time: 1"), std::string::npos);
  EXPECT_NE(one_report.find("site 5 (1,1)"), std::string::npos);

  // dump -> load reproduces the segment count of a simulated path
  WField f = uniform_field(spec, 0.5);
  WalkConfig wc{&f, 1.0, 99};
  Trajectory sim = simulate_walk(wc, 0, 25.0);
  std::string sim_path = dir.sub("sim.traj");
  save_trajectory(sim_path, spec, sim);
  TrajectoryFile sim_back = load_trajectory(sim_path);
  EXPECT_EQ(sim_back.traj.segments.size(), sim.segments.size());
  std::string sim_report = trajectory_report(sim_back);
  EXPECT_NE(sim_report.find("segments: " + std::to_string(sim.segments.size())),
            std::string::npos);

  // the ranking lists at most ten sites, deepest first
  std::string top_line = sim_report.substr(sim_report.find("top "));
  EXPECT_NE(top_line.find("sites by occupation"), std::string::npos);
}
