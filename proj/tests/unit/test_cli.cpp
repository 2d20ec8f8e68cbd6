#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <iterator>
#include <string>
#include <vector>
#include <sys/wait.h>

#include "tbrw/io.hpp"

namespace fs = std::filesystem;
using tbrw::Json;
using tbrw::read_text_file;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tbrw_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Runs the CLI with `args`; stdout and stderr go to files in `dir`.
int run_cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(TBRW_CLI_PATH) + "' " + args + " > '" + (dir / "stdout").string() +
                          "' 2> '" + (dir / "stderr").string() + "'";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string all_files(const fs::path& dir) {
  std::string s;
  for (const char* f : {"config.ini", "checkpoints.csv", "growth.csv", "degrees.csv", "tree.txt", "summary.json",
                        "manifest.json"})
    s += std::string("#") + f + "\n" + read_text_file(dir / f);
  return s;
}

}  // namespace

TEST(Cli, Targets) {
  const auto dir = scratch("targets");
  ASSERT_EQ(run_cli("targets --dmax 6", dir), 0);
  const std::string out = read_text_file(dir / "stdout");
  EXPECT_NE(out.find("d,degree,degree_cumulative,level,level_cumulative\n"), std::string::npos);
  EXPECT_NE(out.find("\n1,0.66666666666666663,0.66666666666666663,0.5,0.5\n"), std::string::npos);
  EXPECT_NE(out.find("\n6,"), std::string::npos);
  EXPECT_EQ(out.find("\n7,"), std::string::npos);
  EXPECT_NE(out.find("= 1.79556073"), std::string::npos);
  EXPECT_NE(out.find("c = 0.27846"), std::string::npos);
}

TEST(Cli, SimulateIsReproducible) {
  const auto root = scratch("simulate");
  // No --out: each run lands in <TBRW_OUT_DIR>/simulate-<hash>, so the echoed configs agree too.
  const std::string args = "simulate --law ber:gamma=0.7 --steps 1e6 --seed 42 --delta 0.05";
  ASSERT_EQ(run_cli(args, root, "TBRW_OUT_DIR='" + (root / "a").string() + "'"), 0);
  ASSERT_EQ(run_cli(args, root, "TBRW_OUT_DIR='" + (root / "b").string() + "'"), 0);
  std::vector<fs::path> runs;
  for (const char* side : {"a", "b"}) {
    ASSERT_EQ(std::distance(fs::directory_iterator(root / side), fs::directory_iterator{}), 1);
    runs.push_back(fs::directory_iterator(root / side)->path());
  }
  EXPECT_EQ(runs[0].filename(), runs[1].filename());
  EXPECT_EQ(runs[0].filename().string().rfind("simulate-", 0), 0u);
  EXPECT_EQ(all_files(runs[0]), all_files(runs[1]));
  const std::string cps = read_text_file(runs[0] / "checkpoints.csv");
  EXPECT_EQ(cps.substr(0, cps.find('\n')), "n,size,diam,height,maxdeg,dist_root,root_visits,Bk,Rk");
  const std::string growth = read_text_file(runs[0] / "growth.csv");
  EXPECT_EQ(growth.substr(0, growth.find('\n')), "k,tau,delta_tau,attach_vertex,good");
  const auto manifest = Json::parse(read_text_file(runs[0] / "manifest.json"));
  EXPECT_EQ(manifest["kind"], "simulate");
  EXPECT_EQ(manifest["artifacts"].size(), 6u);
  const auto summary = Json::parse(read_text_file(runs[0] / "summary.json"));
  EXPECT_EQ(summary["steps"], 1000000);
  EXPECT_EQ(manifest["config_hash"], summary["config_hash"]);
}

TEST(Cli, ChainProfile) {
  const auto dir = scratch("chain");
  tbrw::write_text_file(dir / "path3.txt", "0 1\n1 2\n");
  ASSERT_EQ(run_cli("chain --tree '" + (dir / "path3.txt").string() + "' --profile 100 --out '" +
                        (dir / "out").string() + "'",
                    dir),
            0);
  const std::string prof = read_text_file(dir / "out" / "profile.csv");
  EXPECT_EQ(prof.substr(0, prof.find('\n')), "t,sep,tv");
  EXPECT_EQ(prof.substr(prof.find('\n') + 1, 4), "0,1,");
  const auto s = Json::parse(read_text_file(dir / "out" / "summary.json"));
  for (const char* key : {"size", "edges", "diam", "tmix", "trel", "gamma_star", "lambda_min", "eigentime_lhs",
                          "eigentime_rhs"})
    EXPECT_TRUE(s.contains(key)) << key;
  EXPECT_EQ(s["size"], 3);
  EXPECT_EQ(s["diam"], 2);
  EXPECT_NEAR(s["eigentime_lhs"].get<double>(), s["eigentime_rhs"].get<double>(), 1e-9);
}

TEST(Cli, ErrorsAndExitCodes) {
  const auto dir = scratch("errors");
  EXPECT_EQ(run_cli("experiment", dir), 1);
  EXPECT_NE(read_text_file(dir / "stderr").find("--config"), std::string::npos);
  EXPECT_EQ(run_cli("experiment --config '" + (dir / "missing.ini").string() + "'", dir), 1);
  tbrw::write_text_file(dir / "bad.ini", "experiment = degree\nreplicaz = 3\n");
  EXPECT_EQ(run_cli("experiment --config '" + (dir / "bad.ini").string() + "'", dir), 1);
  EXPECT_NE(read_text_file(dir / "stderr").find("replicaz"), std::string::npos);
  EXPECT_EQ(run_cli("simulate --law nosuch:1 --steps 10", dir), 1);
  // A BA run of 20 vertices cannot meet a 1e-9 tolerance.
  EXPECT_EQ(run_cli("ba --vertices 20 --set tolerance=1e-9 --check --out '" + (dir / "ba").string() + "'", dir), 2);
  EXPECT_EQ(run_cli("ba --vertices 20 --set tolerance=1 --check --out '" + (dir / "ba").string() + "'", dir), 0);
}

TEST(Cli, ExperimentThreadsAndOutDir) {
  const auto dir = scratch("experiment");
  tbrw::write_text_file(dir / "run.ini", "experiment = maxdeg\n[maxdeg]\nvertices = 4000\ncheckpoints = 1000,2000,4000\n");
  const std::string base = "experiment --config '" + (dir / "run.ini").string() + "' --seed 3 --replicas 4";
  ASSERT_EQ(run_cli(base + " --threads 1 --out '" + (dir / "t1").string() + "'", dir), 0);
  ASSERT_EQ(run_cli(base + " --threads 8 --out '" + (dir / "t8").string() + "'", dir), 0);
  for (const auto& entry : fs::directory_iterator(dir / "t1")) {
    const auto name = entry.path().filename();
    const std::string a = read_text_file(entry.path()), b = read_text_file(dir / "t8" / name);
    if (name == "config.ini") {
      EXPECT_NE(a, b);  // the echo records the thread count
    } else {
      EXPECT_EQ(a, b) << name;
    }
  }
  ASSERT_EQ(run_cli(base, dir, "TBRW_OUT_DIR='" + (dir / "env").string() + "'"), 0);
  const std::string out = read_text_file(dir / "stdout");
  EXPECT_NE(out.find((dir / "env" / "maxdeg-").string()), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "env"));
}
