// End-to-end checks of the command-line binary: exit-code conventions and
// the files a benchmark run writes. The binary path comes from the build
// system via EXPERIOR_CLI_PATH.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

CommandResult run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(EXPERIOR_CLI_PATH) + " " + args + " > " +
                          capture.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  CommandResult res;
  res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream in(capture);
  std::stringstream ss;
  ss << in.rdbuf();
  res.output = ss.str();
  return res;
}

}  // namespace

TEST_CASE("cli: exit codes are 0 ok, 1 usage or config error") {
  const fs::path dir = fs::temp_directory_path() / "experior_cli_usage";
  fs::remove_all(dir);
  fs::create_directories(dir);

  CommandResult r = run_cli("run-bandit", dir / "usage.txt");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("--config") != std::string::npos);

  r = run_cli("--help", dir / "help.txt");
  CHECK(r.exit_code == 0);

  r = run_cli("gen-demos --config " + (dir / "missing.json").string(),
              dir / "cfg.txt");
  CHECK(r.exit_code == 1);

  fs::remove_all(dir);
}

TEST_CASE("cli: run-bandit writes records, report and aggregates") {
  const fs::path dir = fs::temp_directory_path() / "experior_cli_smoke";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const fs::path cfg_path = dir / "smoke.json";
  {
    std::ofstream cfg(cfg_path);
    cfg << R"({
  "env": {"kind": "bandit", "arms": 3},
  "experiment": {"episodes": 20, "tasks_per_distribution": 2, "seed": 7,
                 "workers": 1, "entropy_mc_samples": 256},
  "distributions": {"mode": "explicit",
                    "beta_params": [[[2.0, 1.0], [1.0, 2.0], [1.0, 1.0]]]},
  "demos": {"count": 20, "beta": "inf"},
  "prior": {"lambda_star": 2.0, "beta_eff": 10.0, "reference_samples": 64,
            "iterations": 50, "step_size": 0.05},
  "sgld": {"step_size": 0.005, "steps": 10, "thinning": 1,
           "temperature": 1.0},
  "agents": ["naive-ucb", "bc"],
  "agent": {"ts_burn_in_steps": 50, "ts_burn_in_step_size": 0.01}
})";
  }

  const fs::path out_dir = dir / "out";
  CommandResult r = run_cli("run-bandit --config " + cfg_path.string() +
                                " --out " + out_dir.string(),
                            dir / "run.txt");
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  for (const char* name :
       {"records.csv", "report.json", "aggregate_overall.csv",
        "aggregate_by_bin.csv", "aggregate_by_dist.csv"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(out_dir / name));
    CHECK(fs::file_size(out_dir / name) > 0);
  }

  fs::remove_all(dir);
}
