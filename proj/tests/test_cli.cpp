#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("halvinglab_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Result cli(const std::string& args, const std::string& env = "") {
  const fs::path out = scratch() / "stdout.txt";
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = "env -u HALVINGLAB_SEED " + env + " '" HALVINGLAB_CLI "' " + args + " > '" + out.string() +
                          "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("generate") {
  const fs::path spec = scratch() / "gen.json";
  write(spec, R"({"family": "exponential_decay", "count": 6, "steps": 9, "seed": 1, "noise_std": 0.05})");
  const auto a = cli("generate --config " + spec.string() + " --out " + (scratch() / "a.csv").string());
  CHECK(a.code == 0);
  CHECK(a.out.find("N=6 T=9 D=3") != std::string::npos);
  CHECK(count_lines(scratch() / "a.csv") == 1 + 6 * 9);
  CHECK(fs::exists(scratch() / "a.resolved.json"));

  CHECK(cli("generate --config " + spec.string() + " --out " + (scratch() / "b.csv").string()).code == 0);
  CHECK(slurp(scratch() / "a.csv") == slurp(scratch() / "b.csv"));

  // Seed precedence: flag, then HALVINGLAB_SEED, then the spec.
  CHECK(cli("generate --config " + spec.string() + " --seed 9 --out " + (scratch() / "c.csv").string()).code == 0);
  CHECK(cli("generate --config " + spec.string() + " --out " + (scratch() / "d.csv").string(),
            "HALVINGLAB_SEED=9")
            .code == 0);
  CHECK(slurp(scratch() / "c.csv") == slurp(scratch() / "d.csv"));
  CHECK(slurp(scratch() / "c.csv") != slurp(scratch() / "a.csv"));

  write(scratch() / "bad.json", R"({"family": "power_law", "count": "six", "steps": 9})");
  const auto bad = cli("generate --config " + (scratch() / "bad.json").string() + " --out x.csv");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("generate.count") != std::string::npos);
  CHECK(bad.err.find("status=error kind=config") == 0);

  write(scratch() / "broken.json", "{\"family\": ");
  CHECK(cli("generate --config " + (scratch() / "broken.json").string() + " --out x.csv").code == 2);
  CHECK(cli("generate --config /nonexistent.json --out x.csv").code == 3);
  CHECK(cli("generate --config " + spec.string() + " --out /proc/forbidden/x.csv").code == 3);
  CHECK(cli("generate --bogus").code == 2);
}

TEST_CASE("run") {
  const std::string curves = std::string(HALVINGLAB_DATA_DIR) + "/crossing_heavy.csv";
  const auto oracle = cli("run --curves " + curves + " --ranker oracle --final-candidates 1 --out " +
                          (scratch() / "run_oracle").string());
  CHECK(oracle.code == 0);
  CHECK(oracle.out.find(" regret=0 ") != std::string::npos);
  CHECK(fs::exists(scratch() / "run_oracle" / "trace.json"));
  CHECK(fs::exists(scratch() / "run_oracle" / "trace.csv"));

  CHECK(cli("run --curves /nonexistent.csv --ranker oracle").code == 3);
  CHECK(cli("run --curves " + curves + " --ranker best").code == 2);
  CHECK(cli("run --curves " + curves + " --ranker gp").code == 2);
  CHECK(cli("run --curves " + curves + " --final-candidates 500").code == 2);

  const fs::path gp_dir = scratch() / "run_gp";
  const auto gp = cli("run --curves " + curves + " --ranker gp --training-curves 8 --final-candidates 8 --seed 3 --out " +
                      gp_dir.string());
  REQUIRE(gp.code == 0);
  const auto trace = nlohmann::json::parse(slurp(gp_dir / "trace.json"));
  const long long cells = static_cast<long long>(trace["observed_cells"].size());
  CHECK(trace["compute_units"].get<long long>() - cells == 8 * 30);
  CHECK(trace["config"]["gp_training_curve_ids"].size() == 8);

  // Feeding the resolved config back reproduces the run.
  const auto again = cli("run --config " + (gp_dir / "resolved_config.json").string() + " --out " +
                         (scratch() / "run_gp2").string());
  CHECK(again.code == 0);
  CHECK(again.out == gp.out);
  CHECK(slurp(gp_dir / "trace.json") == slurp(scratch() / "run_gp2" / "trace.json"));
}

TEST_CASE("sweep and report") {
  const std::string config = std::string(HALVINGLAB_CONFIG_DIR) + "/smoke_sweep.json";
  const fs::path one = scratch() / "sweep1";
  const fs::path three = scratch() / "sweep3";
  REQUIRE(cli("sweep --config " + config + " --jobs 1 --out " + one.string()).code == 0);
  REQUIRE(cli("sweep --config " + config + " --jobs 3 --out " + three.string()).code == 0);
  // rankers x F x (C or 1) x trials = (1 + 1 + 1) x 2 x 1 x 2.
  CHECK(count_lines(one / "results.csv") == 1 + 12);
  CHECK(count_lines(one / "aggregate.csv") == 1 + 6);
  CHECK(slurp(one / "results.csv") == slurp(three / "results.csv"));
  CHECK(slurp(one / "aggregate.csv") == slurp(three / "aggregate.csv"));

  const fs::path replay = scratch() / "sweep_replay";
  REQUIRE(cli("sweep --config " + (one / "resolved_config.json").string() + " --out " + replay.string()).code == 0);
  CHECK(slurp(one / "results.csv") == slurp(replay / "results.csv"));

  const fs::path over = scratch() / "sweep_over";
  REQUIRE(cli("sweep --config " + config + " --ranker current --final-candidates 1,2,4 --trials 3 --out " +
              over.string())
              .code == 0);
  CHECK(count_lines(over / "results.csv") == 1 + 9);

  const fs::path rep = scratch() / "report";
  const auto r = cli("report --results " + (one / "aggregate.csv").string() + " --out " + rep.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(rep / "series_current.csv"));
  CHECK(fs::exists(rep / "series_oracle.csv"));
  CHECK(fs::exists(rep / "series_gp_C4.csv"));
  CHECK(count_lines(rep / "series_gp_C4.csv") == 1 + 2);
  CHECK(r.out.find("ranker") != std::string::npos);

  const fs::path rep2 = scratch() / "report2";
  CHECK(cli("report --results " + (one / "results.csv").string() + " --out " + rep2.string()).code == 0);
  CHECK(slurp(rep / "series_current.csv") == slurp(rep2 / "series_current.csv"));

  write(scratch() / "empty.csv",
        "ranker,F,C,trial,seed,picked_id,picked_perf,best_perf,absolute_regret,relative_regret,compute_units,"
        "relative_compute\n");
  const auto empty = cli("report --results " + (scratch() / "empty.csv").string() + " --out " + rep.string());
  CHECK(empty.code == 2);
  CHECK(empty.err.find("nothing to report") != std::string::npos);
  CHECK(cli("report --results /nonexistent.csv").code == 3);
}
