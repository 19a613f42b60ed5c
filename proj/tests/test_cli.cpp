// Drives the installed CLI binary end to end: subcommand wiring, exit codes,
// and file outputs. The binary path comes in through SQVI_CLI_PATH.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = SQVI_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sqvi_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
    ::unsetenv("SQVI_OUT_DIR");
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
  const std::string cmd = "'" + kCli + "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("gen then check round-trips with exit 0") {
  TempDir tmp;
  const fs::path game = tmp.path / "g.json";
  CHECK(run("gen --seed 7 --dims 3,2,2 --gamma 0.9 --out '" + game.string() + "'") == 0);
  CHECK(run("check --game '" + game.string() + "'") == 0);
}

TEST_CASE("check flags a corrupted game with exit 1") {
  TempDir tmp;
  const fs::path game = tmp.path / "g.json";
  REQUIRE(run("gen --seed 7 --dims 2,2,2 --gamma 0.8 --out '" + game.string() + "'") == 0);
  std::string text = slurp(game);
  const auto pos = text.find("\"gamma\": ");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 9, "\"gamma\": 1.5 , \"x\": ");
  std::ofstream(game) << text;
  CHECK(run("check --game '" + game.string() + "'") == 1);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run("--definitely-not-a-flag") == 2);
  CHECK(run("run --iters -3") == 2);
  CHECK(run("") == 2);  // a subcommand is required
}

TEST_CASE("oracle certifies the builtin game with exit 0") {
  TempDir tmp;
  const fs::path cert = tmp.path / "cert.json";
  CHECK(run("oracle --game paper-sec5 --out '" + cert.string() + "'") == 0);
  const std::string doc = slurp(cert);
  CHECK(doc.find("\"multiplicity\": 1") != std::string::npos);
}

TEST_CASE("oracle reports a game without deterministic equilibrium with exit 1") {
  TempDir tmp;
  const fs::path game = tmp.path / "noeq.json";
  // This generated instance has no verified pair (greedy play cycles).
  REQUIRE(run("gen --seed 19 --dims 2,2,2 --gamma 0.8 --out '" + game.string() + "'") == 0);
  CHECK(run("oracle --game '" + game.string() + "'") == 1);
}

TEST_CASE("oracle refuses an over-budget game with exit 1") {
  TempDir tmp;
  const fs::path game = tmp.path / "big.json";
  REQUIRE(run("gen --seed 1 --dims 5,4,4 --gamma 0.9 --out '" + game.string() + "'") == 0);
  CHECK(run("oracle --game '" + game.string() + "'") == 1);
}

TEST_CASE("run without a reference still writes traces") {
  TempDir tmp;
  const fs::path game = tmp.path / "noeq.json";
  REQUIRE(run("gen --seed 19 --dims 2,2,2 --gamma 0.8 --out '" + game.string() + "'") == 0);
  const fs::path out = tmp.path / "out";
  CHECK(run("run --game '" + game.string() + "' --iters 30 --seeds 0,1 --out '" +
            out.string() + "'") == 0);
  const std::string csv = slurp(out / "trace_seed0.csv");
  CHECK(csv.find("nan") != std::string::npos);  // error columns are unavailable
  CHECK(slurp(out / "summary.json").find("\"bounds_available\": false") !=
        std::string::npos);
}

TEST_CASE("the builtin 5-seed run satisfies its bounds end to end") {
  TempDir tmp;
  const fs::path out = tmp.path / "full";
  REQUIRE(run("run --game paper-sec5 --iters 60 --seeds 0..4 --out '" +
              out.string() + "'") == 0);
  for (int seed = 0; seed < 5; ++seed) {
    CHECK(fs::exists(out / ("trace_seed" + std::to_string(seed) + ".csv")));
  }
  const std::string summary = slurp(out / "summary.json");
  CHECK(summary.find("\"bounds_available\": true") != std::string::npos);
  CHECK(summary.find("\"all_bounds_hold\": true") != std::string::npos);
  CHECK(summary.find("\"cycle\": \"none\"") != std::string::npos);
}

TEST_CASE("a fixed eps drives the comparison bound to its asymptote") {
  TempDir tmp;
  const fs::path out = tmp.path / "fixed";
  REQUIRE(run("run --game paper-sec5 --iters 60 --seeds 0 --eps fixed:10 --out '" +
              out.string() + "'") == 0);
  std::istringstream csv(slurp(out / "trace_seed0.csv"));
  std::string line, last;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) last = line;
  std::stringstream row(last);
  std::string field;
  for (int i = 0; i <= 10; ++i) std::getline(row, field, ',');
  // bound_theorem_global tail: 3 * 10 / (1 - 0.8) = 150 plus the tiny
  // geometric remainder at k = 60.
  CHECK(std::abs(std::stod(field) - 150.0) <= 1e-3);
}

TEST_CASE("experiment writes the three figure datasets") {
  TempDir tmp;
  const fs::path out = tmp.path / "exp";
  CHECK(run("experiment --iters 20 --out '" + out.string() + "'") == 0);
  for (const char* name : {"fig1_epsilon.csv", "fig2_leader_error.csv",
                           "fig3_follower_error.csv", "experiment_summary.json"}) {
    CHECK(fs::exists(out / name));
  }
  const std::string fig1 = slurp(out / "fig1_epsilon.csv");
  CHECK(fig1.rfind("k,eps_max,eps_mean,eps_global\n", 0) == 0);
  // Per row: max curve >= mean curve, and the global line dominates both.
  std::istringstream rows(fig1);
  std::string line;
  std::getline(rows, line);
  double eps_global = 0.0, running_max = 0.0;
  while (std::getline(rows, line)) {
    std::stringstream ss(line);
    std::string k, emax, emean, eglobal;
    std::getline(ss, k, ',');
    std::getline(ss, emax, ',');
    std::getline(ss, emean, ',');
    std::getline(ss, eglobal, ',');
    CHECK(std::stod(emax) >= std::stod(emean));
    CHECK(std::stod(eglobal) >= std::stod(emax));
    eps_global = std::stod(eglobal);
    running_max = std::max(running_max, std::stod(emax));
  }
  CHECK(eps_global == running_max);  // the global line is max over k of eps_max

  const std::string summary = slurp(out / "experiment_summary.json");
  CHECK(summary.find("\"errors_below_bounds\": true") != std::string::npos);
  CHECK(summary.find("\"bounds_nonvanishing\": true") != std::string::npos);
}

TEST_CASE("zero and file initializations are honored") {
  TempDir tmp;
  const fs::path out = tmp.path / "zero";
  CHECK(run("run --game paper-sec5 --iters 0 --seeds 0 --init zero --out '" +
            out.string() + "'") == 0);
  // K = 0 gives a single-row trace with zero norms.
  std::istringstream csv(slurp(out / "trace_seed0.csv"));
  std::string header, row, extra;
  std::getline(csv, header);
  REQUIRE(std::getline(csv, row));
  CHECK_FALSE(std::getline(csv, extra));
  // Zero norms, and the all-tied greedy pair breaks to the lowest indices.
  CHECK(row.find(",0,0,0,00,") != std::string::npos);

  const fs::path init = tmp.path / "init.json";
  std::ofstream(init) << R"({"q1": [[[0.25, 0.25],[0.25, 0.25]]],
                            "q2": [[[0.25, 0.25],[0.25, 0.25]]]})";
  const fs::path out2 = tmp.path / "file_init";
  CHECK(run("run --game paper-sec5 --iters 0 --seeds 0 --init file:" +
            init.string() + " --out '" + out2.string() + "'") == 0);
  const std::string csv2 = slurp(out2 / "trace_seed0.csv");
  CHECK(csv2.find(",0.25,0.25,") != std::string::npos);
}

TEST_CASE("malformed numeric flags exit with 2") {
  CHECK(run("run --seeds 1,x,3") == 2);
  CHECK(run("gen --dims 3,2 --out /dev/null") == 2);
  CHECK(run("gen --gamma 1.5 --out /dev/null") == 2);
  CHECK(run("run --eps fixed:abc") == 2);
}

TEST_CASE("SQVI_OUT_DIR overrides the output directory") {
  TempDir tmp;
  const fs::path env_dir = tmp.path / "env_out";
  const fs::path flag_dir = tmp.path / "flag_out";
  const std::string cmd = "SQVI_OUT_DIR='" + env_dir.string() + "' '" + kCli +
                          "' run --game paper-sec5 --iters 2 --seeds 0 --out '" +
                          flag_dir.string() + "' > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(fs::exists(env_dir / "trace_seed0.csv"));
  CHECK_FALSE(fs::exists(flag_dir));
}
