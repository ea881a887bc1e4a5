#include <Eigen/Dense>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "mda/config.hpp"
#include "mda/errors.hpp"
#include "mda/run.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace mda;

namespace {

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("mdaimpute_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

void write_continuous(const fs::path& path, int n) {
  Rng rng(3);
  Eigen::MatrixXd alpha(3, 2);
  alpha << 0.0, 0.4, 0.2, 0.8, 0.4, 1.2;
  const auto t = mdatest::simulate_trial(n, alpha, mdatest::exchangeable(3, 0.5), rng);
  const Eigen::MatrixXd y = mdatest::apply_mar_dropout(t.y, mdatest::dropout_intercept(0.25, 3), 0.2, rng);
  std::ofstream out(path);
  write_completed_csv(out, mdatest::continuous_data(t, y), y, 0);
}

void write_binary(const fs::path& path, int n) {
  Rng rng(4);
  Eigen::MatrixXd alpha(2, 2);
  alpha << 0.0, 0.5, 0.1, 0.7;
  const auto t = mdatest::simulate_trial(n, alpha, mdatest::exchangeable(2, 0.5), rng);
  const Eigen::MatrixXd y = mdatest::apply_mar_dropout(t.y, mdatest::dropout_intercept(0.25, 2), 0.0, rng);
  const auto d = mdatest::categorical_data(t, mdatest::categorize_latent(y, {0.0}), 2);
  Eigen::MatrixXd w = d.outcomes();
  std::ofstream out(path);
  write_completed_csv(out, d, w, 0);
}

int run(const std::string& args, const std::string& tag) {
  const fs::path log = workdir() / (tag + ".log");
  const std::string cmd = std::string(MDAIMPUTE_EXE) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config(const std::string& input, const std::string& outcome, const std::string& extra) {
  return "[data]\ninput = " + input + "\noutcome = " + outcome +
         "\n[chain]\niterations = 600\nburn_in = 100\nseed = 11\n[imputation]\nm = 5\nreference_arm = control\n"
         "treatment_columns = x2\nmechanism = J2R\n" +
         extra;
}

}  // namespace

TEST_CASE("config parsing and round trip") {
  const auto c = parse_config(
      "[data]\ninput = d.csv\n[prior]\npreset = jeffreys-flat\n[chain]\nseed = 5\nchains = 2\n"
      "[imputation]\ntreatment_columns = x2, x3\nresponder_categories = 2, 3\n",
      "/base");
  CHECK(c.input == "/base/d.csv");
  CHECK(c.preset == "jeffreys-flat");
  CHECK(c.chains == 2);
  CHECK(c.treatment_columns == std::vector<std::string>{"x2", "x3"});
  CHECK(c.responder_categories == std::vector<int>{2, 3});
  const auto again = parse_config(c.to_ini());
  CHECK(again.to_ini() == c.to_ini());

  try {
    parse_config("[chain]\nsed = 5\n");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("sed") != std::string::npos);
  }
  auto bad = parse_config("[data]\ninput = x\noutcome = binary\n[sampler]\nmethod = fda\n[chain]\nseed = 1\n");
  CHECK_THROWS_AS(bad.validate(), Error);
  auto noseed = parse_config("[data]\ninput = x\n");
  CHECK_THROWS_AS(noseed.validate(), Error);
}

TEST_CASE("exit codes map error kinds") {
  CHECK(exit_code(Error(ErrorKind::Config, "x")) == 2);
  CHECK(exit_code(Error(ErrorKind::UnknownArm, "x")) == 2);
  CHECK(exit_code(Error(ErrorKind::Data, "x")) == 3);
  CHECK(exit_code(Error(ErrorKind::MissingHistory, "x")) == 3);
  CHECK(exit_code(Error(ErrorKind::NonpositiveDf, "x")) == 4);
  CHECK(exit_code(ImproperPosterior(1, "x")) == 4);
  CHECK(exit_code(Error(ErrorKind::NotPositiveDefinite, "x")) == 5);
}

TEST_CASE("command line: errors") {
  const fs::path dir = workdir();
  write_continuous(dir / "cont.csv", 60);
  write_binary(dir / "bin.csv", 60);
  put(dir / "bad.csv", "id,arm,x1,y1\na,control,1,oops\n");

  put(dir / "fda_binary.ini", config("bin.csv", "binary", "[sampler]\nmethod = fda\n"));
  CHECK(run("fit --config " + (dir / "fda_binary.ini").string(), "e1") == 2);

  put(dir / "noseed.ini", "[data]\ninput = cont.csv\n");
  CHECK(run("fit --config " + (dir / "noseed.ini").string(), "e2") == 2);

  put(dir / "badcsv.ini", config("bad.csv", "continuous", ""));
  CHECK(run("validate --config " + (dir / "badcsv.ini").string(), "e3") == 3);

  put(dir / "arm.ini", config("cont.csv", "continuous", "").replace(
                           config("cont.csv", "continuous", "").find("control"), 7, "placebo"));
  CHECK(run("impute --config " + (dir / "arm.ini").string(), "e4") == 2);

  CHECK(run("fit", "e5") == 2);
  CHECK(run("frobnicate --config x", "e6") == 2);
}

TEST_CASE("command line: validate report") {
  const fs::path dir = workdir();
  write_continuous(dir / "cont.csv", 60);
  put(dir / "v.ini", config("cont.csv", "continuous", ""));
  REQUIRE(run("validate --config " + (dir / "v.ini").string(), "v") == 0);
  const std::string text = slurp(dir / "v.log");
  CHECK(text.find("subjects 60, visits 3, covariates 2") != std::string::npos);
}

TEST_CASE("command line: analyze is reproducible byte for byte") {
  const fs::path dir = workdir();
  write_continuous(dir / "cont.csv", 60);
  put(dir / "a.ini", config("cont.csv", "continuous", "threads = 3\n"));
  const fs::path o1 = dir / "run1", o2 = dir / "run2";
  REQUIRE(run("analyze --config " + (dir / "a.ini").string() + " --out " + o1.string(), "a1") == 0);
  REQUIRE(run("analyze --config " + (dir / "a.ini").string() + " --out " + o2.string(), "a2") == 0);
  for (const char* f : {"draws.csv", "diagnostics.json", "completed_1.csv", "completed_5.csv", "mi.json"}) {
    INFO(f);
    REQUIRE(fs::exists(o1 / f));
    CHECK(slurp(o1 / f) == slurp(o2 / f));
  }
  const auto mi = nlohmann::json::parse(slurp(o1 / "mi.json"));
  CHECK(mi["m"] == 5);
  CHECK(mi["mechanism"] == "J2R");
  // A different seed changes the draws.
  const fs::path o3 = dir / "run3";
  REQUIRE(run("fit --config " + (dir / "a.ini").string() + " --seed 12 --out " + o3.string(), "a3") == 0);
  CHECK(slurp(o1 / "draws.csv") != slurp(o3 / "draws.csv"));
  // The manifest reloads to the same configuration.
  const auto manifest = load_config((o1 / "manifest.ini").string());
  CHECK(manifest.seed == std::optional<std::uint64_t>(11));
  CHECK(manifest.m_imputations == 5);
}

TEST_CASE("command line: binary imputation with the Metropolis sampler") {
  const fs::path dir = workdir();
  write_binary(dir / "bin.csv", 80);
  put(dir / "b.ini", config("bin.csv", "binary",
                            "[sampler]\nmethod = imh-joint\n[general_prior]\nweight = det-power\ndelta = 1\n"));
  const fs::path o = dir / "bin_out";
  REQUIRE(run("analyze --config " + (dir / "b.ini").string() + " --out " + o.string(), "b") == 0);
  const auto diag = nlohmann::json::parse(slurp(o / "diagnostics.json"));
  CHECK(diag["chains"][0].contains("imh_acceptance_rate"));
  const std::string completed = slurp(o / "completed_3.csv");
  CHECK(completed.find("NA") == std::string::npos);
  CHECK(completed.find(",3\n") != std::string::npos);
}
