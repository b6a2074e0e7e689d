#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef CMPMORT_CLI_PATH
#error "CMPMORT_CLI_PATH must point at the built binary"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CMPMORT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tmp_dir(const std::string& name) {
  const std::string d = (fs::temp_directory_path() / name).string();
  fs::remove_all(d);
  return d;
}

const std::string kTinyFit =
    " --chains 2 --n-keep 60 --burn-in 80 --thin 1 --seed 11"
    " --set synthetic.ages=5 --set synthetic.years=8 --set synthetic.holdout_years=3";

}  // namespace

TEST_CASE("fit smoke run writes chains, acceptance, convergence and manifest") {
  const std::string out = tmp_dir("cli_fit");
  REQUIRE(run("fit --structure lc --likelihood cmp --out " + out + kTinyFit) == 0);
  CHECK(fs::exists(out + "/chain_1.csv"));
  CHECK(fs::exists(out + "/chain_2.csv"));
  CHECK(fs::exists(out + "/acceptance.csv"));
  CHECK(fs::exists(out + "/convergence.csv"));
  CHECK(fs::exists(out + "/manifest.json"));
  const std::string conv = slurp(out + "/convergence.csv");
  CHECK(conv.find("psrf") != std::string::npos);
  CHECK(conv.find("nu") != std::string::npos);
}

TEST_CASE("same seed reruns are byte-identical") {
  const std::string a = tmp_dir("cli_det_a");
  const std::string b = tmp_dir("cli_det_b");
  REQUIRE(run("fit --out " + a + kTinyFit) == 0);
  REQUIRE(run("fit --out " + b + kTinyFit) == 0);
  CHECK(slurp(a + "/chain_1.csv") == slurp(b + "/chain_1.csv"));
  CHECK(slurp(a + "/chain_2.csv") == slurp(b + "/chain_2.csv"));
  CHECK(slurp(a + "/acceptance.csv") == slurp(b + "/acceptance.csv"));
}

TEST_CASE("manifest records the nu prior override") {
  const std::string out = tmp_dir("cli_prior");
  REQUIRE(run("fit --nu-prior gamma:1,100 --out " + out + kTinyFit) == 0);
  const std::string manifest = slurp(out + "/manifest.json");
  CHECK(manifest.find("gamma:1,100") != std::string::npos);
}

TEST_CASE("diagnose, forecast and score consume a fit directory") {
  const std::string out = tmp_dir("cli_post");
  REQUIRE(run("fit --out " + out + kTinyFit + " --n-keep 1000") == 0);

  REQUIRE(run("diagnose --run " + out) == 0);
  CHECK(fs::exists(out + "/residuals.csv"));
  CHECK(fs::exists(out + "/residuals.svg"));
  CHECK(slurp(out + "/verdict.txt").find("chi-squared") != std::string::npos);

  REQUIRE(run("forecast --run " + out + " --horizon 3") == 0);
  CHECK(fs::exists(out + "/forecast.csv"));
  CHECK(fs::exists(out + "/coverage.csv"));
  CHECK(fs::exists(out + "/fan_age_0.svg"));
  CHECK(slurp(out + "/forecast.csv").find("0.975") != std::string::npos);

  REQUIRE(run("score --run " + out) == 0);
  const std::string scores = slurp(out + "/scores.csv");
  CHECK(scores.find("logs") != std::string::npos);
  CHECK(scores.find("crps") != std::string::npos);
  CHECK(scores.find("dss") != std::string::npos);
}

TEST_CASE("cohort-structure fit runs end to end") {
  const std::string out = tmp_dir("cli_lcc");
  REQUIRE(run("fit --structure lcc --likelihood cmp --out " + out +
              " --chains 1 --n-keep 40 --burn-in 60 --thin 1 --seed 5"
              " --set synthetic.ages=5 --set synthetic.years=8"
              " --set synthetic.structure=lcc") == 0);
  const std::string head = slurp(out + "/chain_1.csv").substr(0, 400);
  CHECK(head.find("gamma.1") != std::string::npos);
  CHECK(head.find("rho_gamma") != std::string::npos);
  REQUIRE(run("diagnose --run " + out) == 0);
}

TEST_CASE("sensitivity writes one density column per prior") {
  const std::string out = tmp_dir("cli_sens");
  REQUIRE(run("sensitivity --out " + out + kTinyFit +
              " --chains 1 --priors flat --priors gamma:1,1") == 0);
  const std::string head = slurp(out + "/sensitivity.csv").substr(0, 200);
  CHECK(head.find("flat") != std::string::npos);
  CHECK(head.find("gamma:1,1") != std::string::npos);
}

TEST_CASE("simulate writes the dataset grids") {
  const std::string out = tmp_dir("cli_sim");
  REQUIRE(run("simulate --out " + out +
              " --set synthetic.ages=4 --set synthetic.years=6"
              " --set synthetic.holdout_years=2") == 0);
  CHECK(fs::exists(out + "/deaths.csv"));
  CHECK(fs::exists(out + "/exposures.csv"));
  CHECK(fs::exists(out + "/holdout_deaths.csv"));
}

TEST_CASE("exit codes by error class") {
  CHECK(run("fit --set no.such.key=1 --out /tmp/cli_err") == 2);   // config
  CHECK(run("fit --set data.source=hmd --out /tmp/cli_err") == 2); // missing paths
  CHECK(run("fit --set data.source=hmd --set data.deaths=/nope.txt"
            " --set data.exposures=/nope2.txt --out /tmp/cli_err") == 3);  // data
  CHECK(run("diagnose --run /tmp/definitely_missing_run_dir") == 3);
  CHECK(run("bogus-subcommand") == 2);
}
