#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
// end-to-end checks of the installed command-line interface; the binary is
// spawned the way a user would run it
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "report.hpp"

using Json = nlohmann::ordered_json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string cli() {
  const char* p = std::getenv("ADVGRAD_CLI");
  REQUIRE(p != nullptr);
  return p;
}

std::string data_dir() {
  const char* p = std::getenv("ADVGRAD_DATA");
  REQUIRE(p != nullptr);
  return p;
}

RunResult run(const std::string& args, const std::string& env = "") {
  const std::string out_path = "/tmp/advgrad_cli_test_stdout";
  const std::string err_path = "/tmp/advgrad_cli_test_stderr";
  const std::string cmd = env + (env.empty() ? "" : " ") + cli() + " " + args +
                          " >" + out_path + " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return r;
}

std::string dataset_flags(int limit) {
  return "--images " + data_dir() + "/train-images.idx --labels " +
         data_dir() + "/train-labels.idx --limit " + std::to_string(limit);
}

// a small model trained once and reused across test cases
const std::string& trained_model() {
  static const std::string path = [] {
    const std::string p = "/tmp/advgrad_cli_test_model.advg";
    const RunResult r =
        run("train " + dataset_flags(200) +
            " --arch mlp:64-16-10 --epochs 5 --batch 20 --lr 0.5 --seed 1 "
            "--out " + p);
    REQUIRE(r.exit_code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("--version prints the toolbox version and exits 0") {
  const RunResult r = run("--version");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find(advgrad::toolbox_version()) != std::string::npos);
}

TEST_CASE("missing required dataset flags is a usage error") {
  const RunResult r = run("eval --model /tmp/nonexistent.advg");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("--images") != std::string::npos);
}

TEST_CASE("an incomplete attack names the missing flags") {
  const RunResult r = run("attack " + dataset_flags(10) + " --model " +
                          trained_model() + " --attack pgd-linf --loss "
                          "cross_entropy --nb-iter 5 --eps-iter 0.1 "
                          "--rand-init true");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("--eps") != std::string::npos);
}

TEST_CASE("an unknown attack lists the available ones") {
  const RunResult r = run("attack " + dataset_flags(10) + " --model " +
                          trained_model() + " --attack warp-drive");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("Available attacks") != std::string::npos);
  CHECK(r.err.find("pgd-linf") != std::string::npos);
}

TEST_CASE("corrupt dataset files exit with the data error code") {
  const std::string bad = "/tmp/advgrad_cli_test_bad.idx";
  std::ofstream(bad) << "not an idx file";
  const RunResult r = run("eval --images " + bad + " --labels " + bad +
                          " --model " + trained_model());
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("error") != std::string::npos);
  std::remove(bad.c_str());
}

TEST_CASE("a missing model file exits with the data error code") {
  const RunResult r =
      run("eval " + dataset_flags(10) + " --model /tmp/nonexistent.advg");
  CHECK(r.exit_code == 3);
}

TEST_CASE("train logs per-epoch losses and saves a loadable model") {
  const std::string& model = trained_model();
  std::ifstream is(model, std::ios::binary);
  CHECK(is.good());
  // reuse through eval: clean accuracy on the training slice is high
  const RunResult r =
      run("eval " + dataset_flags(200) + " --model " + model + " --seed 0");
  REQUIRE(r.exit_code == 0);
  const Json report = Json::parse(r.out);
  CHECK(advgrad::validate_report(report) == std::nullopt);
  CHECK(report.at("clean_acc").get<double>() > 0.9);
  CHECK(report.at("attack").is_null());
}

TEST_CASE("attack emits a validating report with the echoed config") {
  const RunResult r = run(
      "attack " + dataset_flags(20) + " --model " + trained_model() +
      " --attack pgd-linf --loss cross_entropy --eps 0.3 --nb-iter 10 "
      "--eps-iter 0.05 --rand-init true --seed 5");
  REQUIRE(r.exit_code == 0);
  const Json report = Json::parse(r.out);
  CHECK(advgrad::validate_report(report) == std::nullopt);
  CHECK(report.at("version").get<std::string>() ==
        advgrad::toolbox_version_report());
  CHECK(report.at("attack").at("name").get<std::string>() == "pgd-linf");
  CHECK(report.at("attack").at("eps").get<double>() == 0.3);
  CHECK(report.at("seed").get<int>() == 5);
  CHECK(report.at("adv_acc").get<double>() <=
        report.at("clean_acc").get<double>());
  CHECK(report.at("model_digest").get<std::string>().size() == 16);
}

TEST_CASE("identical invocations produce identical reports modulo wall time") {
  const std::string args =
      "attack " + dataset_flags(15) + " --model " + trained_model() +
      " --attack gradient-sign --loss cross_entropy --eps 0.2 --seed 9";
  const RunResult a = run(args);
  const RunResult b = run(args);
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  Json ja = Json::parse(a.out), jb = Json::parse(b.out);
  ja.erase("wall_time_s");
  jb.erase("wall_time_s");
  CHECK(ja.dump() == jb.dump());
}

TEST_CASE("defend-eval with an empty pipeline matches the bare attack") {
  const std::string attack_flags =
      " --attack gradient-sign --loss cross_entropy --eps 0.2 --seed 4";
  const RunResult bare = run("attack " + dataset_flags(15) + " --model " +
                             trained_model() + attack_flags);
  const RunResult defended =
      run("defend-eval " + dataset_flags(15) + " --model " + trained_model() +
          " --defense \"\"" + attack_flags);
  REQUIRE(bare.exit_code == 0);
  REQUIRE(defended.exit_code == 0);
  Json ja = Json::parse(bare.out), jb = Json::parse(defended.out);
  ja.erase("wall_time_s");
  jb.erase("wall_time_s");
  CHECK(ja.dump() == jb.dump());
}

TEST_CASE("defend-eval records the pipeline and bpda flag in the report") {
  const RunResult r =
      run("defend-eval " + dataset_flags(15) + " --model " + trained_model() +
          " --defense bitsqueeze:1 --bpda --attack gradient-sign "
          "--loss cross_entropy --eps 0.3 --seed 2");
  REQUIRE(r.exit_code == 0);
  const Json report = Json::parse(r.out);
  CHECK(report.at("defense").get<std::string>() == "bitsqueeze:1");
  CHECK(report.at("bpda").get<bool>() == true);
}

TEST_CASE("ADVGRAD_SEED supplies the default seed and the flag wins") {
  const std::string base =
      "eval " + dataset_flags(10) + " --model " + trained_model();
  const RunResult env_only = run(base, "ADVGRAD_SEED=42");
  REQUIRE(env_only.exit_code == 0);
  CHECK(Json::parse(env_only.out).at("seed").get<int>() == 42);
  const RunResult flag_wins = run(base + " --seed 7", "ADVGRAD_SEED=42");
  REQUIRE(flag_wins.exit_code == 0);
  CHECK(Json::parse(flag_wins.out).at("seed").get<int>() == 7);
  const RunResult bad_env = run(base, "ADVGRAD_SEED=banana");
  CHECK(bad_env.exit_code == 2);
}

TEST_CASE("--out appends report lines to a file") {
  const std::string out = "/tmp/advgrad_cli_test_reports.jsonl";
  std::remove(out.c_str());
  const std::string args = "eval " + dataset_flags(10) + " --model " +
                           trained_model() + " --seed 0 --out " + out;
  REQUIRE(run(args).exit_code == 0);
  REQUIRE(run(args).exit_code == 0);
  std::ifstream is(out);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    CHECK(advgrad::validate_report(Json::parse(line)) == std::nullopt);
    ++lines;
  }
  CHECK(lines == 2);
  std::remove(out.c_str());
}
