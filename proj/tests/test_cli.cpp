#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rasgd/cli.hpp"

using namespace rasgd;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

bool has(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

}  // namespace

TEST_CASE("counterexample subcommand") {
  auto r = cli({"counterexample"});
  CHECK(r.code == 0);
  CHECK(has(r.out, "PASS"));
  r = cli({"counterexample", "--x0", "0", "--c", "0"});
  CHECK(has(r.out, "closed form: 0\n"));
  CHECK(has(r.out, "simulated: 0\n"));
  r = cli({"counterexample", "--gamma", "1", "--x0", "1", "--c", "2"});
  CHECK(has(r.out, "closed form: -4\n"));
  CHECK(has(r.out, "PASS"));
}

TEST_CASE("schedule subcommand") {
  auto r = cli({"schedule", "--taus", "1,2"});
  CHECK(r.code == 0);
  CHECK(has(r.out, "order: [1, 1, 2]"));
  CHECK(has(r.out, "K: 3"));
  r = cli({"schedule", "--taus", "1,10"});
  CHECK(has(r.out, "tau_DA: 1.96"));
  r = cli({"schedule", "--taus", "1.5,3", "--harmonize"});
  CHECK(has(r.out, "taus: [2, 4]"));
  r = cli({"schedule", "--taus", "2,3"});
  CHECK(r.code == 3);
  CHECK(has(r.err, "--harmonize"));
}

TEST_CASE("usage errors") {
  CHECK(cli({"schedule", "--taus", "1,2", "--bogus"}).code != 0);
  CHECK(cli({"run", "appendix-f1", "--bogus"}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"run", "/no/such/config.yaml"}).code == 2);
  CHECK(cli({"run", "appendix-f1", "--set", "horizon"}).code == 2);
  CHECK(cli({"run", "appendix-f1", "--set", "horizon=-3"}).code == 2);
  const auto help = cli({"run", "--help"});
  CHECK(help.code == 0);
  for (const char* flag : {"--gamma", "--alpha", "--horizon", "--seeds", "--set", "--run-dir"}) {
    CHECK(has(help.out, flag));
  }
}

TEST_CASE("malformed config file exits 2 with a line diagnostic") {
  const auto p = std::filesystem::temp_directory_path() / "rasgd_cli_bad.yaml";
  std::ofstream(p) << "name: x\nmethods: [rescaled\n";
  const auto r = cli({"run", p.string()});
  CHECK(r.code == 2);
  CHECK(has(r.err, p.string() + ":"));
  std::filesystem::remove(p);
}

TEST_CASE("run echoes overrides into the summary") {
  const auto dir = std::filesystem::temp_directory_path() / "rasgd_cli_run";
  std::filesystem::remove_all(dir);
  const auto r = cli({"run", "appendix-f1", "--gamma=0.05", "--horizon", "200", "--run-dir", dir.string()});
  CHECK(r.code == 0);
  CHECK(has(r.out, "vanilla"));
  CHECK(has(r.out, "rescaled"));
  std::ifstream in(dir / "summary.json");
  std::stringstream s;
  s << in.rdbuf();
  CHECK(has(s.str(), "\"stepsize.gamma\": \"0.05\""));
  CHECK(has(s.str(), "\"stepsize_value\": 0.05"));
  const auto rep = cli({"report", dir.string()});
  CHECK(rep.code == 0);
  CHECK(has(rep.out, "stepsize.gamma = 0.05"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("universal divergence exits nonzero") {
  const auto dir = std::filesystem::temp_directory_path() / "rasgd_cli_div";
  std::filesystem::remove_all(dir);
  const auto r = cli({"run", "appendix-f1", "--gamma", "100", "--run-dir", dir.string()});
  CHECK(r.code == 1);
  CHECK(has(r.err, "diverged"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-harmonic vanilla run exits 3") {
  const auto r = cli({"run", "appendix-f1", "--set", "timing.taus=[2, 3]", "--run-dir",
                      (std::filesystem::temp_directory_path() / "rasgd_cli_nh").string()});
  CHECK(r.code == 3);
}

TEST_CASE("decompose subcommand") {
  auto r = cli({"decompose", "decompose-exact"});
  CHECK(r.code == 0);
  CHECK(has(r.out, "max |nu| 0"));
  CHECK(has(r.out, "holds"));
  r = cli({"decompose", "decompose-gaussian", "--cycles", "2000"});
  CHECK(r.code == 0);
  CHECK(has(r.out, "noise Monte Carlo"));
  r = cli({"decompose", "mnist-style-fixed"});
  CHECK(r.code == 4);
  CHECK(has(r.err, "needs exact local gradients"));
}

TEST_CASE("weights, report and presets subcommands") {
  auto r = cli({"weights", "--taus", "1,2", "--methods", "vanilla,rescaled"});
  CHECK(r.code == 0);
  CHECK(has(r.out, "vanilla: target [0.6666666667, 0.3333333333], measured [0.6666666667, 0.3333333333]"));
  r = cli({"report", "--taus", "1,2,4,8"});
  CHECK(r.code == 0);
  CHECK(has(r.out, "ringleader"));
  CHECK(cli({"report"}).code == 2);
  r = cli({"presets"});
  CHECK(has(r.out, "appendix-f1"));
  CHECK(has(cli({"presets", "counterexample"}).out, "linear"));
}
