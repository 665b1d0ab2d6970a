#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rasgd/config.hpp"
#include "rasgd/experiments.hpp"
#include "rasgd/rng.hpp"

using namespace rasgd;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("rasgd_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig quadratic_config(std::vector<double> centers, std::vector<double> taus, double gamma) {
  ExperimentConfig c;
  c.name = "unit";
  c.methods = {Method::Rescaled};
  QuadraticProblem q;
  for (double v : centers) q.locals.push_back(QuadraticSpec::scalar(1.0, Vector::Constant(1, v)));
  q.x0 = Vector::Constant(1, 5.0);
  c.problem = q;
  c.taus = std::move(taus);
  c.stepsize = gamma;
  c.horizon = 40;
  return c;
}

}  // namespace

TEST_CASE("aggregate examples") {
  Series a{{0, 10}, {1, 1}};
  Series b{{0, 10}, {3, 3}};
  const auto one = aggregate({a}, 10, 5);
  CHECK(one.grid == std::vector<double>{0, 2.5, 5, 7.5, 10});
  CHECK(one.median == one.min);
  CHECK(one.max == one.min);
  const auto two = aggregate({a, b}, 10, 11);
  for (std::size_t i = 0; i < two.grid.size(); ++i) {
    CHECK(two.median[i] == 2.0);
    CHECK(two.min[i] == 1.0);
    CHECK(two.max[i] == 3.0);
  }
  Series ramp{{0, 4}, {0, 8}};
  CHECK(interpolate(ramp, 1) == 2.0);
  CHECK(interpolate(ramp, 10) == 8.0);
  CHECK_THROWS(aggregate({Series{}}, 10, 5));
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 3, 2}) == 2.5);
}

TEST_CASE("aggregate is permutation invariant and ordered") {
  RandomStream r(8, StreamPurpose::Probe, 0, 0);
  std::vector<Series> s;
  for (int k = 0; k < 5; ++k) {
    Series x;
    double t = 0;
    while (t < 20) {
      x.time.push_back(t);
      x.value.push_back(r.normal());
      t += 0.1 + r.uniform();
    }
    s.push_back(x);
  }
  const auto a = aggregate(s, 20, 50);
  std::reverse(s.begin(), s.end());
  std::swap(s[0], s[2]);
  const auto b = aggregate(s, 20, 50);
  CHECK(a.median == b.median);
  CHECK(a.min == b.min);
  CHECK(a.max == b.max);
  for (std::size_t i = 0; i < a.grid.size(); ++i) {
    CHECK(a.min[i] <= a.median[i]);
    CHECK(a.median[i] <= a.max[i]);
  }
  CHECK(a.grid.front() == 0.0);
  CHECK(a.grid.back() == 20.0);
}

TEST_CASE("metrics CSV round trip is exact") {
  RandomStream r(4, StreamPurpose::Probe, 0, 0);
  std::vector<MetricSample> s;
  for (int i = 0; i < 100; ++i) {
    s.push_back({r.uniform() * 1e3, r.normal() * 1e-7, std::exp(r.normal() * 30), r.uniform() / 3, i / 7});
  }
  s.push_back({1.0, std::numeric_limits<double>::infinity(), 0.0, 0.1, 0});
  const auto dir = temp_dir("csv");
  write_metrics_csv(dir / "m.csv", s);
  CHECK(slurp(dir / "m.csv").rfind("time,loss,grad_norm_sq,cumulative_stepsize,cycle_index\n", 0) == 0);
  const auto back = read_metrics_csv(dir / "m.csv");
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back[i].time == s[i].time);
    CHECK(back[i].loss == s[i].loss);
    CHECK(back[i].grad_norm_sq == s[i].grad_norm_sq);
    CHECK(back[i].cumulative_stepsize == s[i].cumulative_stepsize);
    CHECK(back[i].cycle_index == s[i].cycle_index);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation") {
  auto c = quadratic_config({0, 1}, {1, 2}, 0.1);
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.horizon = 0;
  CHECK_THROWS_WITH(bad.validate(), doctest::Contains("horizon"));
  bad = c;
  bad.seeds.clear();
  CHECK_THROWS_WITH(bad.validate(), doctest::Contains("seeds"));
  bad = c;
  bad.grid = {0.1, -1};
  CHECK_THROWS_WITH(bad.validate(), doctest::Contains("grid"));
  bad = c;
  bad.taus = {1, 2, 4};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("single-worker exact gradient descent decreases the loss") {
  auto c = quadratic_config({1}, {1}, 0.05);
  c.sample_every_event = true;
  RunOptions o;
  o.write = false;
  const auto r = run_experiment(c, o);
  const auto& samples = r.methods[0].runs[0].trace.samples;
  REQUIRE(samples.size() > 10);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].time > samples[i - 1].time) CHECK(samples[i].loss < samples[i - 1].loss);
  }
}

TEST_CASE("runs are reproducible and write artifacts") {
  auto c = quadratic_config({0, 1}, {1, 3}, 0.1);
  c.noise = GaussianNoise{0.5};
  c.timing = TimingKind::Exponential;
  c.seeds = {0, 1};
  c.methods = {Method::Rescaled, Method::Malenia};
  c.overrides["horizon"] = "40";
  const auto d1 = temp_dir("run1"), d2 = temp_dir("run2");
  RunOptions o;
  o.run_dir = d1;
  run_experiment(c, o);
  o.run_dir = d2;
  run_experiment(c, o);
  CHECK(slurp(d1 / "rescaled" / "seed-1.csv") == slurp(d2 / "rescaled" / "seed-1.csv"));
  CHECK(slurp(d1 / "malenia" / "seed-0.csv") == slurp(d2 / "malenia" / "seed-0.csv"));
  CHECK(slurp(d1 / "rescaled" / "seed-0.csv") != slurp(d1 / "rescaled" / "seed-1.csv"));
  CHECK(std::filesystem::exists(d1 / "rescaled" / "loss_aggregate.csv"));
  const std::string summary = slurp(d1 / "summary.json");
  CHECK(summary.find("\"overrides\"") != std::string::npos);
  CHECK(summary.find("\"target_weights\"") != std::string::npos);
  CHECK(summary.find("\"tau_DA\"") != std::string::npos);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("two-worker preset reaches the equal-weighted and frequency-weighted minimizers") {
  const auto c = resolve_config("appendix-f1");
  RunOptions o;
  o.write = false;
  const auto r = run_experiment(c, o);
  for (const auto& m : r.methods) {
    REQUIRE(m.runs[0].final_cycle_iterate);
    const double x = (*m.runs[0].final_cycle_iterate)[0];
    if (m.method == Method::Vanilla) CHECK(std::abs(x - 0.5) < 0.02);
    if (m.method == Method::Rescaled) CHECK(std::abs(x + 2.0 / 3.0) < 0.02);
  }
}

TEST_CASE("sweep marks unstable stepsizes and flags the boundary") {
  auto c = quadratic_config({0, 1}, {1, 1}, 0.1);
  // Curvature 1 and two simultaneous updates per tick: large gamma diverges.
  c.grid = {0.01, 0.1, 0.5, 50.0};
  c.horizon = 200;
  RunOptions o;
  o.write = false;
  const auto s = sweep_stepsize(c, o);
  const auto& pts = s.methods[0].points;
  CHECK(pts.back().diverged);
  CHECK_FALSE(pts.front().diverged);
  CHECK(s.methods[0].best_value != 50.0);

  c.grid = {0.1};
  const auto single = sweep_stepsize(c, o);
  CHECK(single.methods[0].best_value == 0.1);
  CHECK(single.methods[0].on_boundary);

  c.grid = {50.0, 100.0};
  CHECK_THROWS_WITH(sweep_stepsize(c, o), doctest::Contains("no stable stepsize"));
}

TEST_CASE("run directory naming and hashing") {
  auto c = quadratic_config({0, 1}, {1, 2}, 0.1);
  const auto h = config_hash(c);
  CHECK(h.size() == 8);
  CHECK(config_hash(c) == h);
  auto c2 = c;
  c2.stepsize = 0.2;
  CHECK(config_hash(c2) != h);
  c.output_dir = "out";
  const auto dir = default_run_dir(c).filename().string();
  CHECK(dir.rfind("unit-", 0) == 0);
  CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("parallel_for runs every task and rethrows") {
  std::vector<int> hits(50, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] = 1; });
  CHECK(std::count(hits.begin(), hits.end(), 1) == 50);
  CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i) {
                    if (i == 3) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}
