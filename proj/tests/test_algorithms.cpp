#include <doctest.h>

#include <cmath>

#include "rasgd/algorithms.hpp"
#include "rasgd/rng.hpp"

using namespace rasgd;

TEST_CASE("method names round trip") {
  for (Method m : {Method::Vanilla, Method::Rescaled, Method::DelayAdaptive, Method::NaiveMinibatch,
                   Method::Malenia, Method::Ringleader}) {
    CHECK(parse_method(method_name(m)) == m);
  }
  CHECK_THROWS_WITH(parse_method("adam"), doctest::Contains("unknown method"));
  CHECK(is_asgd(Method::Rescaled));
  CHECK_FALSE(is_asgd(Method::Malenia));
}

TEST_CASE("rescaled stepsizes and cycle constants") {
  const std::vector<double> taus{1, 2};
  const auto g = rescaled_stepsizes(0.3, taus);
  CHECK(g[0] == doctest::Approx(0.1));
  CHECK(g[1] == doctest::Approx(0.2));
  const auto c = StepsizePolicy::rescaled(0.3, taus).constants();
  CHECK(c.K == 3);
  CHECK(c.alpha == doctest::Approx(0.3 * 4.0 / 3.0));
  CHECK(c.A == doctest::Approx(0.01 + 0.01 + 0.04));
  CHECK(c.gamma_max == doctest::Approx(0.2));
  CHECK(c.Gamma[0] == c.Gamma[1]);
}

TEST_CASE("rescaled identities on random harmonic sets") {
  RandomStream r(21, StreamPurpose::Probe, 0, 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> taus;
    const auto n = 1 + r.below(8);
    for (std::size_t i = 0; i < n; ++i) taus.push_back(std::ldexp(1.0, static_cast<int>(r.below(7))));
    const double gamma = 0.001 + r.uniform();
    const auto policy = StepsizePolicy::rescaled(gamma, taus);
    const auto c = policy.constants();
    const auto plan = build_cycle_plan(taus);
    const auto st = timing_stats(taus);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(policy.worker_stepsizes()[i] * static_cast<double>(plan.K_i[i]) ==
            policy.worker_stepsizes()[0] * static_cast<double>(plan.K_i[0]));
    }
    CHECK(c.alpha == doctest::Approx(gamma * st.tau_H).epsilon(1e-12));
    CHECK(c.A == doctest::Approx(gamma * gamma * st.tau_H * st.tau_A / static_cast<double>(c.K)).epsilon(1e-12));
  }
}

TEST_CASE("vanilla and delay-adaptive rules") {
  const std::vector<double> taus{1, 2};
  const auto v = StepsizePolicy::vanilla(0.3, taus);
  CHECK(v.stepsize(1, 5) == doctest::Approx(0.1));
  CHECK(v.constants().alpha == doctest::Approx(0.3));
  CHECK(v.constants().Gamma[0] == doctest::Approx(0.2));
  CHECK_THROWS_WITH(StepsizePolicy::vanilla(0.3, {2, 3}), "harmonic periods required");

  CHECK(delay_adaptive_stepsize(1.0, 0) == 1.0);
  CHECK(delay_adaptive_stepsize(1.0, 3) == 0.25);
  CHECK_THROWS(delay_adaptive_stepsize(1.0, -1));
  const auto da = StepsizePolicy::delay_adaptive(1.0, taus);
  CHECK(da.worker_stepsizes().empty());
  // Steady-state delays for (1, 2): worker 1 sees 1 and 0, worker 2 sees 2.
  const auto c = da.constants();
  CHECK(c.Gamma[0] == doctest::Approx(1.5));
  CHECK(c.Gamma[1] == doctest::Approx(1.0 / 3.0));
  CHECK(steady_state_delays(build_cycle_plan(taus)) == std::vector<long long>{1, 0, 2});
  CHECK_THROWS(StepsizePolicy::rescaled(0.0, taus));
  CHECK_THROWS(StepsizePolicy::per_worker({0.1}, taus));
}

TEST_CASE("alpha to method parameter") {
  const std::vector<double> taus{1, 2};
  CHECK(gamma_for_alpha(Method::Rescaled, 0.01, taus) == doctest::Approx(0.0075));
  CHECK(gamma_for_alpha(Method::Vanilla, 0.01, taus) == 0.01);
  CHECK(gamma_for_alpha(Method::Malenia, 0.01, taus) == 0.01);
}

TEST_CASE("update kernels") {
  Vector x = Vector::Ones(2);
  asgd_step(x, Vector::Constant(2, 2.0), 0.25);
  CHECK(x.isApprox(Vector::Constant(2, 0.5)));
  CHECK_THROWS(asgd_step(x, Vector::Ones(3), 0.1));

  std::vector<std::optional<Vector>> buf{Vector::Constant(1, 1.0), std::nullopt};
  Vector y = Vector::Zero(1);
  CHECK_FALSE(naive_minibatch_step(y, buf, 1.0));
  CHECK(y[0] == 0.0);
  buf[1] = Vector::Constant(1, 3.0);
  CHECK(naive_minibatch_step(y, buf, 1.0));
  CHECK(y[0] == doctest::Approx(-2.0));

  std::vector<std::vector<Vector>> groups{{Vector::Constant(1, 1.0), Vector::Constant(1, 3.0)},
                                          {Vector::Constant(1, 6.0)}};
  Vector z = Vector::Zero(1);
  CHECK(malenia_step(z, groups, 1.0));
  CHECK(z[0] == doctest::Approx(-4.0));
  groups[1].clear();
  CHECK_FALSE(malenia_step(z, groups, 1.0));

  std::vector<Vector> table{Vector::Constant(1, 2.0), Vector::Constant(1, 4.0)};
  Vector r = Vector::Zero(1);
  ringleader_step(r, table, 1.0);
  CHECK(r[0] == doctest::Approx(-1.5));
}

namespace {

std::shared_ptr<ObjectiveSuite> suite_of(std::size_t n) {
  std::vector<QuadraticSpec> specs;
  for (std::size_t i = 0; i < n; ++i) specs.push_back(QuadraticSpec::scalar(1.0, Vector::Constant(1, double(i))));
  return std::make_shared<ObjectiveSuite>(quadratic_suite(specs));
}

Trace simulate_with(ServerStrategy& s, std::vector<double> taus, double horizon, TimingKind kind = TimingKind::Fixed,
                    NoiseModel noise = GaussianNoise{1.0}) {
  GradientOracle oracle(suite_of(taus.size()), noise, 3);
  SimulationOptions o;
  o.horizon = horizon;
  o.seed = 3;
  return simulate(s, oracle, TimingModel{kind, taus}, Vector::Zero(1), o);
}

}  // namespace

TEST_CASE("ringleader with one worker is plain ASGD") {
  Ringleader rl(0.1);
  AsgdImmediate asgd(StepsizePolicy::per_worker({0.1}, {1.0}));
  const Trace a = simulate_with(rl, {1.0}, 50);
  const Trace b = simulate_with(asgd, {1.0}, 50);
  CHECK(a.final_model.isApprox(b.final_model, 1e-14));
  CHECK(a.updates == b.updates);
}

TEST_CASE("naive minibatch rounds last tau_max under fixed timing") {
  NaiveMinibatch nm(0.1);
  const Trace t = simulate_with(nm, {1, 2, 4}, 40);
  CHECK(t.round_ends.size() == 10);
  for (std::size_t k = 0; k < t.round_ends.size(); ++k) CHECK(t.round_ends[k] == 4.0 * double(k + 1));
  CHECK(t.updates == 10);
  CHECK(t.cumulative_stepsize == doctest::Approx(1.0));
}

TEST_CASE("malenia steps once per gather and keeps fast workers busy") {
  Malenia m(0.1);
  const Trace t = simulate_with(m, {1, 4}, 40);
  CHECK(t.round_ends.size() == 10);
  // Fast worker delivers four gradients per round.
  long long fast = 0;
  for (const auto& e : t.events) fast += e.worker == 1;
  CHECK(fast == 40);
}

TEST_CASE("ringleader rounds: gather then n table updates") {
  Ringleader rl(0.2);
  const Trace t = simulate_with(rl, {1, 2}, 20);
  CHECK(t.gather_ends.size() >= 1);
  CHECK(t.round_ends.size() <= t.gather_ends.size());
  CHECK(t.updates >= static_cast<long long>(2 * t.round_ends.size()));
  CHECK(t.updates <= static_cast<long long>(2 * t.gather_ends.size()));
  CHECK(t.cumulative_stepsize == doctest::Approx(0.1 * double(t.updates)));
}

TEST_CASE("baselines under exponential timing: rounds exceed the slowest mean") {
  Malenia m(0.1);
  const Trace t = simulate_with(m, {1, 1, 2, 4}, 4000, TimingKind::Exponential);
  const double mean_round = t.round_ends.back() / static_cast<double>(t.round_ends.size());
  CHECK(mean_round > 4.0);
}
