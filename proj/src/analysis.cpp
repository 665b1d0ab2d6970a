#include "rasgd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace rasgd {

long long completed_cycles(const Trace& trace) {
  if (!trace.cyclic || trace.cycle_K <= 0) throw std::invalid_argument("cycles undefined");
  return trace.updates / trace.cycle_K;
}

CycleDecomposition decompose_cycle(const Trace& trace, long long m, const ObjectiveSuite& suite) {
  const long long cycles = completed_cycles(trace);
  if (m < 0 || m >= cycles) {
    throw std::out_of_range("cycle " + std::to_string(m) + " not completed (" + std::to_string(cycles) +
                            " available)");
  }
  const long long K = trace.cycle_K;
  const auto first = static_cast<std::size_t>(m * K);
  const auto last = static_cast<std::size_t>((m + 1) * K);
  if (trace.events.size() < last) throw std::invalid_argument("trace events were not recorded");

  const auto xm_it = trace.models.find(m * K);
  const auto xn_it = trace.models.find((m + 1) * K);
  if (xm_it == trace.models.end() || xn_it == trace.models.end()) {
    throw std::invalid_argument("cycle iterates were not recorded");
  }
  const Vector& xm = xm_it->second;

  const auto d = xm.size();
  CycleDecomposition out;
  out.cycle = m;
  out.S = Vector::Zero(d);
  out.ideal = Vector::Zero(d);
  out.bias = Vector::Zero(d);
  out.noise = Vector::Zero(d);

  std::vector<Vector> local_at_xm(suite.n());
  for (std::size_t e = first; e < last; ++e) {
    const TraceEvent& ev = trace.events[e];
    if (ev.updates_after != static_cast<long long>(e) + 1) {
      throw std::invalid_argument("decomposition requires one update per event");
    }
    if (ev.exact_gradient.size() != d || ev.gradient.size() != d) {
      throw std::logic_error("decomposition needs exact local gradients");
    }
    auto& at_xm = local_at_xm[static_cast<std::size_t>(ev.worker - 1)];
    if (at_xm.size() == 0) at_xm = suite.local(ev.worker).gradient(xm);
    const double g = ev.stepsize;
    out.alpha += g;
    out.S += g * ev.gradient;
    out.ideal += g * at_xm;
    out.bias += g * (ev.exact_gradient - at_xm);
    out.noise += g * (ev.gradient - ev.exact_gradient);
  }
  out.residual = out.S - out.ideal - out.bias - out.noise;
  const double scale = 1.0 + out.S.norm();
  out.relative_residual = out.residual.norm() / scale;
  out.step_mismatch = (out.S - (xm - xn_it->second)).norm() / scale;
  return out;
}

NoiseMonteCarlo noise_monte_carlo(const GradientOracle& oracle, const StepsizePolicy& policy, const Vector& x,
                                  std::size_t cycles) {
  const auto sigma_sq = oracle.variance_bound();
  if (!sigma_sq || !std::holds_alternative<GaussianNoise>(oracle.noise())) {
    throw std::invalid_argument("noise Monte Carlo needs Gaussian gradient noise");
  }
  if (cycles == 0) throw std::invalid_argument("need at least one cycle");
  const CyclePlan plan = build_cycle_plan(policy.taus());
  const auto delays = steady_state_delays(plan);
  const PolicyConstants c = policy.constants();

  const ObjectiveSuite& suite = oracle.suite();
  std::vector<Vector> exact(suite.n());
  for (std::size_t i = 0; i < suite.n(); ++i) exact[i] = suite.local(static_cast<int>(i + 1)).gradient(x);

  NoiseMonteCarlo out;
  out.cycles = cycles;
  out.dim = static_cast<std::size_t>(x.size());
  out.A = c.A;
  out.sigma_sq = *sigma_sq;
  Vector sum = Vector::Zero(x.size());
  Vector nu(x.size());
  double sq = 0.0;
  const auto K = static_cast<std::uint64_t>(plan.K);
  for (std::size_t m = 0; m < cycles; ++m) {
    nu.setZero();
    for (std::size_t k = 0; k < plan.order.size(); ++k) {
      const int w = plan.order[k];
      const double g = policy.stepsize(w, delays[k]);
      const Vector draw = oracle.sample(w, x, static_cast<std::uint64_t>(m) * K + k);
      nu += g * (draw - exact[static_cast<std::size_t>(w - 1)]);
    }
    sum += nu;
    sq += nu.squaredNorm();
  }
  const double N = static_cast<double>(cycles);
  out.mean = sum / N;
  out.mean_sq_norm = sq / N;
  const double budget = out.A * out.sigma_sq;
  out.ratio = budget > 0.0 ? out.mean_sq_norm / budget : 0.0;
  out.coordinate_band = 4.0 * std::sqrt(budget / (static_cast<double>(out.dim) * N));
  out.max_abs_mean = out.mean.size() ? out.mean.cwiseAbs().maxCoeff() : 0.0;
  return out;
}

BiasBoundCheck bias_bound_check(const Trace& trace, const ObjectiveSuite& suite, const PolicyConstants& constants,
                                const HeterogeneityParams& params, double sigma_sq, long long M,
                                std::span<const double> weights) {
  if (M < 1) throw std::invalid_argument("need at least one cycle");
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w = uniform_weights(suite.n());
  validate_weights(w, suite.n());

  BiasBoundCheck out;
  out.cycles = static_cast<std::size_t>(M);
  for (long long m = 0; m < M; ++m) {
    const CycleDecomposition dec = decompose_cycle(trace, m, suite);
    out.measured += dec.bias.squaredNorm();
    const Vector& xm = trace.models.at(m * trace.cycle_K);
    Vector grad = Vector::Zero(xm.size());
    for (std::size_t i = 0; i < suite.n(); ++i) grad += w[i] * suite.local(static_cast<int>(i + 1)).gradient(xm);
    out.grad_sum += grad.squaredNorm();
  }
  const double A = constants.A;
  const double K = static_cast<double>(constants.K);
  const double core = A * A * K * K * params.L_max * params.L_max;
  out.bound = 2.0 * core * static_cast<double>(M) * (sigma_sq + params.zeta_sq) +
              4.0 * core * params.rho_sq * out.grad_sum;
  const double rho = std::sqrt(params.rho_sq);
  out.stepsize_condition = rho * params.L == 0.0 || constants.gamma_max <= 1.0 / (2.0 * K * params.L * rho);
  out.holds = out.measured <= out.bound;
  return out;
}

double convergence_bound(const PolicyConstants& c, const HeterogeneityParams& p, double sigma_sq, long long M) {
  if (M < 1 || !(c.alpha > 0.0)) throw std::invalid_argument("bound needs M >= 1 and alpha > 0");
  const double ratio = c.A / c.alpha;
  const double K = static_cast<double>(c.K);
  return 4.0 * p.Delta / (c.alpha * static_cast<double>(M)) + 6.0 * ratio * p.L * sigma_sq +
         10.0 * ratio * ratio * K * K * p.L_max * p.L_max * (sigma_sq + p.zeta_sq);
}

double counterexample_step(double x0, double gamma, double c) {
  return x0 * (1.0 - 4.0 * gamma + gamma * gamma) - gamma * gamma * c;
}

CounterexampleReplay replay_counterexample(double x0, double gamma, double c) {
  Vector center = Vector::Zero(1);
  auto suite = std::make_shared<ObjectiveSuite>(quadratic_suite({
      QuadraticSpec::scalar(1.0, center, Vector::Constant(1, -c)),
      QuadraticSpec::scalar(1.0, center, Vector::Constant(1, c)),
  }));
  const std::vector<double> taus{1.0, 2.0};
  AsgdImmediate strategy(StepsizePolicy::per_worker({gamma, 2.0 * gamma}, taus), "counterexample");
  GradientOracle oracle(suite, ExactNoise{}, 0);
  SimulationOptions opts;
  opts.horizon = 2.0;
  const Trace trace = simulate(strategy, oracle, TimingModel::fixed(taus), Vector::Constant(1, x0), opts);

  CounterexampleReplay out;
  out.closed_form = counterexample_step(x0, gamma, c);
  out.simulated = trace.models.at(3)[0];
  const double scale = std::max(std::abs(out.closed_form), std::abs(out.simulated));
  out.relative_difference = scale == 0.0 ? 0.0 : std::abs(out.simulated - out.closed_form) / scale;
  out.pass = out.relative_difference <= 1e-12;
  return out;
}

namespace {

std::vector<double> normalized_powers(std::span<const double> taus, double power) {
  make_profiles(taus);
  std::vector<double> w;
  w.reserve(taus.size());
  double sum = 0.0;
  for (double t : taus) {
    w.push_back(std::pow(t, -power));
    sum += w.back();
  }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace

TargetWeights target_weights(std::string_view method, std::span<const double> taus) {
  if (taus.empty()) throw std::invalid_argument("no workers");
  TargetWeights out{std::string(method), {}};
  if (method == "rescaled" || method == "naive_minibatch" || method == "malenia" || method == "ringleader") {
    make_profiles(taus);
    out.weights = uniform_weights(taus.size());
  } else if (method == "vanilla") {
    out.weights = normalized_powers(taus, 1.0);
  } else if (method == "delay_adaptive") {
    out.weights = normalized_powers(taus, 2.0);
  } else {
    throw std::invalid_argument("unsupported method '" + std::string(method) + "'");
  }
  return out;
}

std::vector<double> measured_target_weights(const StepsizePolicy& policy) {
  const PolicyConstants c = policy.constants();
  std::vector<double> w = c.Gamma;
  for (double& v : w) v /= c.alpha;
  return w;
}

double leading_term(std::string_view method, const ProblemParams& p, const TimingStats& s, std::size_t n,
                    double epsilon) {
  if (!(p.Delta > 0.0) || !(p.L > 0.0) || !(epsilon > 0.0) || !(p.sigma_sq >= 0.0) || !(p.zeta_sq >= 0.0) ||
      n == 0) {
    throw std::invalid_argument("leading term needs positive Delta, L, epsilon and n");
  }
  const double scale = p.Delta / (static_cast<double>(n) * epsilon * epsilon);
  const double L_prime = p.L_prime > 0.0 ? p.L_prime : p.L;
  if (method == "naive_minibatch") return scale * p.L * p.sigma_sq * s.tau_max;
  if (method == "malenia") return scale * p.L * p.sigma_sq * s.tau_A;
  if (method == "ringleader") return scale * L_prime * p.sigma_sq * s.tau_A;
  if (method == "concurrent") return scale * p.L * (p.sigma_sq + p.zeta_sq) * s.tau_max;
  if (method == "delay_adaptive") return scale * p.L * p.sigma_sq * s.tau_DA;
  if (method == "vanilla") return scale * p.L * p.sigma_sq * s.tau_H;
  if (method == "rescaled") return scale * p.L * p.sigma_sq * s.tau_A;
  throw std::invalid_argument("unsupported method '" + std::string(method) + "'");
}

StationaritySeries stationarity_gap(const std::vector<Vector>& iterates, const Metric& objective) {
  StationaritySeries out;
  double sum = 0.0;
  for (std::size_t m = 0; m < iterates.size(); ++m) {
    const double g = objective.gradient(iterates[m]).squaredNorm();
    sum += g;
    out.grad_norm_sq.push_back(g);
    out.running_average.push_back(sum / static_cast<double>(m + 1));
  }
  return out;
}

}  // namespace rasgd
