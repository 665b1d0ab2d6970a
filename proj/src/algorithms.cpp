#include "rasgd/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rasgd {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Vanilla: return "vanilla";
    case Method::Rescaled: return "rescaled";
    case Method::DelayAdaptive: return "delay_adaptive";
    case Method::NaiveMinibatch: return "naive_minibatch";
    case Method::Malenia: return "malenia";
    case Method::Ringleader: return "ringleader";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::Vanilla, Method::Rescaled, Method::DelayAdaptive, Method::NaiveMinibatch,
                   Method::Malenia, Method::Ringleader}) {
    if (method_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) +
                              "' (expected vanilla, rescaled, delay_adaptive, naive_minibatch, malenia or ringleader)");
}

bool is_asgd(Method m) {
  return m == Method::Vanilla || m == Method::Rescaled || m == Method::DelayAdaptive;
}

namespace {

void require_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("stepsize must be positive");
}

}  // namespace

std::vector<double> rescaled_stepsizes(double gamma, std::span<const double> taus) {
  require_gamma(gamma);
  const TimingStats s = timing_stats(taus);
  // gamma_i K_i stays bit-identical across workers when tau_i / tau_max is a power of two.
  const double base = gamma * s.tau_H / static_cast<double>(taus.size());
  std::vector<double> out;
  out.reserve(taus.size());
  for (double t : taus) out.push_back(base * (t / s.tau_max));
  return out;
}

std::vector<double> vanilla_stepsizes(double gamma, long long K, std::size_t n) {
  require_gamma(gamma);
  if (K < 1) throw std::invalid_argument("K must be at least 1");
  return std::vector<double>(n, gamma / static_cast<double>(K));
}

double delay_adaptive_stepsize(double gamma, long long delay) {
  if (delay < 0) throw std::invalid_argument("delay must be nonnegative");
  return gamma / (1.0 + static_cast<double>(delay));
}

StepsizePolicy::StepsizePolicy(PolicyKind kind, double gamma, std::vector<double> taus,
                               std::vector<double> per_worker)
    : kind_(kind), gamma_(gamma), taus_(std::move(taus)), per_worker_(std::move(per_worker)) {}

StepsizePolicy StepsizePolicy::vanilla(double gamma, std::vector<double> taus) {
  const CyclePlan plan = build_cycle_plan(taus);
  auto steps = vanilla_stepsizes(gamma, plan.K, taus.size());
  return {PolicyKind::Vanilla, gamma, std::move(taus), std::move(steps)};
}

StepsizePolicy StepsizePolicy::rescaled(double gamma, std::vector<double> taus) {
  auto steps = rescaled_stepsizes(gamma, taus);
  return {PolicyKind::Rescaled, gamma, std::move(taus), std::move(steps)};
}

StepsizePolicy StepsizePolicy::delay_adaptive(double gamma, std::vector<double> taus) {
  require_gamma(gamma);
  make_profiles(taus);
  return {PolicyKind::DelayAdaptive, gamma, std::move(taus), {}};
}

StepsizePolicy StepsizePolicy::per_worker(std::vector<double> stepsizes, std::vector<double> taus) {
  make_profiles(taus);
  if (stepsizes.size() != taus.size()) throw std::invalid_argument("one stepsize per worker required");
  for (double g : stepsizes) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw std::invalid_argument("stepsizes must be nonnegative");
  }
  const double top = stepsizes.empty() ? 0.0 : *std::max_element(stepsizes.begin(), stepsizes.end());
  return {PolicyKind::PerWorker, top, std::move(taus), std::move(stepsizes)};
}

double StepsizePolicy::stepsize(int worker, long long delay) const {
  if (kind_ == PolicyKind::DelayAdaptive) return delay_adaptive_stepsize(gamma_, delay);
  if (worker < 1 || static_cast<std::size_t>(worker) > per_worker_.size()) {
    throw std::out_of_range("worker " + std::to_string(worker) + " out of range");
  }
  return per_worker_[static_cast<std::size_t>(worker - 1)];
}

std::vector<long long> steady_state_delays(const CyclePlan& plan) {
  std::vector<long long> read(plan.workers(), 0);
  std::vector<long long> out;
  out.reserve(plan.order.size());
  const long long K = static_cast<long long>(plan.order.size());
  for (long long u = 0; u < 2 * K; ++u) {
    const auto w = static_cast<std::size_t>(plan.order[static_cast<std::size_t>(u % K)] - 1);
    if (u >= K) out.push_back(u - read[w]);
    read[w] = u + 1;
  }
  return out;
}

PolicyConstants StepsizePolicy::constants() const {
  const CyclePlan plan = build_cycle_plan(taus_);
  const auto delays = steady_state_delays(plan);
  PolicyConstants c;
  c.K = plan.K;
  c.Gamma.assign(taus_.size(), 0.0);
  for (std::size_t k = 0; k < plan.order.size(); ++k) {
    const int w = plan.order[k];
    const double g = stepsize(w, delays[k]);
    c.alpha += g;
    c.A += g * g;
    c.gamma_max = std::max(c.gamma_max, g);
    c.Gamma[static_cast<std::size_t>(w - 1)] += g;
  }
  return c;
}

void asgd_step(Vector& x, const Vector& gradient, double stepsize) {
  if (gradient.size() != x.size()) throw std::invalid_argument("gradient has wrong dimension");
  x.noalias() -= stepsize * gradient;
}

bool naive_minibatch_step(Vector& x, const std::vector<std::optional<Vector>>& gradients, double alpha) {
  if (gradients.empty()) return false;
  Vector sum = Vector::Zero(x.size());
  for (const auto& g : gradients) {
    if (!g) return false;
    sum += *g;
  }
  x.noalias() -= (alpha / static_cast<double>(gradients.size())) * sum;
  return true;
}

bool malenia_step(Vector& x, const std::vector<std::vector<Vector>>& gradients, double alpha) {
  if (gradients.empty()) return false;
  Vector sum = Vector::Zero(x.size());
  for (const auto& worker : gradients) {
    if (worker.empty()) return false;
    Vector local = Vector::Zero(x.size());
    for (const auto& g : worker) local += g;
    sum += local / static_cast<double>(worker.size());
  }
  x.noalias() -= (alpha / static_cast<double>(gradients.size())) * sum;
  return true;
}

void ringleader_step(Vector& x, const std::vector<Vector>& table, double alpha) {
  if (table.empty()) throw std::invalid_argument("empty gradient table");
  Vector sum = Vector::Zero(x.size());
  for (const auto& g : table) sum += g;
  const double n = static_cast<double>(table.size());
  x.noalias() -= (alpha / n) * (sum / n);
}

// Strategies

AsgdImmediate::AsgdImmediate(StepsizePolicy policy, std::string label)
    : policy_(std::move(policy)), label_(std::move(label)) {}

void AsgdImmediate::start(std::size_t n, const Vector&) {
  if (n != policy_.taus().size()) throw std::invalid_argument("policy built for a different worker count");
}

Decision AsgdImmediate::on_arrival(const Arrival& a, Vector& x) {
  const double s = policy_.stepsize(a.worker, a.delay);
  asgd_step(x, a.gradient, s);
  Decision d;
  d.stepsize = s;
  d.updates = 1;
  return d;
}

NaiveMinibatch::NaiveMinibatch(double alpha) : alpha_(alpha) { require_gamma(alpha); }

void NaiveMinibatch::start(std::size_t n, const Vector&) {
  buffer_.assign(n, std::nullopt);
  received_ = 0;
}

Decision NaiveMinibatch::on_arrival(const Arrival& a, Vector& x) {
  auto& slot = buffer_[static_cast<std::size_t>(a.worker - 1)];
  if (!slot) ++received_;
  slot = a.gradient;
  Decision d;
  d.worker_idles = true;
  if (received_ == buffer_.size()) {
    naive_minibatch_step(x, buffer_, alpha_);
    d.stepsize = alpha_;
    d.updates = 1;
    d.broadcast = true;
    d.round_completed = true;
    d.gather_completed = true;
    buffer_.assign(buffer_.size(), std::nullopt);
    received_ = 0;
  }
  return d;
}

Malenia::Malenia(double alpha) : alpha_(alpha) { require_gamma(alpha); }

void Malenia::start(std::size_t n, const Vector& x0) {
  sums_.assign(n, Vector::Zero(x0.size()));
  counts_.assign(n, 0);
  covered_ = 0;
}

Decision Malenia::on_arrival(const Arrival& a, Vector& x) {
  const auto w = static_cast<std::size_t>(a.worker - 1);
  if (counts_[w]++ == 0) ++covered_;
  sums_[w] += a.gradient;
  Decision d;
  if (covered_ == sums_.size()) {
    Vector mean = Vector::Zero(x.size());
    for (std::size_t i = 0; i < sums_.size(); ++i) mean += sums_[i] / static_cast<double>(counts_[i]);
    x.noalias() -= (alpha_ / static_cast<double>(sums_.size())) * mean;
    d.stepsize = alpha_;
    d.updates = 1;
    d.broadcast = true;
    d.round_completed = true;
    d.gather_completed = true;
    for (auto& s : sums_) s.setZero();
    std::fill(counts_.begin(), counts_.end(), 0);
    covered_ = 0;
  }
  return d;
}

Ringleader::Ringleader(double alpha) : alpha_(alpha) { require_gamma(alpha); }

void Ringleader::start(std::size_t n, const Vector& x0) {
  gathering_ = true;
  sums_.assign(n, Vector::Zero(x0.size()));
  counts_.assign(n, 0);
  covered_ = 0;
  table_.assign(n, Vector::Zero(x0.size()));
  remaining_ = 0;
}

Decision Ringleader::on_arrival(const Arrival& a, Vector& x) {
  const auto w = static_cast<std::size_t>(a.worker - 1);
  const std::size_t n = table_.size();
  Decision d;
  if (gathering_) {
    if (counts_[w]++ == 0) ++covered_;
    sums_[w] += a.gradient;
    if (covered_ < n) return d;
    for (std::size_t i = 0; i < n; ++i) {
      table_[i] = sums_[i] / static_cast<double>(counts_[i]);
      sums_[i].setZero();
      counts_[i] = 0;
    }
    covered_ = 0;
    gathering_ = false;
    remaining_ = n;
    d.gather_completed = true;
  } else {
    table_[w] = a.gradient;
  }
  const double step = alpha_ / static_cast<double>(n);
  ringleader_step(x, table_, alpha_);
  d.stepsize = step;
  d.updates = 1;
  if (--remaining_ == 0) {
    gathering_ = true;
    d.round_completed = true;
    d.broadcast = true;
  }
  return d;
}

StepsizePolicy make_policy(Method method, double gamma, const std::vector<double>& taus) {
  switch (method) {
    case Method::Vanilla: return StepsizePolicy::vanilla(gamma, taus);
    case Method::Rescaled: return StepsizePolicy::rescaled(gamma, taus);
    case Method::DelayAdaptive: return StepsizePolicy::delay_adaptive(gamma, taus);
    default: break;
  }
  throw std::invalid_argument(std::string(method_name(method)) + " has no ASGD stepsize policy");
}

std::unique_ptr<ServerStrategy> make_strategy(Method method, double gamma, const std::vector<double>& taus) {
  switch (method) {
    case Method::NaiveMinibatch: return std::make_unique<NaiveMinibatch>(gamma);
    case Method::Malenia: return std::make_unique<Malenia>(gamma);
    case Method::Ringleader: return std::make_unique<Ringleader>(gamma);
    default: break;
  }
  return std::make_unique<AsgdImmediate>(make_policy(method, gamma, taus), std::string(method_name(method)));
}

double gamma_for_alpha(Method method, double alpha, std::span<const double> taus) {
  require_gamma(alpha);
  if (method == Method::Rescaled) return alpha / timing_stats(taus).tau_H;
  return alpha;
}

}  // namespace rasgd
