#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rasgd/engine.hpp"
#include "rasgd/objectives.hpp"
#include "rasgd/timing.hpp"

namespace rasgd {

enum class Method { Vanilla, Rescaled, DelayAdaptive, NaiveMinibatch, Malenia, Ringleader };

std::string_view method_name(Method m);
/// Accepts vanilla | rescaled | delay_adaptive | naive_minibatch | malenia | ringleader.
Method parse_method(std::string_view name);
bool is_asgd(Method m);

// Static stepsize rules.

/// gamma_i = gamma * tau_i * tau_H / (n * tau_max)
std::vector<double> rescaled_stepsizes(double gamma, std::span<const double> taus);
/// gamma_i = gamma / K for every worker.
std::vector<double> vanilla_stepsizes(double gamma, long long K, std::size_t n);
double delay_adaptive_stepsize(double gamma, long long delay);

enum class PolicyKind { Vanilla, Rescaled, DelayAdaptive, PerWorker };

/// Cycle-level constants of a stepsize rule on a harmonic schedule.
struct PolicyConstants {
  double alpha = 0.0;      // sum of stepsizes over one cycle
  double A = 0.0;          // sum of squared stepsizes over one cycle
  double gamma_max = 0.0;  // largest single stepsize
  long long K = 0;
  std::vector<double> Gamma;  // per-worker aggregate stepsize per cycle
};

class StepsizePolicy {
 public:
  static StepsizePolicy vanilla(double gamma, std::vector<double> taus);
  static StepsizePolicy rescaled(double gamma, std::vector<double> taus);
  static StepsizePolicy delay_adaptive(double gamma, std::vector<double> taus);
  static StepsizePolicy per_worker(std::vector<double> stepsizes, std::vector<double> taus);

  PolicyKind kind() const { return kind_; }
  double gamma() const { return gamma_; }
  const std::vector<double>& taus() const { return taus_; }
  /// Static per-worker stepsizes; empty for the delay-adaptive rule.
  const std::vector<double>& worker_stepsizes() const { return per_worker_; }

  double stepsize(int worker, long long delay) const;

  /// Constants over one steady-state cycle (delays from cycle 1 for the
  /// delay-adaptive rule). Throws "harmonic periods required" otherwise.
  PolicyConstants constants() const;

 private:
  StepsizePolicy(PolicyKind kind, double gamma, std::vector<double> taus, std::vector<double> per_worker);

  PolicyKind kind_;
  double gamma_;
  std::vector<double> taus_;
  std::vector<double> per_worker_;
};

/// Per-slot delays of one steady-state cycle (cycle 1) under fixed harmonic
/// timing, aligned with CyclePlan::order.
std::vector<long long> steady_state_delays(const CyclePlan& plan);

// Update kernels.

void asgd_step(Vector& x, const Vector& gradient, double stepsize);
/// Returns false and leaves x untouched if any worker's gradient is missing.
bool naive_minibatch_step(Vector& x, const std::vector<std::optional<Vector>>& gradients, double alpha);
/// Averages within each worker, then across workers. Returns false if any
/// worker has no gradient.
bool malenia_step(Vector& x, const std::vector<std::vector<Vector>>& gradients, double alpha);
/// x -= (alpha / n) * mean(table)
void ringleader_step(Vector& x, const std::vector<Vector>& table, double alpha);

// Server strategies.

/// Applies each arriving gradient immediately.
class AsgdImmediate final : public ServerStrategy {
 public:
  explicit AsgdImmediate(StepsizePolicy policy, std::string label = "asgd");
  std::string name() const override { return label_; }
  void start(std::size_t n, const Vector& x0) override;
  Decision on_arrival(const Arrival& a, Vector& x) override;
  const StepsizePolicy& policy() const { return policy_; }

 private:
  StepsizePolicy policy_;
  std::string label_;
};

/// One gradient per worker at the round model, then a single averaged step.
class NaiveMinibatch final : public ServerStrategy {
 public:
  explicit NaiveMinibatch(double alpha);
  std::string name() const override { return "naive_minibatch"; }
  void start(std::size_t n, const Vector& x0) override;
  Decision on_arrival(const Arrival& a, Vector& x) override;

 private:
  double alpha_;
  std::vector<std::optional<Vector>> buffer_;
  std::size_t received_ = 0;
};

/// Workers keep computing at the round model until each has delivered at
/// least once; the step averages within and then across workers.
class Malenia final : public ServerStrategy {
 public:
  explicit Malenia(double alpha);
  std::string name() const override { return "malenia"; }
  void start(std::size_t n, const Vector& x0) override;
  Decision on_arrival(const Arrival& a, Vector& x) override;

 private:
  double alpha_;
  std::vector<Vector> sums_;
  std::vector<long long> counts_;
  std::size_t covered_ = 0;
};

/// Simplified gradient-table baseline. A round is a gathering phase (every
/// worker delivers at least once at the round model) followed by n table
/// updates of size alpha / n. The arrival that completes the gathering
/// performs the first update. Slots persist across rounds.
class Ringleader final : public ServerStrategy {
 public:
  explicit Ringleader(double alpha);
  std::string name() const override { return "ringleader"; }
  void start(std::size_t n, const Vector& x0) override;
  Decision on_arrival(const Arrival& a, Vector& x) override;

  const std::vector<Vector>& table() const { return table_; }

 private:
  double alpha_;
  bool gathering_ = true;
  std::vector<Vector> sums_;
  std::vector<long long> counts_;
  std::size_t covered_ = 0;
  std::vector<Vector> table_;
  std::size_t remaining_ = 0;
};

/// Strategy for `method` with its stepsize parameter: gamma for the ASGD
/// rules, the round stepsize alpha for the baselines.
std::unique_ptr<ServerStrategy> make_strategy(Method method, double gamma, const std::vector<double>& taus);

/// Policy behind an ASGD method.
StepsizePolicy make_policy(Method method, double gamma, const std::vector<double>& taus);

/// Method parameter that yields cycle stepsize alpha.
double gamma_for_alpha(Method method, double alpha, std::span<const double> taus);

}  // namespace rasgd
