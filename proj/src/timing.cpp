#include "rasgd/timing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rasgd {

namespace {

constexpr double kRatioTolerance = 1e-9;

void require_positive(std::span<const double> taus) {
  for (double t : taus) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw std::invalid_argument("computation times must be positive and finite, got " +
                                  std::to_string(t));
    }
  }
}

// Nearest integer to `ratio` if it is within relative tolerance, else 0.
long long integer_ratio(double ratio) {
  const double rounded = std::round(ratio);
  if (rounded < 1.0) return 0;
  if (std::abs(ratio - rounded) <= kRatioTolerance * ratio) return static_cast<long long>(rounded);
  return 0;
}

}  // namespace

std::vector<WorkerProfile> make_profiles(std::span<const double> taus) {
  require_positive(taus);
  std::vector<WorkerProfile> out;
  out.reserve(taus.size());
  for (std::size_t i = 0; i < taus.size(); ++i) out.push_back({static_cast<int>(i + 1), taus[i]});
  return out;
}

std::vector<double> harmonize(std::span<const double> taus) {
  if (taus.empty()) throw std::invalid_argument("no workers");
  require_positive(taus);
  std::vector<double> out;
  out.reserve(taus.size());
  for (double t : taus) {
    int exponent = 0;
    const double mantissa = std::frexp(t, &exponent);  // t = mantissa * 2^exponent, mantissa in [0.5, 1)
    out.push_back(mantissa == 0.5 ? t : std::ldexp(1.0, exponent));
  }
  return out;
}

bool check_harmonic(std::span<const double> taus) {
  require_positive(taus);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    for (std::size_t j = i + 1; j < taus.size(); ++j) {
      const double hi = std::max(taus[i], taus[j]);
      const double lo = std::min(taus[i], taus[j]);
      if (integer_ratio(hi / lo) == 0) return false;
    }
  }
  return true;
}

std::vector<long long> harmonic_ticks(std::span<const double> taus) {
  if (taus.empty() || !check_harmonic(taus)) return {};
  const double tau_min = *std::min_element(taus.begin(), taus.end());
  std::vector<long long> ticks;
  ticks.reserve(taus.size());
  for (double t : taus) ticks.push_back(integer_ratio(t / tau_min));
  return ticks;
}

TimingStats timing_stats(std::span<const double> taus) {
  if (taus.empty()) throw std::invalid_argument("no workers");
  require_positive(taus);
  const double n = static_cast<double>(taus.size());
  double sum = 0.0, inv = 0.0, inv2 = 0.0, inv3 = 0.0;
  for (double t : taus) {
    sum += t;
    inv += 1.0 / t;
    inv2 += 1.0 / (t * t);
    inv3 += 1.0 / (t * t * t);
  }
  TimingStats s{};
  s.tau_max = *std::max_element(taus.begin(), taus.end());
  s.tau_min = *std::min_element(taus.begin(), taus.end());
  s.tau_A = sum / n;
  s.tau_H = n / inv;
  s.tau_DA = n * inv3 / (inv2 * inv2);
  return s;
}

CyclePlan build_cycle_plan(std::span<const double> taus) {
  if (taus.empty()) throw std::invalid_argument("no workers");
  const auto ticks = harmonic_ticks(taus);
  if (ticks.empty()) throw std::invalid_argument("harmonic periods required");

  const double tau_min = *std::min_element(taus.begin(), taus.end());
  const long long cycle_ticks = *std::max_element(ticks.begin(), ticks.end());

  struct Delivery {
    long long tick;
    int worker;
  };
  std::vector<Delivery> deliveries;

  CyclePlan plan;
  plan.duration = *std::max_element(taus.begin(), taus.end());
  plan.K_i.reserve(taus.size());
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const long long k_i = cycle_ticks / ticks[i];
    plan.K_i.push_back(k_i);
    for (long long j = 1; j <= k_i; ++j) {
      deliveries.push_back({j * ticks[i], static_cast<int>(i + 1)});
    }
  }
  std::sort(deliveries.begin(), deliveries.end(), [](const Delivery& a, const Delivery& b) {
    return a.tick != b.tick ? a.tick < b.tick : a.worker < b.worker;
  });

  plan.K = std::accumulate(plan.K_i.begin(), plan.K_i.end(), 0LL);
  plan.order.reserve(deliveries.size());
  plan.delivery_times.reserve(deliveries.size());
  for (const auto& d : deliveries) {
    plan.order.push_back(d.worker);
    plan.delivery_times.push_back(static_cast<double>(d.tick) * tau_min);
  }
  return plan;
}

}  // namespace rasgd
