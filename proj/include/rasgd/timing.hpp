#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rasgd {

/// Computation time of one worker. Worker ids are 1-based and contiguous.
struct WorkerProfile {
  int id;
  double tau;
};

/// Builds profiles 1..n from a list of computation times.
std::vector<WorkerProfile> make_profiles(std::span<const double> taus);

struct TimingStats {
  double tau_max;
  double tau_min;
  double tau_A;   // arithmetic mean
  double tau_H;   // harmonic mean
  double tau_DA;  // n * sum(tau^-3) / (sum(tau^-2))^2
};

/// Deterministic update schedule over one cycle of length tau_max.
///
/// Worker indices in `order` are 1-based. `delivery_times` are measured from
/// the start of the cycle and lie in (0, tau_max].
struct CyclePlan {
  std::vector<long long> K_i;
  long long K = 0;
  std::vector<int> order;
  double duration = 0.0;
  std::vector<double> delivery_times;

  std::size_t workers() const { return K_i.size(); }
};

/// Rounds every time up to the next power of two. Throws on an empty list.
std::vector<double> harmonize(std::span<const double> taus);

/// True iff every pair of times divides one way (relative tolerance 1e-9).
bool check_harmonic(std::span<const double> taus);

/// Integer ratio tau_i / tau_min for a harmonic set, or 0 for non-harmonic.
std::vector<long long> harmonic_ticks(std::span<const double> taus);

TimingStats timing_stats(std::span<const double> taus);

/// Enumerates the deliveries of one cycle. Throws "harmonic periods required"
/// for non-harmonic input.
CyclePlan build_cycle_plan(std::span<const double> taus);

}  // namespace rasgd
