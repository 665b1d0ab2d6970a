#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "rasgd/algorithms.hpp"
#include "rasgd/engine.hpp"
#include "rasgd/objectives.hpp"
#include "rasgd/timing.hpp"

namespace rasgd {

/// S = ideal + bias + noise + residual for one cycle m, where
///   S     = sum_k gamma_k g_k
///   ideal = sum_k gamma_k grad F_{i_k}(x^m)   (alpha grad F at x^m for rescaled steps)
///   bias  = sum_k gamma_k (grad F_{i_k}(y_k) - grad F_{i_k}(x^m))
///   noise = sum_k gamma_k (g_k - grad F_{i_k}(y_k))
struct CycleDecomposition {
  long long cycle = 0;
  Vector S;
  Vector ideal;
  Vector bias;
  Vector noise;
  Vector residual;
  double alpha = 0.0;
  /// |residual| / (1 + |S|)
  double relative_residual = 0.0;
  /// |S - (x^m - x^{m+1})| / (1 + |S|)
  double step_mismatch = 0.0;
};

/// Needs a cyclic trace recorded with gradients. Throws
/// "decomposition needs exact local gradients" when they are absent.
CycleDecomposition decompose_cycle(const Trace& trace, long long m, const ObjectiveSuite& suite);

/// Number of complete cycles in a cyclic trace.
long long completed_cycles(const Trace& trace);

struct NoiseMonteCarlo {
  std::size_t cycles = 0;
  std::size_t dim = 0;
  double A = 0.0;
  double sigma_sq = 0.0;
  double mean_sq_norm = 0.0;
  Vector mean;
  /// mean_sq_norm / (A sigma^2)
  double ratio = 0.0;
  /// 4 sqrt(A sigma^2 / (d N)), the per-coordinate band for the mean.
  double coordinate_band = 0.0;
  double max_abs_mean = 0.0;
};

/// Draws the cycle noise `cycles` times with every snapshot frozen at x.
/// Draw k of cycle m uses oracle index m*K + k. Requires Gaussian noise.
NoiseMonteCarlo noise_monte_carlo(const GradientOracle& oracle, const StepsizePolicy& policy, const Vector& x,
                                  std::size_t cycles);

struct BiasBoundCheck {
  std::size_t cycles = 0;
  double measured = 0.0;  // sum_m |b_m|^2
  double bound = 0.0;
  double grad_sum = 0.0;  // sum_m |grad F(x^m)|^2
  bool stepsize_condition = false;  // gamma_max <= 1 / (2 K L rho)
  bool holds = false;
};

/// Compares sum_m |b_m|^2 over the first M cycles against
/// 2 A^2 K^2 Lmax^2 M (sigma^2 + zeta^2) + 4 A^2 K^2 Lmax^2 rho^2 sum_m |grad F(x^m)|^2.
BiasBoundCheck bias_bound_check(const Trace& trace, const ObjectiveSuite& suite, const PolicyConstants& constants,
                                const HeterogeneityParams& params, double sigma_sq, long long M,
                                std::span<const double> weights = {});

/// 4 Delta / (alpha M) + 6 (A / alpha) L sigma^2 + 10 (A / alpha)^2 K^2 Lmax^2 (sigma^2 + zeta^2)
double convergence_bound(const PolicyConstants& constants, const HeterogeneityParams& params, double sigma_sq,
                         long long M);

/// One cycle of tau = (1, 2) with stepsizes (gamma, 2 gamma) on
/// F_1 = x^2/2 - c x, F_2 = x^2/2 + c x, exact gradients.
double counterexample_step(double x0, double gamma, double c);

struct CounterexampleReplay {
  double closed_form = 0.0;
  double simulated = 0.0;
  double relative_difference = 0.0;
  bool pass = false;  // relative difference <= 1e-12
};

CounterexampleReplay replay_counterexample(double x0, double gamma, double c);

struct TargetWeights {
  std::string method;
  std::vector<double> weights;
};

/// Weights of the objective each method converges to: uniform for rescaled,
/// proportional to 1/tau for vanilla, proportional to 1/tau^2 for
/// delay-adaptive.
TargetWeights target_weights(std::string_view method, std::span<const double> taus);

/// Gamma_i / alpha from the steady-state per-event stepsizes of `policy`.
std::vector<double> measured_target_weights(const StepsizePolicy& policy);

struct ProblemParams {
  double Delta = 1.0;
  double L = 1.0;
  double sigma_sq = 1.0;
  double zeta_sq = 0.0;
  double L_prime = 0.0;  // 0 means L
};

/// Leading wall-clock complexity term of a method. Accepts the method names
/// plus "concurrent".
double leading_term(std::string_view method, const ProblemParams& params, const TimingStats& stats,
                    std::size_t n, double epsilon);

struct StationaritySeries {
  std::vector<double> grad_norm_sq;
  std::vector<double> running_average;
};

StationaritySeries stationarity_gap(const std::vector<Vector>& iterates, const Metric& objective);

}  // namespace rasgd
