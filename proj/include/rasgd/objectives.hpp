#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace rasgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A differentiable local objective F_i over R^d.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;

  virtual std::size_t dim() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;

  /// Number of data points a minibatch can be drawn from; 0 if the objective
  /// is not a finite sum.
  virtual std::size_t sample_count() const { return 0; }
  /// Mean gradient over the given data points. Only finite-sum objectives
  /// implement this.
  virtual Vector minibatch_gradient(const Vector& x, std::span<const std::size_t> batch) const;
};

/// F(x) = 1/2 (x - c)^T H (x - c) + l^T x
class QuadraticLocal final : public LocalObjective {
 public:
  QuadraticLocal(Matrix curvature, Vector center, Vector linear);

  std::size_t dim() const override { return static_cast<std::size_t>(center_.size()); }
  double value(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;

  const Matrix& curvature() const { return curvature_; }
  const Vector& center() const { return center_; }
  const Vector& linear() const { return linear_; }
  /// The gradient is H x - offset().
  Vector offset() const { return curvature_ * center_ - linear_; }

 private:
  Matrix curvature_;
  Vector center_;
  Vector linear_;
};

struct QuadraticSpec {
  Matrix curvature;
  Vector center;
  Vector linear;  // empty means zero

  /// Isotropic curvature a * I in dimension center.size().
  static QuadraticSpec scalar(double curvature, Vector center, Vector linear = {});
};

/// n local objectives sharing one dimension, with default global weights.
class ObjectiveSuite {
 public:
  ObjectiveSuite(std::vector<std::shared_ptr<const LocalObjective>> locals,
                 std::vector<double> weights = {});

  std::size_t n() const { return locals_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<double>& weights() const { return weights_; }
  /// 1-based worker id.
  const LocalObjective& local(int worker) const;
  const std::vector<std::shared_ptr<const LocalObjective>>& locals() const { return locals_; }

 private:
  std::vector<std::shared_ptr<const LocalObjective>> locals_;
  std::vector<double> weights_;
  std::size_t dim_ = 0;
};

/// Throws std::invalid_argument unless weights are nonnegative, have length
/// n, and sum to one within `tolerance`.
void validate_weights(std::span<const double> weights, std::size_t n, double tolerance = 1e-9);

std::vector<double> uniform_weights(std::size_t n);

ObjectiveSuite quadratic_suite(const std::vector<QuadraticSpec>& specs);

/// sum_i w_i F_i
class WeightedObjective {
 public:
  WeightedObjective(std::shared_ptr<const ObjectiveSuite> suite, std::vector<double> weights);

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  const std::vector<double>& weights() const { return weights_; }
  std::size_t dim() const { return suite_->dim(); }

 private:
  std::shared_ptr<const ObjectiveSuite> suite_;
  std::vector<double> weights_;
};

WeightedObjective weighted_objective(std::shared_ptr<const ObjectiveSuite> suite,
                                     std::vector<double> weights);

struct HeterogeneityParams {
  double zeta_sq = 0.0;
  double rho_sq = 0.0;
  double L = 0.0;
  double L_max = 0.0;
  double Delta = 0.0;
};

/// True when every local objective is a QuadraticLocal.
bool is_quadratic(const ObjectiveSuite& suite);

/// Exact minimizer of sum_i w_i F_i for a quadratic suite with positive
/// definite aggregate curvature.
Vector quadratic_minimizer(const ObjectiveSuite& suite, std::span<const double> weights);

/// Closed-form constants for a quadratic suite and target weights: L and
/// L_max are the largest Hessian eigenvalues, (zeta^2, rho^2) a valid
/// heterogeneity envelope, Delta = F(x0) - F*.
HeterogeneityParams quadratic_constants(const ObjectiveSuite& suite, std::span<const double> weights,
                                        const Vector& x0);

/// Empirical envelope max_i |grad F_i|^2 <= zeta^2 + rho^2 |grad F|^2 fitted
/// over probe points (least-squares slope, intercept lifted to cover every
/// probe). L and L_max are secant estimates over probe pairs; Delta is
/// F(probes[0]) - min_p F(p). Diagnostics only.
HeterogeneityParams estimate_heterogeneity(const ObjectiveSuite& suite, std::span<const Vector> probes);

// Stochastic gradient oracles.

struct ExactNoise {};
/// Adds N(0, sigma_sq / d) to each coordinate, so E|g - grad F_i|^2 = sigma_sq.
struct GaussianNoise {
  double sigma_sq = 0.0;
};
/// Mean gradient over `batch_size` points drawn uniformly with replacement
/// from the worker's local data.
struct MinibatchNoise {
  std::size_t batch_size = 64;
};
using NoiseModel = std::variant<ExactNoise, GaussianNoise, MinibatchNoise>;

struct GradientSample {
  Vector stochastic;
  Vector exact;  // grad F_i at the same point; empty unless requested
};

/// Stateless stochastic gradient source. Draws are a pure function of
/// (seed, worker, index).
class GradientOracle {
 public:
  GradientOracle(std::shared_ptr<const ObjectiveSuite> suite, NoiseModel noise, std::uint64_t seed);

  const ObjectiveSuite& suite() const { return *suite_; }
  std::shared_ptr<const ObjectiveSuite> suite_ptr() const { return suite_; }
  const NoiseModel& noise() const { return noise_; }
  std::uint64_t seed() const { return seed_; }

  /// Whether grad F_i is available alongside each draw.
  bool has_exact_local_gradients() const;
  /// Variance bound sigma^2 when known exactly.
  std::optional<double> variance_bound() const;

  /// Throws std::domain_error("diverged iterate") for non-finite x.
  Vector sample(int worker, const Vector& x, std::uint64_t index) const;
  GradientSample sample_with_exact(int worker, const Vector& x, std::uint64_t index) const;

 private:
  std::shared_ptr<const ObjectiveSuite> suite_;
  NoiseModel noise_;
  std::uint64_t seed_;
};

inline Vector sample_gradient(const GradientOracle& oracle, int worker, const Vector& x,
                              std::uint64_t index) {
  return oracle.sample(worker, x, index);
}

}  // namespace rasgd
