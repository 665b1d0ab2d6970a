#include "rasgd/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "rasgd/rng.hpp"

namespace rasgd {

Vector LocalObjective::minibatch_gradient(const Vector&, std::span<const std::size_t>) const {
  throw std::logic_error("objective does not support minibatch sampling");
}

QuadraticLocal::QuadraticLocal(Matrix curvature, Vector center, Vector linear)
    : curvature_(std::move(curvature)), center_(std::move(center)), linear_(std::move(linear)) {
  const auto d = center_.size();
  if (linear_.size() == 0) linear_ = Vector::Zero(d);
  if (curvature_.rows() != d || curvature_.cols() != d || linear_.size() != d) {
    throw std::invalid_argument("quadratic objective: dimension mismatch");
  }
  if (!curvature_.isApprox(curvature_.transpose(), 1e-12)) {
    throw std::invalid_argument("quadratic objective: curvature must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(curvature_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("quadratic objective: curvature must be positive semidefinite");
  }
}

double QuadraticLocal::value(const Vector& x) const {
  const Vector diff = x - center_;
  return 0.5 * diff.dot(curvature_ * diff) + linear_.dot(x);
}

Vector QuadraticLocal::gradient(const Vector& x) const {
  return curvature_ * (x - center_) + linear_;
}

QuadraticSpec QuadraticSpec::scalar(double curvature, Vector center, Vector linear) {
  const auto d = center.size();
  return {curvature * Matrix::Identity(d, d), std::move(center), std::move(linear)};
}

void validate_weights(std::span<const double> weights, std::size_t n, double tolerance) {
  if (weights.size() != n) {
    throw std::invalid_argument("weights: expected " + std::to_string(n) + " entries, got " +
                                std::to_string(weights.size()));
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    throw std::invalid_argument("weights must sum to 1, got " + std::to_string(sum));
  }
}

std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

ObjectiveSuite::ObjectiveSuite(std::vector<std::shared_ptr<const LocalObjective>> locals,
                               std::vector<double> weights)
    : locals_(std::move(locals)), weights_(std::move(weights)) {
  if (locals_.empty()) throw std::invalid_argument("objective suite needs at least one local objective");
  dim_ = locals_.front()->dim();
  for (const auto& local : locals_) {
    if (!local) throw std::invalid_argument("objective suite: null local objective");
    if (local->dim() != dim_) throw std::invalid_argument("objective suite: dimension mismatch across locals");
  }
  if (weights_.empty()) weights_ = uniform_weights(locals_.size());
  validate_weights(weights_, locals_.size(), 1e-12);
}

const LocalObjective& ObjectiveSuite::local(int worker) const {
  if (worker < 1 || static_cast<std::size_t>(worker) > locals_.size()) {
    throw std::out_of_range("worker id " + std::to_string(worker) + " out of range");
  }
  return *locals_[static_cast<std::size_t>(worker - 1)];
}

ObjectiveSuite quadratic_suite(const std::vector<QuadraticSpec>& specs) {
  std::vector<std::shared_ptr<const LocalObjective>> locals;
  locals.reserve(specs.size());
  for (const auto& s : specs) locals.push_back(std::make_shared<QuadraticLocal>(s.curvature, s.center, s.linear));
  return ObjectiveSuite(std::move(locals));
}

WeightedObjective::WeightedObjective(std::shared_ptr<const ObjectiveSuite> suite, std::vector<double> weights)
    : suite_(std::move(suite)), weights_(std::move(weights)) {
  if (!suite_) throw std::invalid_argument("weighted objective: null suite");
  validate_weights(weights_, suite_->n());
}

double WeightedObjective::value(const Vector& x) const {
  double v = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] != 0.0) v += weights_[i] * suite_->locals()[i]->value(x);
  }
  return v;
}

Vector WeightedObjective::gradient(const Vector& x) const {
  Vector g = Vector::Zero(static_cast<Eigen::Index>(suite_->dim()));
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] != 0.0) g += weights_[i] * suite_->locals()[i]->gradient(x);
  }
  return g;
}

WeightedObjective weighted_objective(std::shared_ptr<const ObjectiveSuite> suite, std::vector<double> weights) {
  return WeightedObjective(std::move(suite), std::move(weights));
}

bool is_quadratic(const ObjectiveSuite& suite) {
  return std::all_of(suite.locals().begin(), suite.locals().end(), [](const auto& local) {
    return dynamic_cast<const QuadraticLocal*>(local.get()) != nullptr;
  });
}

namespace {

std::vector<const QuadraticLocal*> quadratic_locals(const ObjectiveSuite& suite) {
  std::vector<const QuadraticLocal*> out;
  for (const auto& local : suite.locals()) {
    const auto* q = dynamic_cast<const QuadraticLocal*>(local.get());
    if (!q) throw std::invalid_argument("closed form requires a quadratic suite");
    out.push_back(q);
  }
  return out;
}

double largest_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

}  // namespace

Vector quadratic_minimizer(const ObjectiveSuite& suite, std::span<const double> weights) {
  validate_weights(weights, suite.n());
  const auto locals = quadratic_locals(suite);
  const auto d = static_cast<Eigen::Index>(suite.dim());
  Matrix H = Matrix::Zero(d, d);
  Vector b = Vector::Zero(d);
  for (std::size_t i = 0; i < locals.size(); ++i) {
    H += weights[i] * locals[i]->curvature();
    b += weights[i] * locals[i]->offset();
  }
  Eigen::LDLT<Matrix> ldlt(H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
    throw std::invalid_argument("weighted curvature is not positive definite");
  }
  return ldlt.solve(b);
}

HeterogeneityParams quadratic_constants(const ObjectiveSuite& suite, std::span<const double> weights,
                                        const Vector& x0) {
  const auto locals = quadratic_locals(suite);
  const auto d = static_cast<Eigen::Index>(suite.dim());
  Matrix H = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < locals.size(); ++i) H += weights[i] * locals[i]->curvature();
  const Vector x_star = quadratic_minimizer(suite, weights);
  const Matrix H_inv = H.inverse();

  HeterogeneityParams p;
  p.L = largest_eigenvalue(H);
  // grad F_i(x) = H_i H^{-1} grad F(x) + (H_i x* - b_i), then |a + b|^2 <= 2|a|^2 + 2|b|^2.
  for (const auto* q : locals) {
    p.L_max = std::max(p.L_max, largest_eigenvalue(q->curvature()));
    const Matrix transfer = q->curvature() * H_inv;
    Eigen::JacobiSVD<Matrix> svd(transfer);
    const double spectral = svd.singularValues()(0);
    p.rho_sq = std::max(p.rho_sq, 2.0 * spectral * spectral);
    const Vector residual = q->curvature() * x_star - q->offset();
    p.zeta_sq = std::max(p.zeta_sq, 2.0 * residual.squaredNorm());
  }
  double f0 = 0.0, f_star = 0.0;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    f0 += weights[i] * locals[i]->value(x0);
    f_star += weights[i] * locals[i]->value(x_star);
  }
  p.Delta = f0 - f_star;
  return p;
}

HeterogeneityParams estimate_heterogeneity(const ObjectiveSuite& suite, std::span<const Vector> probes) {
  if (probes.empty()) throw std::invalid_argument("estimate_heterogeneity needs at least one probe point");
  const auto& w = suite.weights();
  const std::size_t n = suite.n();

  std::vector<Vector> global_grads;
  std::vector<std::vector<Vector>> local_grads(probes.size());
  std::vector<double> u, v, values;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    Vector g = Vector::Zero(static_cast<Eigen::Index>(suite.dim()));
    double val = 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      local_grads[p].push_back(suite.locals()[i]->gradient(probes[p]));
      g += w[i] * local_grads[p].back();
      val += w[i] * suite.locals()[i]->value(probes[p]);
      worst = std::max(worst, local_grads[p].back().squaredNorm());
    }
    u.push_back(g.squaredNorm());
    v.push_back(worst);
    values.push_back(val);
    global_grads.push_back(std::move(g));
  }

  const double m = static_cast<double>(u.size());
  const double u_mean = std::accumulate(u.begin(), u.end(), 0.0) / m;
  const double v_mean = std::accumulate(v.begin(), v.end(), 0.0) / m;
  double cov = 0.0, var = 0.0;
  for (std::size_t p = 0; p < u.size(); ++p) {
    cov += (u[p] - u_mean) * (v[p] - v_mean);
    var += (u[p] - u_mean) * (u[p] - u_mean);
  }

  HeterogeneityParams out;
  out.rho_sq = var > 0.0 ? std::max(0.0, cov / var) : 0.0;
  for (std::size_t p = 0; p < u.size(); ++p) out.zeta_sq = std::max(out.zeta_sq, v[p] - out.rho_sq * u[p]);

  for (std::size_t p = 0; p < probes.size(); ++p) {
    for (std::size_t q = p + 1; q < probes.size(); ++q) {
      const double dist = (probes[p] - probes[q]).norm();
      if (dist <= 0.0) continue;
      out.L = std::max(out.L, (global_grads[p] - global_grads[q]).norm() / dist);
      for (std::size_t i = 0; i < n; ++i) {
        out.L_max = std::max(out.L_max, (local_grads[p][i] - local_grads[q][i]).norm() / dist);
      }
    }
  }
  out.Delta = values.front() - *std::min_element(values.begin(), values.end());
  return out;
}

GradientOracle::GradientOracle(std::shared_ptr<const ObjectiveSuite> suite, NoiseModel noise, std::uint64_t seed)
    : suite_(std::move(suite)), noise_(noise), seed_(seed) {
  if (!suite_) throw std::invalid_argument("gradient oracle: null suite");
  if (const auto* g = std::get_if<GaussianNoise>(&noise_); g && !(g->sigma_sq >= 0.0)) {
    throw std::invalid_argument("gaussian noise variance must be nonnegative");
  }
  if (const auto* mb = std::get_if<MinibatchNoise>(&noise_)) {
    if (mb->batch_size == 0) throw std::invalid_argument("minibatch size must be positive");
    for (const auto& local : suite_->locals()) {
      if (local->sample_count() == 0) {
        throw std::invalid_argument("minibatch noise requires finite-sum local objectives");
      }
    }
  }
}

bool GradientOracle::has_exact_local_gradients() const {
  return !std::holds_alternative<MinibatchNoise>(noise_);
}

std::optional<double> GradientOracle::variance_bound() const {
  if (std::holds_alternative<ExactNoise>(noise_)) return 0.0;
  if (const auto* g = std::get_if<GaussianNoise>(&noise_)) return g->sigma_sq;
  return std::nullopt;
}

namespace {

void require_finite(const Vector& x) {
  if (!x.allFinite()) throw std::domain_error("diverged iterate");
}

void add_gaussian(Vector& g, double sigma_sq, std::uint64_t seed, int worker, std::uint64_t index) {
  if (sigma_sq == 0.0) return;
  const double scale = std::sqrt(sigma_sq / static_cast<double>(g.size()));
  RandomStream rng(seed, StreamPurpose::GradientNoise, static_cast<std::uint32_t>(worker), index);
  for (Eigen::Index j = 0; j < g.size(); ++j) g(j) += scale * rng.normal();
}

}  // namespace

Vector GradientOracle::sample(int worker, const Vector& x, std::uint64_t index) const {
  require_finite(x);
  const auto& local = suite_->local(worker);

  if (const auto* mb = std::get_if<MinibatchNoise>(&noise_)) {
    RandomStream rng(seed_, StreamPurpose::BatchSampling, static_cast<std::uint32_t>(worker), index);
    std::vector<std::size_t> batch(mb->batch_size);
    const auto count = local.sample_count();
    for (auto& b : batch) b = static_cast<std::size_t>(rng.below(count));
    return local.minibatch_gradient(x, batch);
  }

  Vector g = local.gradient(x);
  if (const auto* gauss = std::get_if<GaussianNoise>(&noise_)) add_gaussian(g, gauss->sigma_sq, seed_, worker, index);
  return g;
}

GradientSample GradientOracle::sample_with_exact(int worker, const Vector& x, std::uint64_t index) const {
  if (!has_exact_local_gradients()) throw std::logic_error("decomposition needs exact local gradients");
  require_finite(x);
  GradientSample s;
  s.exact = suite_->local(worker).gradient(x);
  s.stochastic = s.exact;
  if (const auto* gauss = std::get_if<GaussianNoise>(&noise_)) {
    add_gaussian(s.stochastic, gauss->sigma_sq, seed_, worker, index);
  }
  return s;
}

}  // namespace rasgd
