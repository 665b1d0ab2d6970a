#include "rasgd/mlp.hpp"

#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>

#include "rasgd/rng.hpp"

namespace rasgd {

namespace {

using RowMap = Eigen::Map<const RowMatrix>;
using RowMapMut = Eigen::Map<RowMatrix>;

struct Offsets {
  std::size_t w1, b1, w2, b2;
};

Offsets offsets(const MlpModel& m) {
  const std::size_t w1 = 0;
  const std::size_t b1 = w1 + m.hidden * m.input;
  const std::size_t w2 = b1 + m.hidden;
  const std::size_t b2 = w2 + m.classes * m.hidden;
  return {w1, b1, w2, b2};
}

void check_shapes(const MlpModel& m, const Vector& params, const RowMatrix& features) {
  if (static_cast<std::size_t>(params.size()) != m.parameter_count()) {
    throw std::invalid_argument("mlp: expected " + std::to_string(m.parameter_count()) + " parameters, got " +
                                std::to_string(params.size()));
  }
  if (static_cast<std::size_t>(features.cols()) != m.input) {
    throw std::invalid_argument("mlp: feature width does not match input size");
  }
}

}  // namespace

Vector mlp_init(const MlpModel& model, std::uint64_t seed) {
  if (model.input == 0 || model.hidden == 0 || model.classes < 2) {
    throw std::invalid_argument("mlp: layer sizes must be positive with at least 2 classes");
  }
  Vector p = Vector::Zero(static_cast<Eigen::Index>(model.parameter_count()));
  const Offsets o = offsets(model);
  RandomStream rng(seed, StreamPurpose::Initialization, 0, 0);
  const double s1 = std::sqrt(2.0 / static_cast<double>(model.input));
  const double s2 = std::sqrt(2.0 / static_cast<double>(model.hidden));
  for (std::size_t i = 0; i < model.hidden * model.input; ++i) p[static_cast<Eigen::Index>(o.w1 + i)] = s1 * rng.normal();
  for (std::size_t i = 0; i < model.classes * model.hidden; ++i) p[static_cast<Eigen::Index>(o.w2 + i)] = s2 * rng.normal();
  return p;
}

LossGradient mlp_loss_gradient(const MlpModel& m, const Vector& params, const RowMatrix& features,
                               std::span<const int> labels, std::span<const std::size_t> batch) {
  if (batch.empty()) throw std::invalid_argument("mlp: empty batch");
  check_shapes(m, params, features);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto H = static_cast<Eigen::Index>(m.hidden);
  const auto C = static_cast<Eigen::Index>(m.classes);
  const auto D = static_cast<Eigen::Index>(m.input);
  const Offsets o = offsets(m);

  RowMap W1(params.data() + o.w1, H, D);
  Eigen::Map<const Vector> b1(params.data() + o.b1, H);
  RowMap W2(params.data() + o.w2, C, H);
  Eigen::Map<const Vector> b2(params.data() + o.b2, C);

  RowMatrix X(B, D);
  std::vector<int> y(batch.size());
  for (Eigen::Index r = 0; r < B; ++r) {
    const std::size_t row = batch[static_cast<std::size_t>(r)];
    if (row >= static_cast<std::size_t>(features.rows()) || row >= labels.size()) {
      throw std::out_of_range("mlp: batch index " + std::to_string(row) + " out of range");
    }
    X.row(r) = features.row(static_cast<Eigen::Index>(row));
    y[static_cast<std::size_t>(r)] = labels[row];
    if (y[static_cast<std::size_t>(r)] < 0 || y[static_cast<std::size_t>(r)] >= C) {
      throw std::out_of_range("mlp: label out of range");
    }
  }

  // Forward.
  RowMatrix pre = X * W1.transpose();
  pre.rowwise() += b1.transpose();
  const RowMatrix hid = pre.cwiseMax(0.0);
  RowMatrix logits = hid * W2.transpose();
  logits.rowwise() += b2.transpose();

  double loss = 0.0;
  RowMatrix dlogits(B, C);
  for (Eigen::Index r = 0; r < B; ++r) {
    const double mx = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp();
    const double z = e.sum();
    const int label = y[static_cast<std::size_t>(r)];
    loss += std::log(z) - (logits(r, label) - mx);
    dlogits.row(r) = e / z;
    dlogits(r, label) -= 1.0;
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  loss *= inv_b;
  dlogits *= inv_b;

  // Backward.
  LossGradient out{loss, Vector::Zero(params.size())};
  RowMapMut gW1(out.gradient.data() + o.w1, H, D);
  Eigen::Map<Vector> gb1(out.gradient.data() + o.b1, H);
  RowMapMut gW2(out.gradient.data() + o.w2, C, H);
  Eigen::Map<Vector> gb2(out.gradient.data() + o.b2, C);

  gW2.noalias() = dlogits.transpose() * hid;
  gb2 = dlogits.colwise().sum().transpose();
  RowMatrix dpre = dlogits * W2;
  dpre = dpre.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  gW1.noalias() = dpre.transpose() * X;
  gb1 = dpre.colwise().sum().transpose();
  return out;
}

LossGradient mlp_gradient(const MlpModel& model, const Vector& params, const LabeledDataset& data,
                          const Shard& shard, std::span<const std::size_t> batch) {
  std::vector<std::size_t> rows;
  rows.reserve(batch.size());
  for (std::size_t b : batch) {
    if (b >= shard.rows.size()) throw std::out_of_range("mlp: batch index outside shard");
    rows.push_back(shard.rows[b]);
  }
  return mlp_loss_gradient(model, params, data.features, data.labels, rows);
}

double mlp_loss(const MlpModel& model, const Vector& params, const RowMatrix& features,
                std::span<const int> labels) {
  std::vector<std::size_t> all(static_cast<std::size_t>(features.rows()));
  std::iota(all.begin(), all.end(), std::size_t{0});
  return mlp_loss_gradient(model, params, features, labels, all).loss;
}

MlpLocal::MlpLocal(MlpModel model, const LabeledDataset& data, const Shard& shard) : model_(model) {
  if (shard.rows.empty()) throw std::invalid_argument("mlp: empty shard");
  if (data.dim() != model_.input) throw std::invalid_argument("mlp: data width does not match input size");
  features_.resize(static_cast<Eigen::Index>(shard.rows.size()), data.features.cols());
  labels_.reserve(shard.rows.size());
  for (std::size_t r = 0; r < shard.rows.size(); ++r) {
    features_.row(static_cast<Eigen::Index>(r)) = data.features.row(static_cast<Eigen::Index>(shard.rows[r]));
    labels_.push_back(data.labels.at(shard.rows[r]));
  }
  all_rows_.resize(labels_.size());
  std::iota(all_rows_.begin(), all_rows_.end(), std::size_t{0});
}

double MlpLocal::value(const Vector& x) const {
  return mlp_loss_gradient(model_, x, features_, labels_, all_rows_).loss;
}

Vector MlpLocal::gradient(const Vector& x) const {
  return mlp_loss_gradient(model_, x, features_, labels_, all_rows_).gradient;
}

Vector MlpLocal::minibatch_gradient(const Vector& x, std::span<const std::size_t> batch) const {
  return mlp_loss_gradient(model_, x, features_, labels_, batch).gradient;
}

ObjectiveSuite mlp_suite(const MlpModel& model, const LabeledDataset& data, const std::vector<Shard>& shards) {
  std::vector<std::shared_ptr<const LocalObjective>> locals;
  locals.reserve(shards.size());
  for (const auto& s : shards) locals.push_back(std::make_shared<MlpLocal>(model, data, s));
  return ObjectiveSuite(std::move(locals));
}

}  // namespace rasgd
