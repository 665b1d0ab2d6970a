#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rasgd/data.hpp"
#include "rasgd/objectives.hpp"

namespace rasgd {

/// Two-layer perceptron: logits = W2 relu(W1 x + b1) + b2.
///
/// Flat parameter layout: W1 (hidden x input, row-major), b1, W2 (classes x
/// hidden, row-major), b2.
struct MlpModel {
  std::size_t input = 0;
  std::size_t hidden = 32;
  std::size_t classes = 10;

  std::size_t parameter_count() const { return hidden * input + hidden + classes * hidden + classes; }
};

/// He-normal weights, zero biases.
Vector mlp_init(const MlpModel& model, std::uint64_t seed);

struct LossGradient {
  double loss = 0.0;
  Vector gradient;
};

/// Mean cross-entropy and its gradient over `batch` (row indices into
/// `features`). Throws on an empty batch or out-of-range index.
LossGradient mlp_loss_gradient(const MlpModel& model, const Vector& params, const RowMatrix& features,
                               std::span<const int> labels, std::span<const std::size_t> batch);

/// Same, with batch indices interpreted as positions within `shard`.
LossGradient mlp_gradient(const MlpModel& model, const Vector& params, const LabeledDataset& data,
                          const Shard& shard, std::span<const std::size_t> batch);

/// Mean cross-entropy over every row of `features`.
double mlp_loss(const MlpModel& model, const Vector& params, const RowMatrix& features,
                std::span<const int> labels);

/// Local training loss of one worker: value and gradient use the whole
/// shard, minibatch draws use positions within it.
class MlpLocal final : public LocalObjective {
 public:
  MlpLocal(MlpModel model, const LabeledDataset& data, const Shard& shard);

  std::size_t dim() const override { return model_.parameter_count(); }
  double value(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;
  std::size_t sample_count() const override { return labels_.size(); }
  Vector minibatch_gradient(const Vector& x, std::span<const std::size_t> batch) const override;

  const MlpModel& model() const { return model_; }

 private:
  MlpModel model_;
  RowMatrix features_;
  std::vector<int> labels_;
  std::vector<std::size_t> all_rows_;
};

/// One MlpLocal per shard, in shard order.
ObjectiveSuite mlp_suite(const MlpModel& model, const LabeledDataset& data, const std::vector<Shard>& shards);

}  // namespace rasgd
