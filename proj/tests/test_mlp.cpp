#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rasgd/data.hpp"
#include "rasgd/mlp.hpp"
#include "rasgd/rng.hpp"

using namespace rasgd;

namespace {

struct Fixture {
  LabeledDataset data = synth_classification(3, 6, 8, 2.0, 1);
  MlpModel model{6, 5, 3};
  Vector params = mlp_init(model, 4);
  std::vector<std::size_t> batch = [] {
    std::vector<std::size_t> b(24);
    std::iota(b.begin(), b.end(), 0);
    return b;
  }();
};

}  // namespace

TEST_CASE("parameter layout and initialization") {
  Fixture f;
  CHECK(f.model.parameter_count() == 5 * 6 + 5 + 3 * 5 + 3);
  CHECK(static_cast<std::size_t>(f.params.size()) == f.model.parameter_count());
  CHECK(f.params.segment(30, 5).isZero());
  CHECK(f.params.tail(3).isZero());
  CHECK(mlp_init(f.model, 4) == f.params);
  CHECK(mlp_init(f.model, 5) != f.params);
}

TEST_CASE("zero parameters give log(C) loss") {
  Fixture f;
  const Vector zero = Vector::Zero(static_cast<Eigen::Index>(f.model.parameter_count()));
  const auto lg = mlp_loss_gradient(f.model, zero, f.data.features, f.data.labels, f.batch);
  CHECK(lg.loss == doctest::Approx(std::log(3.0)));
  CHECK(mlp_loss(f.model, zero, f.data.features, f.data.labels) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("finite-difference directional derivatives") {
  Fixture f;
  RandomStream r(3, StreamPurpose::Probe, 0, 0);
  const auto lg = mlp_loss_gradient(f.model, f.params, f.data.features, f.data.labels, f.batch);
  for (int trial = 0; trial < 20; ++trial) {
    Vector d(f.params.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = r.normal();
    d.normalize();
    const double h = 1e-5;
    const double lp = mlp_loss_gradient(f.model, f.params + h * d, f.data.features, f.data.labels, f.batch).loss;
    const double lm = mlp_loss_gradient(f.model, f.params - h * d, f.data.features, f.data.labels, f.batch).loss;
    const double fd = (lp - lm) / (2 * h);
    const double an = lg.gradient.dot(d);
    CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an)));
  }
}

TEST_CASE("batch errors") {
  Fixture f;
  std::vector<std::size_t> empty;
  CHECK_THROWS_WITH(mlp_loss_gradient(f.model, f.params, f.data.features, f.data.labels, empty),
                    doctest::Contains("empty batch"));
  std::vector<std::size_t> out{1000};
  CHECK_THROWS_AS(mlp_loss_gradient(f.model, f.params, f.data.features, f.data.labels, out), std::out_of_range);
}

TEST_CASE("local objective uses its shard") {
  Fixture f;
  const auto shards = partition_by_label(f.data, 3, 0);
  MlpLocal local(f.model, f.data, shards[1]);
  CHECK(local.sample_count() == 8);
  CHECK(local.dim() == f.model.parameter_count());
  std::vector<std::size_t> all(8);
  std::iota(all.begin(), all.end(), 0);
  CHECK(local.minibatch_gradient(f.params, all).isApprox(local.gradient(f.params)));
  CHECK(local.value(f.params) == doctest::Approx(mlp_gradient(f.model, f.params, f.data, shards[1], all).loss));
  const auto suite = mlp_suite(f.model, f.data, shards);
  CHECK(suite.n() == 3);
}
