#include "rasgd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "rasgd/rng.hpp"

namespace rasgd {

void LabeledDataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw std::invalid_argument("dataset: " + std::to_string(features.rows()) + " feature rows but " +
                                std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw std::invalid_argument("dataset: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
  }
}

namespace {

// Fisher-Yates driven by a counter-based stream.
void shuffle_rows(std::vector<std::size_t>& rows, std::uint64_t seed, std::uint32_t tag) {
  RandomStream rng(seed, StreamPurpose::Shuffle, tag, 0);
  for (std::size_t i = rows.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(rows[i - 1], rows[j]);
  }
}

}  // namespace

std::vector<Shard> partition_by_label(const LabeledDataset& data, std::size_t n, std::uint64_t seed) {
  data.validate();
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t r = 0; r < data.labels.size(); ++r) by_label[data.labels[r]].push_back(r);
  if (by_label.size() != n || n == 0) {
    throw std::invalid_argument("label/worker mismatch: " + std::to_string(by_label.size()) +
                                " distinct labels for " + std::to_string(n) + " workers");
  }

  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  for (const auto& [label, rows] : by_label) smallest = std::min(smallest, rows.size());

  std::vector<Shard> shards;
  shards.reserve(n);
  int owner = 1;
  for (auto& [label, rows] : by_label) {
    shuffle_rows(rows, seed, static_cast<std::uint32_t>(label));
    rows.resize(smallest);
    shards.push_back({owner++, std::move(rows)});
  }
  return shards;
}

LabeledDataset synth_classification(int classes, std::size_t dim, std::size_t per_class, double separation,
                                    std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (per_class < 1) throw std::invalid_argument("synthetic data needs at least 1 row per class");
  if (dim < 1) throw std::invalid_argument("synthetic data needs positive dimension");
  if (!(separation >= 0.0)) throw std::invalid_argument("separation must be nonnegative");

  // Random directions, then rescaled so the closest pair sits exactly `separation` apart.
  Eigen::MatrixXd means(classes, static_cast<Eigen::Index>(dim));
  for (int c = 0; c < classes; ++c) {
    RandomStream rng(seed, StreamPurpose::Dataset, static_cast<std::uint32_t>(c), 0);
    for (std::size_t j = 0; j < dim; ++j) means(c, static_cast<Eigen::Index>(j)) = rng.normal();
  }
  double closest = std::numeric_limits<double>::infinity();
  for (int a = 0; a < classes; ++a) {
    for (int b = a + 1; b < classes; ++b) closest = std::min(closest, (means.row(a) - means.row(b)).norm());
  }
  means *= (closest > 0.0) ? separation / closest : 0.0;

  LabeledDataset out;
  out.classes = classes;
  const auto rows = static_cast<Eigen::Index>(per_class) * classes;
  out.features.resize(rows, static_cast<Eigen::Index>(dim));
  out.labels.reserve(static_cast<std::size_t>(rows));
  Eigen::Index r = 0;
  for (int c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++r) {
      RandomStream rng(seed, StreamPurpose::Dataset, static_cast<std::uint32_t>(c), k + 1);
      for (std::size_t j = 0; j < dim; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        out.features(r, jj) = means(c, jj) + rng.normal();
      }
      out.labels.push_back(c);
    }
  }
  return out;
}

Normalization feature_statistics(const LabeledDataset& data) {
  const auto count = static_cast<double>(data.features.size());
  if (count == 0) return {};
  const double mean = data.features.mean();
  const double var = (data.features.array() - mean).square().sum() / count;
  return {mean, std::sqrt(var)};
}

Normalization normalize(LabeledDataset& data, std::optional<Normalization> constants) {
  const Normalization c = constants.value_or(feature_statistics(data));
  if (!(c.stddev > 0.0)) throw std::invalid_argument("normalization: standard deviation must be positive");
  data.features = (data.features.array() - c.mean) / c.stddev;
  return c;
}

// IDX

std::size_t IdxTensor::element_count() const {
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  return count;
}

namespace {

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::size_t element_width(IdxType type) { return type == IdxType::Float ? 4 : 1; }

}  // namespace

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 0 || bytes[1] != 0 ||
      (bytes[2] != static_cast<std::uint8_t>(IdxType::UnsignedByte) &&
       bytes[2] != static_cast<std::uint8_t>(IdxType::Float))) {
    throw std::runtime_error("not IDX");
  }
  IdxTensor t;
  t.type = static_cast<IdxType>(bytes[2]);
  const std::size_t rank = bytes[3];
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw std::runtime_error("truncated");
  for (std::size_t i = 0; i < rank; ++i) t.dims.push_back(read_be32(bytes.data() + 4 + 4 * i));

  const std::size_t count = t.element_count();
  const std::size_t width = element_width(t.type);
  if (bytes.size() - header != count * width) throw std::runtime_error("truncated");

  t.values.resize(count);
  const std::uint8_t* payload = bytes.data() + header;
  for (std::size_t i = 0; i < count; ++i) {
    if (t.type == IdxType::UnsignedByte) {
      t.values[i] = payload[i];
    } else {
      const std::uint32_t bits = read_be32(payload + 4 * i);
      float f = 0.0f;
      static_assert(sizeof(f) == sizeof(bits));
      std::memcpy(&f, &bits, sizeof(f));
      t.values[i] = f;
    }
  }
  return t;
}

IdxTensor read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor) {
  if (tensor.dims.size() > 255) throw std::invalid_argument("IDX rank exceeds 255");
  if (tensor.values.size() != tensor.element_count()) {
    throw std::invalid_argument("IDX tensor: value count does not match dimensions");
  }
  std::vector<std::uint8_t> out{0, 0, static_cast<std::uint8_t>(tensor.type),
                                static_cast<std::uint8_t>(tensor.dims.size())};
  for (auto d : tensor.dims) append_be32(out, d);
  for (double v : tensor.values) {
    if (tensor.type == IdxType::UnsignedByte) {
      if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
        throw std::invalid_argument("IDX ubyte value out of range");
      }
      out.push_back(static_cast<std::uint8_t>(v));
    } else {
      const float f = static_cast<float>(v);
      std::uint32_t bits = 0;
      std::memcpy(&bits, &f, sizeof(bits));
      append_be32(out, bits);
    }
  }
  return out;
}

void write_idx(const std::filesystem::path& path, const IdxTensor& tensor) {
  const auto bytes = encode_idx(tensor);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const IdxTensor x = read_idx(images);
  const IdxTensor y = read_idx(labels);
  if (x.dims.empty() || y.dims.size() != 1 || x.dims[0] != y.dims[0]) {
    throw std::invalid_argument("IDX images and labels disagree on example count");
  }
  const std::size_t n = x.dims[0];
  const std::size_t d = n == 0 ? 0 : x.element_count() / n;
  const double scale = x.type == IdxType::UnsignedByte ? 1.0 / 255.0 : 1.0;

  LabeledDataset out;
  out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n * d; ++i) out.features.data()[i] = x.values[i] * scale;
  int max_label = -1;
  for (double v : y.values) {
    const int label = static_cast<int>(v);
    if (label < 0 || static_cast<double>(label) != v) throw std::invalid_argument("IDX label must be a nonnegative integer");
    out.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  out.classes = max_label + 1;
  out.validate();
  return out;
}

}  // namespace rasgd
