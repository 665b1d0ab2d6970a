#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rasgd {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LabeledDataset {
  RowMatrix features;       // N x d
  std::vector<int> labels;  // N entries in [0, classes)
  int classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  /// Throws std::invalid_argument if row/label counts or label ranges disagree.
  void validate() const;
};

/// Rows of a dataset owned by one worker (1-based owner id).
struct Shard {
  int owner = 0;
  std::vector<std::size_t> rows;
};

/// One shard per class: shard i holds only rows of the i-th smallest label,
/// shuffled by `seed` and trimmed to the smallest class count. Throws
/// "label/worker mismatch" unless the dataset has exactly n distinct labels.
std::vector<Shard> partition_by_label(const LabeledDataset& data, std::size_t n, std::uint64_t seed);

/// Gaussian clusters with unit-variance noise around class means whose
/// minimum pairwise distance is exactly `separation`.
LabeledDataset synth_classification(int classes, std::size_t dim, std::size_t per_class, double separation,
                                    std::uint64_t seed);

struct Normalization {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Scalar mean/std over every feature entry.
Normalization feature_statistics(const LabeledDataset& data);
/// Applies (x - mean) / stddev in place and returns the constants used.
Normalization normalize(LabeledDataset& data, std::optional<Normalization> constants = std::nullopt);

// IDX files: 2 zero bytes, type byte, rank byte, big-endian u32 dims, row-major payload.

enum class IdxType : std::uint8_t { UnsignedByte = 0x08, Float = 0x0D };

struct IdxTensor {
  IdxType type = IdxType::UnsignedByte;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t element_count() const;
};

IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
IdxTensor read_idx(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor);
void write_idx(const std::filesystem::path& path, const IdxTensor& tensor);

/// Images (N x rows x cols, scaled to [0, 1]) and labels from a pair of IDX files.
LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);

}  // namespace rasgd
