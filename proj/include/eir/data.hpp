#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "eir/tensor.hpp"

namespace eir {

/// Fixed-shape sample collection. Labels ride along for evaluation only;
/// the training path sees samples through UnlabeledView and cannot reach
/// them.
struct Dataset {
  Shape sample_shape;
  std::vector<double> store;  // count x sample elements, row-major
  std::vector<int> labels;
  double value_lo = 0.0;
  double value_hi = 1.0;
  std::string name;
  std::string split;

  std::size_t count() const { return sample_shape.empty() ? 0 : labels.size(); }
  std::size_t sample_elems() const { return shape_size(sample_shape); }
  /// Sample i as a fresh 64-bit tensor.
  Tensor sample(std::size_t i) const;
  int num_classes() const;
};

/// Label-free window over a dataset: the only face the trainer sees.
class UnlabeledView {
 public:
  explicit UnlabeledView(const Dataset& dataset) : dataset_(&dataset) {}

  std::size_t size() const { return dataset_->count(); }
  const Shape& sample_shape() const { return dataset_->sample_shape; }
  Tensor sample(std::size_t i) const { return dataset_->sample(i); }
  double value_lo() const { return dataset_->value_lo; }
  double value_hi() const { return dataset_->value_hi; }

 private:
  const Dataset* dataset_;
};

/// One CIFAR-10 binary file: 3073-byte records, label byte then three
/// 1024-byte channel planes. Pixels scaled to [0,1].
Dataset parse_cifar10(const std::filesystem::path& file);

/// Standard directory layout: data_batch_1..5.bin for "train",
/// test_batch.bin for "test".
Dataset load_cifar10_dir(const std::filesystem::path& dir, const std::string& split);

struct SyntheticSpec {
  enum class Kind { vector_data, image_data };
  Kind kind = Kind::vector_data;
  std::size_t num_classes = 8;
  std::size_t per_class = 64;       // training samples per class
  std::size_t test_per_class = 16;  // disjoint test draws per class
  std::size_t dim = 64;             // vector ambient dimension
  std::size_t side = 16;            // image height/width
  std::size_t channels = 3;
  double separation = 6.0;  // class center scale
  double noise_std = 1.0;
  std::uint64_t seed = 1;
};

void validate_synthetic(const SyntheticSpec& spec);

/// Clustered dataset: unit random class centers scaled by separation,
/// Gaussian within-class noise, clipped to the valid value range.
std::pair<Dataset, Dataset> generate_synthetic(const SyntheticSpec& spec);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std_dev;
};

ChannelStats fit_normalization(const Dataset& dataset);
Dataset normalize(const Dataset& dataset, const ChannelStats& stats);
Dataset denormalize(const Dataset& dataset, const ChannelStats& stats);

/// Raw-array interchange format (magic "EIRD"): u32 count, u32 rank,
/// u64 dims, then f32 little-endian samples, then u32 labels.
Dataset load_raw(const std::filesystem::path& file);
void save_raw(const Dataset& dataset, const std::filesystem::path& file);

/// FNV-1a over sample bytes and labels; stable content fingerprint.
std::uint64_t dataset_hash(const Dataset& dataset);

}  // namespace eir
