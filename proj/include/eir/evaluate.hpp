#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "eir/augment.hpp"
#include "eir/data.hpp"
#include "eir/encoder.hpp"
#include "eir/memory_bank.hpp"
#include "eir/tensor.hpp"

namespace eir {

/// Frozen feature matrix with labels; rows unit-norm.
struct EvalIndex {
  Tensor features;  // [M x D]
  std::vector<int> labels;
  std::string split;

  std::size_t size() const { return features.defined() ? features.shape()[0] : 0; }
  std::size_t dim() const { return features.shape()[1]; }
};

void validate_index(const EvalIndex& index);

/// Weighted kNN vote among the k highest-cosine neighbours: each neighbour
/// votes exp(sim/tau) for its label (or 1 when weighted=false). Ties break
/// toward the smaller label id; equal similarities rank by smaller row index.
int knn_classify(const double* query, std::size_t dim, const EvalIndex& index, std::size_t k,
                 double tau, bool weighted = true);

double knn_accuracy(const EvalIndex& test, const EvalIndex& train, std::size_t k, double tau,
                    bool weighted = true);

struct ProbeConfig {
  std::size_t epochs = 100;
  double lr = 0.5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// Linear classifier + softmax cross-entropy trained by SGD on frozen
/// features; returns test top-1 accuracy.
double linear_probe(const Tensor& train_feats, const std::vector<int>& train_labels,
                    const Tensor& test_feats, const std::vector<int>& test_labels,
                    const ProbeConfig& config = {});

/// Self-excluded retrieval: success at k iff any of the query's top-k
/// neighbours shares its label. Every k must be < M.
std::map<std::size_t, double> recall_at_k(const EvalIndex& index,
                                          const std::vector<std::size_t>& ks);

/// Top-2 principal components of the centered features, [M x 2]. Component
/// sign fixed so each one's largest-magnitude coordinate is positive.
Tensor project_2d(const Tensor& features);

/// Mean evaluation-time KL between the two view distributions over the bank
/// for up to max_samples instances. No gradients, no mutation.
double intra_alignment_diagnostic(const EncoderSpec& spec, const EncoderParams& params,
                                  const EmbeddingBank& bank, const UnlabeledView& data,
                                  const AugmentPolicy& policy, double intra_tau,
                                  std::size_t max_samples, std::uint64_t seed);

/// Raw (augmentation-free) samples through the encoder, in batches.
Tensor extract_features(const EncoderSpec& spec, const EncoderParams& params,
                        const Dataset& dataset, std::size_t batch_size = 256);

EvalIndex build_index(const EncoderSpec& spec, const EncoderParams& params,
                      const Dataset& dataset);

}  // namespace eir
