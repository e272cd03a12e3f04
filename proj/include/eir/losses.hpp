#pragma once

#include <utility>
#include <vector>

#include "eir/memory_bank.hpp"
#include "eir/tensor.hpp"

namespace eir {

struct LossConfig {
  double tau = 0.1;        // softmax temperature
  double lambda1 = 15.0;   // intra-instance weight
  double lambda2 = 2.0;    // inter-instance weight
  double intra_tau = 0.1;  // temperature converting distances to distributions
  bool avg_views = false;  // halve the two-view probability sum
  bool inter_literal = false;       // log of the summed softmax terms instead of per-row mean
  bool inter_stop_gradient = false; // detach the feature-addition targets
};

void validate_loss_config(const LossConfig& config);

struct LossReport {
  double l_iraug = 0.0;
  double l_intra = 0.0;
  double l_inter = 0.0;
  double total = 0.0;
};

/// Probability of feature v being recognized as instance i against the whole
/// bank: exp(v_i.v/tau) / sum_j exp(v_j.v/tau). Value only, no gradients.
double instance_probability(const Tensor& v, const EmbeddingBank& bank, std::size_t i, double tau);

/// Two-view instance recognition loss: batch mean of
/// -log[ P(i|v) + P(i|v_hat) ]. The sum of two softmax probabilities can
/// exceed 1, so negative values are legal. avg_views halves the sum.
Tensor iraug_loss(Tape& tape, const Tensor& v_batch, const Tensor& vhat_batch,
                  const std::vector<std::size_t>& indices, const EmbeddingBank& bank, double tau,
                  bool avg_views = false);

/// Distance distributions of one instance's two views over the bank,
/// softmax(v.v_i / intra_tau) for i = 1..N. Accepts a single vector or a
/// batch of rows.
std::pair<Tensor, Tensor> intra_distributions(Tape& tape, const Tensor& v, const Tensor& vhat,
                                              const EmbeddingBank& bank, double intra_tau);

/// Batch mean of KL(P || Q) between the two view distributions. Gradients
/// flow into both views; bank rows are constants.
Tensor intra_loss(Tape& tape, const Tensor& v_batch, const Tensor& vhat_batch,
                  const EmbeddingBank& bank, double intra_tau);

/// Interpolation consistency loss. interp_feats row k is the embedding of
/// the pixel-space interpolation; target_feats row k is the normalized
/// ratio-weighted feature sum. Negatives are the batch's interpolated
/// features. Default is the per-row cross-entropy mean; literal mode takes
/// the log of the summed softmax terms.
Tensor inter_loss(Tape& tape, const Tensor& interp_feats, const Tensor& target_feats, double tau,
                  bool literal = false);

/// total = l_iraug + lambda1 * l_intra + lambda2 * l_inter.
LossReport combine_losses(double l_iraug, double l_intra, double l_inter, double lambda1,
                          double lambda2);

}  // namespace eir
