#include "eir/losses.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "eir/error.hpp"

namespace eir {

void validate_loss_config(const LossConfig& c) {
  if (!(c.tau > 0.0)) throw_parameter("loss config: tau must be positive");
  if (!(c.intra_tau > 0.0)) throw_parameter("loss config: intra_tau must be positive");
  if (c.lambda1 < 0.0 || c.lambda2 < 0.0)
    throw_parameter("loss config: lambda weights must be non-negative");
}

double instance_probability(const Tensor& v, const EmbeddingBank& bank, std::size_t i,
                            double tau) {
  if (!(tau > 0.0)) throw_parameter("instance_probability: tau must be positive");
  const std::size_t n = bank.size(), d = bank.dim();
  if (v.size() != d) throw_dimension("instance_probability: feature dimension mismatch");
  if (i >= n) throw_index("instance_probability: index out of range");
  const Tensor& rows = bank.rows();
  std::vector<double> sims(n);
  double mx = -1e300;
  for (std::size_t j = 0; j < n; ++j) {
    double dot = 0.0;
    for (std::size_t t = 0; t < d; ++t) dot += rows[j * d + t] * v[t];
    sims[j] = dot;
    if (dot > mx) mx = dot;
  }
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += std::exp((sims[j] - mx) / tau);
  return std::exp((sims[i] - mx) / tau) / total;
}

namespace {

// softmax over the bank per batch row, as one taped subgraph:
// probs = softmax(v . bank^T / tau).
Tensor bank_softmax(Tape& tape, const Tensor& batch, const EmbeddingBank& bank, double tau) {
  Tensor logits = matmul(tape, batch, transpose(tape, bank.rows()));
  return softmax_with_temperature(tape, logits, tau);
}

Tensor as_matrix(Tape& tape, const Tensor& t, std::size_t d) {
  if (t.rank() == 1) return reshape(tape, t, {1, t.size()});
  if (t.rank() == 2 && t.shape()[1] == d) return t;
  throw_dimension("losses: expected [D] or [BxD] features, got " + shape_str(t.shape()));
}

}  // namespace

Tensor iraug_loss(Tape& tape, const Tensor& v_batch, const Tensor& vhat_batch,
                  const std::vector<std::size_t>& indices, const EmbeddingBank& bank, double tau,
                  bool avg_views) {
  Tensor v = as_matrix(tape, v_batch, bank.dim());
  Tensor vhat = as_matrix(tape, vhat_batch, bank.dim());
  if (v.shape() != vhat.shape()) throw_dimension("iraug_loss: view batches differ in shape");
  if (v.rows() != indices.size()) throw_dimension("iraug_loss: one bank index per batch row");
  for (std::size_t i : indices)
    if (i >= bank.size()) throw_index("iraug_loss: bank index out of range");
  Tensor pv = pick_per_row(tape, bank_softmax(tape, v, bank, tau), indices);
  Tensor pvhat = pick_per_row(tape, bank_softmax(tape, vhat, bank, tau), indices);
  Tensor p = add(tape, pv, pvhat);
  if (avg_views) p = scale(tape, p, 0.5);
  return scale(tape, mean(tape, log(tape, p)), -1.0);
}

std::pair<Tensor, Tensor> intra_distributions(Tape& tape, const Tensor& v, const Tensor& vhat,
                                              const EmbeddingBank& bank, double intra_tau) {
  Tensor p = bank_softmax(tape, as_matrix(tape, v, bank.dim()), bank, intra_tau);
  Tensor q = bank_softmax(tape, as_matrix(tape, vhat, bank.dim()), bank, intra_tau);
  if (v.rank() == 1) {
    p = reshape(tape, p, {p.size()});
    q = reshape(tape, q, {q.size()});
  }
  return {std::move(p), std::move(q)};
}

Tensor intra_loss(Tape& tape, const Tensor& v_batch, const Tensor& vhat_batch,
                  const EmbeddingBank& bank, double intra_tau) {
  Tensor v = as_matrix(tape, v_batch, bank.dim());
  Tensor vhat = as_matrix(tape, vhat_batch, bank.dim());
  if (v.shape() != vhat.shape()) throw_dimension("intra_loss: view batches differ in shape");
  auto [p, q] = intra_distributions(tape, v, vhat, bank, intra_tau);
  // KL(P||Q) summed over the bank axis, averaged over batch rows.
  Tensor elem = mul(tape, p, sub(tape, log(tape, p), log(tape, q)));
  return scale(tape, sum(tape, elem), 1.0 / static_cast<double>(v.rows()));
}

Tensor inter_loss(Tape& tape, const Tensor& interp_feats, const Tensor& target_feats, double tau,
                  bool literal) {
  if (interp_feats.rank() != 2 || target_feats.rank() != 2 ||
      interp_feats.shape() != target_feats.shape())
    throw_dimension("inter_loss: expects matching [BxD] feature batches");
  const std::size_t b = interp_feats.shape()[0];
  if (b < 2)
    throw_parameter("inter_loss: need at least 2 interpolated samples for negatives, got " +
                    std::to_string(b));
  // M[k][j] = target_k . interp_j; row-wise softmax gives each target's
  // recognition distribution over the batch's interpolated features.
  Tensor logits = matmul(tape, target_feats, transpose(tape, interp_feats));
  Tensor probs = softmax_with_temperature(tape, logits, tau);
  std::vector<std::size_t> diag(b);
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  Tensor matched = pick_per_row(tape, probs, diag);
  if (literal) return scale(tape, log(tape, sum(tape, matched)), -1.0);
  return scale(tape, mean(tape, log(tape, matched)), -1.0);
}

LossReport combine_losses(double l_iraug, double l_intra, double l_inter, double lambda1,
                          double lambda2) {
  if (!std::isfinite(l_iraug) || !std::isfinite(l_intra) || !std::isfinite(l_inter))
    throw_numeric("combine_losses: non-finite loss component");
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw_parameter("combine_losses: lambda weights must be non-negative");
  LossReport report;
  report.l_iraug = l_iraug;
  report.l_intra = l_intra;
  report.l_inter = l_inter;
  report.total = l_iraug + lambda1 * l_intra + lambda2 * l_inter;
  return report;
}

}  // namespace eir
