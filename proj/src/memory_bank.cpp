#include "eir/memory_bank.hpp"

#include <cmath>
#include <string>

#include "eir/error.hpp"
#include "eir/rng.hpp"

namespace eir {

EmbeddingBank::EmbeddingBank(std::size_t n, std::size_t d, double momentum, std::uint64_t seed)
    : momentum_(momentum) {
  if (n == 0 || d == 0)
    throw_parameter("memory bank: n and d must be positive, got n=" + std::to_string(n) +
                    " d=" + std::to_string(d));
  if (momentum < 0.0 || momentum > 1.0)
    throw_parameter("memory bank: momentum must be in [0,1], got " + std::to_string(momentum));
  rows_ = Tensor::zeros({n, d});
  Rng rng = derive_rng(seed, Stream::bank_init);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = rng.normal();
      rows_[i * d + j] = v;
      ss += v * v;
    }
    const double norm = std::sqrt(ss);
    for (std::size_t j = 0; j < d; ++j) rows_[i * d + j] /= norm;
  }
}

EmbeddingBank::EmbeddingBank(Tensor rows, double momentum)
    : rows_(std::move(rows)), momentum_(momentum) {
  if (rows_.rank() != 2) throw_dimension("memory bank: rows must be 2-d");
}

Tensor EmbeddingBank::lookup(const std::vector<std::size_t>& indices) const {
  const std::size_t n = size(), d = dim();
  Tensor out = Tensor::zeros({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n)
      throw_index("memory bank lookup: index " + std::to_string(indices[r]) +
                  " out of range [0, " + std::to_string(n) + ")");
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = rows_[indices[r] * d + j];
  }
  return out;
}

void EmbeddingBank::update(std::size_t index, const Tensor& v_new) {
  if (v_new.size() != dim()) throw_dimension("memory bank update: feature dimension mismatch");
  update(index, v_new.data());
}

void EmbeddingBank::update(std::size_t index, const double* v_new) {
  const std::size_t d = dim();
  if (index >= size())
    throw_index("memory bank update: index " + std::to_string(index) + " out of range");
  for (std::size_t j = 0; j < d; ++j)
    if (!std::isfinite(v_new[j]))
      throw_numeric("memory bank update: non-finite feature component at " + std::to_string(j));
  const double m = momentum_;
  if (m == 1.0) return;  // stored feature keeps full weight
  if (m == 0.0) {        // fresh feature replaces the row outright
    for (std::size_t j = 0; j < d; ++j) rows_[index * d + j] = v_new[j];
    return;
  }
  double ss = 0.0;
  std::vector<double> blended(d);
  for (std::size_t j = 0; j < d; ++j) {
    blended[j] = (1.0 - m) * v_new[j] + m * rows_[index * d + j];
    ss += blended[j] * blended[j];
  }
  const double norm = std::sqrt(ss);
  if (!(norm > 1e-12))
    throw_numeric("memory bank update: blended feature for row " + std::to_string(index) +
                  " has degenerate norm " + std::to_string(norm));
  for (std::size_t j = 0; j < d; ++j) rows_[index * d + j] = blended[j] / norm;
}

void EmbeddingBank::quantize_f32() {
  for (std::size_t i = 0; i < rows_.size(); ++i)
    rows_[i] = static_cast<double>(static_cast<float>(rows_[i]));
}

}  // namespace eir
