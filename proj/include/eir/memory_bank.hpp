#pragma once

#include <cstdint>
#include <vector>

#include "eir/tensor.hpp"

namespace eir {

/// N x D store of per-instance features, one row per training sample.
/// Rows stay unit-norm; gradients never flow through the bank.
class EmbeddingBank {
 public:
  /// Rows initialized to independent random unit directions.
  EmbeddingBank(std::size_t n, std::size_t d, double momentum, std::uint64_t seed);
  /// Adopts existing row data (checkpoint load path).
  EmbeddingBank(Tensor rows, double momentum);

  std::size_t size() const { return rows_.shape()[0]; }
  std::size_t dim() const { return rows_.shape()[1]; }
  double momentum() const { return momentum_; }

  /// Row copies as gradient-free constants, [k x D].
  Tensor lookup(const std::vector<std::size_t>& indices) const;

  /// Row i <- l2((1-m) * v_new + m * row_i). v_new must be unit-norm.
  void update(std::size_t index, const Tensor& v_new);
  void update(std::size_t index, const double* v_new);

  /// Whole bank as a gradient-free tensor (negatives pool in the losses).
  const Tensor& rows() const { return rows_; }

  /// Rounds every row to 32-bit floats (checkpoint precision boundary).
  void quantize_f32();

 private:
  Tensor rows_;
  double momentum_;
};

}  // namespace eir
