#pragma once

#include <cstdint>
#include <vector>

#include "eir/tensor.hpp"

namespace eir {

enum class Architecture { mlp, small_cnn };

/// Architecture description for the embedding function. layer_widths are the
/// trainable layer output sizes in order; the last one must equal embed_dim.
/// For small_cnn the first two entries are conv channel counts and the rest
/// are fully connected widths.
struct EncoderSpec {
  Architecture architecture = Architecture::mlp;
  std::vector<std::size_t> layer_widths;
  std::size_t embed_dim = 128;
  Shape input_shape;  // {dim} for mlp, {C,H,W} for small_cnn
};

void validate_spec(const EncoderSpec& spec);

struct EncoderParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t parameter_count() const;
  /// weights[0], biases[0], weights[1], ... — fixed traversal order shared
  /// by the optimizer and the checkpoint format.
  std::vector<Tensor> all() const;
};

/// He-style scaled uniform init, U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
/// biases zero. Deterministic per seed.
EncoderParams init_encoder(const EncoderSpec& spec, std::uint64_t seed);

/// batch [B x input] -> unit-norm embeddings [B x D]. Pure per-sample
/// function of (params, batch); differentiable end to end.
Tensor encoder_forward(Tape& tape, const EncoderSpec& spec, const EncoderParams& params,
                       const Tensor& batch);

/// Penultimate activations before the final normalization (linear-probe hook).
Tensor encoder_forward_prenorm(Tape& tape, const EncoderSpec& spec, const EncoderParams& params,
                               const Tensor& batch);

}  // namespace eir
