#include "eir/encoder.hpp"

#include <cmath>
#include <string>

#include "eir/error.hpp"
#include "eir/rng.hpp"

namespace eir {

void validate_spec(const EncoderSpec& spec) {
  if (spec.embed_dim == 0) throw_config("encoder spec: embed_dim must be positive");
  if (spec.layer_widths.empty()) throw_config("encoder spec: layer_widths is empty");
  for (std::size_t w : spec.layer_widths)
    if (w == 0) throw_config("encoder spec: zero layer width");
  if (spec.layer_widths.back() != spec.embed_dim)
    throw_config("encoder spec: final layer width " + std::to_string(spec.layer_widths.back()) +
                 " != embed_dim " + std::to_string(spec.embed_dim));
  if (spec.architecture == Architecture::mlp) {
    if (spec.input_shape.size() != 1 || spec.input_shape[0] == 0)
      throw_config("encoder spec: mlp needs input_shape {dim}");
  } else {
    if (spec.input_shape.size() != 3)
      throw_config("encoder spec: small_cnn needs input_shape {C,H,W}");
    if (spec.layer_widths.size() < 3)
      throw_config("encoder spec: small_cnn needs two conv widths plus fc widths");
    if (spec.input_shape[1] % 4 != 0 || spec.input_shape[2] % 4 != 0)
      throw_config("encoder spec: small_cnn needs H and W divisible by 4");
  }
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : weights) n += t.size();
  for (const Tensor& t : biases) n += t.size();
  return n;
}

std::vector<Tensor> EncoderParams::all() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

namespace {

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

EncoderParams init_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Rng rng = derive_rng(seed, Stream::encoder_init);
  EncoderParams params;
  if (spec.architecture == Architecture::mlp) {
    std::size_t prev = spec.input_shape[0];
    for (std::size_t width : spec.layer_widths) {
      params.weights.push_back(he_uniform({prev, width}, prev, rng));
      params.biases.push_back(Tensor::zeros({width}, true));
      prev = width;
    }
  } else {
    const std::size_t C = spec.input_shape[0];
    const std::size_t H = spec.input_shape[1], W = spec.input_shape[2];
    const std::size_t c1 = spec.layer_widths[0], c2 = spec.layer_widths[1];
    params.weights.push_back(he_uniform({c1, C, 3, 3}, C * 9, rng));
    params.biases.push_back(Tensor::zeros({c1}, true));
    params.weights.push_back(he_uniform({c2, c1, 3, 3}, c1 * 9, rng));
    params.biases.push_back(Tensor::zeros({c2}, true));
    std::size_t prev = c2 * (H / 4) * (W / 4);
    for (std::size_t i = 2; i < spec.layer_widths.size(); ++i) {
      const std::size_t width = spec.layer_widths[i];
      params.weights.push_back(he_uniform({prev, width}, prev, rng));
      params.biases.push_back(Tensor::zeros({width}, true));
      prev = width;
    }
  }
  return params;
}

namespace {

Tensor forward_prenorm_impl(Tape& tape, const EncoderSpec& spec, const EncoderParams& params,
                            const Tensor& batch) {
  if (batch.rank() < 2)
    throw_dimension("encoder forward: batch must have a leading batch dimension");
  const std::size_t sample_elems = shape_size(spec.input_shape);
  if (batch.size() / batch.shape()[0] != sample_elems)
    throw_dimension("encoder forward: sample shape mismatch, batch " + shape_str(batch.shape()) +
                    " vs spec input " + shape_str(spec.input_shape));
  const std::size_t B = batch.shape()[0];

  Tensor h = batch;
  std::size_t layer = 0;
  if (spec.architecture == Architecture::small_cnn) {
    const std::size_t C = spec.input_shape[0], H = spec.input_shape[1], W = spec.input_shape[2];
    h = reshape(tape, h, {B, C, H, W});
    h = conv2d_3x3(tape, h, params.weights[0], params.biases[0]);
    h = relu(tape, h);
    h = avg_pool2(tape, h);
    h = conv2d_3x3(tape, h, params.weights[1], params.biases[1]);
    h = relu(tape, h);
    h = avg_pool2(tape, h);
    h = reshape(tape, h, {B, shape_size(h.shape()) / B});
    layer = 2;
  } else {
    h = reshape(tape, h, {B, sample_elems});
  }
  for (; layer < params.weights.size(); ++layer) {
    h = add_rowvec(tape, matmul(tape, h, params.weights[layer]), params.biases[layer]);
    if (layer + 1 < params.weights.size()) h = relu(tape, h);
  }
  return h;
}

}  // namespace

Tensor encoder_forward_prenorm(Tape& tape, const EncoderSpec& spec, const EncoderParams& params,
                               const Tensor& batch) {
  return forward_prenorm_impl(tape, spec, params, batch);
}

Tensor encoder_forward(Tape& tape, const EncoderSpec& spec, const EncoderParams& params,
                       const Tensor& batch) {
  return l2_normalize(tape, forward_prenorm_impl(tape, spec, params, batch));
}

}  // namespace eir
