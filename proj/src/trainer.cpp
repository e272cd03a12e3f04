#include "eir/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include "eir/error.hpp"
#include "eir/rng.hpp"

namespace eir {

LossConfig TrainConfig::loss_config() const {
  LossConfig c;
  c.tau = tau;
  c.lambda1 = lambda1;
  c.lambda2 = lambda2;
  c.intra_tau = effective_intra_tau();
  c.avg_views = avg_views;
  c.inter_literal = inter_literal;
  c.inter_stop_gradient = inter_stop_gradient;
  return c;
}

void validate_train_config(const TrainConfig& config) {
  if (config.epochs == 0) throw_config("train config: epochs must be > 0");
  if (config.batch_size < 2) throw_config("train config: batch_size must be >= 2");
  if (!(config.lr > 0.0)) throw_config("train config: lr must be > 0");
  if (config.rounds == 0) throw_config("train config: rounds must be > 0");
  if (config.sgd_momentum < 0.0 || config.sgd_momentum >= 1.0)
    throw_config("train config: sgd_momentum must be in [0,1)");
  if (config.weight_decay < 0.0) throw_config("train config: weight_decay must be >= 0");
  if (config.bank_momentum < 0.0 || config.bank_momentum > 1.0)
    throw_config("train config: bank_momentum must be in [0,1]");
  if (!(config.lr_decay > 0.0)) throw_config("train config: lr_decay must be > 0");
  if (config.encoder.embed_dim != config.embed_dim)
    throw_config("train config: encoder embed_dim " + std::to_string(config.encoder.embed_dim) +
                 " != embed_dim " + std::to_string(config.embed_dim));
  validate_spec(config.encoder);
  validate_loss_config(config.loss_config());
  validate_policy(config.augment);
  validate_interpolation(config.interpolation);
}

double lr_at_epoch(const TrainConfig& config, std::size_t epoch_in_round) {
  // Divide by the accumulated inverse decay instead of multiplying by the
  // decay: for the 0.03 / {0.1, 0.01} recipe this lands on the exact decimal
  // doubles (0.003, 0.0003), which repeated multiplication misses by 1 ulp.
  const double inv_decay = 1.0 / config.lr_decay;
  double divisor = 1.0;
  for (std::size_t milestone : config.lr_milestones)
    if (epoch_in_round > milestone) divisor *= inv_decay;
  return config.lr / divisor;
}

void TrainState::quantize_f32() {
  auto quantize = [](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = static_cast<double>(static_cast<float>(t[i]));
  };
  for (Tensor& t : params.weights) quantize(t);
  for (Tensor& t : params.biases) quantize(t);
  for (Tensor& t : velocity) quantize(t);
  bank.quantize_f32();
}

TrainState init_train_state(const TrainConfig& config, std::size_t dataset_size) {
  validate_train_config(config);
  if (dataset_size == 0) throw_config("train: dataset is empty");
  TrainState state{EncoderParams{},
                   EmbeddingBank(dataset_size, config.embed_dim, config.bank_momentum,
                                 config.seed),
                   {},
                   0};
  state.params = init_encoder(config.encoder, config.seed);
  for (const Tensor& t : state.params.all()) state.velocity.push_back(Tensor::zeros(t.shape()));
  return state;
}

void sgd_update(std::vector<Tensor>& params, std::vector<Tensor>& velocity, double lr,
                double momentum, double weight_decay, const std::vector<std::string>& names) {
  if (params.size() != velocity.size())
    throw_dimension("sgd_update: velocity buffer count mismatch");
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    Tensor& vel = velocity[p];
    if (param.shape() != vel.shape()) throw_dimension("sgd_update: velocity shape mismatch");
    const bool has_grad = param.has_grad();
    const std::vector<double>& g = param.impl()->grad;
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double grad = has_grad ? g[i] : 0.0;
      if (!std::isfinite(grad)) {
        const std::string name = p < names.size() ? names[p] : "param[" + std::to_string(p) + "]";
        throw_numeric("sgd_update: non-finite gradient in " + name + " at element " +
                      std::to_string(i));
      }
      vel[i] = momentum * vel[i] + grad + weight_decay * param[i];
      param[i] -= lr * vel[i];
    }
  }
}

namespace {

std::vector<std::string> param_names(const EncoderParams& params) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    names.push_back("weights[" + std::to_string(i) + "]");
    names.push_back("biases[" + std::to_string(i) + "]");
  }
  return names;
}

Tensor assemble_batch(const std::vector<Tensor>& samples) {
  const std::size_t b = samples.size();
  const std::size_t elems = samples[0].size();
  Tensor out = Tensor::zeros({b, elems});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < elems; ++j) out[i * elems + j] = samples[i][j];
  return out;
}

}  // namespace

LossReport train_step(TrainState& state, const UnlabeledView& data,
                      const std::vector<std::size_t>& batch_indices, const TrainConfig& config,
                      std::size_t global_epoch, std::size_t step) {
  const std::size_t b = batch_indices.size();
  if (b < 2) throw_parameter("train_step: batch must hold at least 2 samples");
  {
    std::set<std::size_t> unique(batch_indices.begin(), batch_indices.end());
    if (unique.size() != b)
      throw_parameter("train_step: duplicate instance indices within batch");
  }
  const double lo = data.value_lo(), hi = data.value_hi();
  const double lr = lr_at_epoch(config, (state.epochs_done % config.epochs) + 1);

  // Two stochastic views per sample, each from its own derived stream.
  std::vector<Tensor> view1(b), view2(b);
  for (std::size_t i = 0; i < b; ++i) {
    const Tensor x = data.sample(batch_indices[i]);
    Rng r1 = derive_rng(config.seed, Stream::view, {global_epoch, step, batch_indices[i], 0});
    Rng r2 = derive_rng(config.seed, Stream::view, {global_epoch, step, batch_indices[i], 1});
    view1[i] = augment_view(x, config.augment, r1, lo, hi);
    view2[i] = augment_view(x, config.augment, r2, lo, hi);
  }

  Tape tape;
  const Tensor v = encoder_forward(tape, config.encoder, state.params, assemble_batch(view1));
  const Tensor vhat = encoder_forward(tape, config.encoder, state.params, assemble_batch(view2));

  Tensor l_iraug =
      iraug_loss(tape, v, vhat, batch_indices, state.bank, config.tau, config.avg_views);
  Tensor total = l_iraug;

  Tensor l_intra;
  if (config.lambda1 > 0.0) {
    l_intra = intra_loss(tape, v, vhat, state.bank, config.effective_intra_tau());
    total = add(tape, total, scale(tape, l_intra, config.lambda1));
  }

  Tensor l_inter;
  if (config.lambda2 > 0.0) {
    // Pair each sample with a distinct batch partner, interpolate the
    // view-1 samples, and build ratio-weighted feature targets.
    Rng pair_rng = derive_rng(config.seed, Stream::pairing, {global_epoch, step});
    std::vector<std::size_t> partners(b);
    for (std::size_t i = 0; i < b; ++i) {
      std::size_t p = static_cast<std::size_t>(pair_rng.integer(b - 1));
      if (p >= i) ++p;
      partners[i] = p;
    }
    Rng interp_rng = derive_rng(config.seed, Stream::interpolation, {global_epoch, step});
    std::vector<Tensor> mixed(b);
    std::vector<double> ratios(b), inverse_ratios(b);
    for (std::size_t i = 0; i < b; ++i) {
      Interpolated ip = interpolate(view1[i], view1[partners[i]], config.interpolation,
                                    interp_rng);
      mixed[i] = std::move(ip.sample);
      ratios[i] = ip.r_effective;
      inverse_ratios[i] = 1.0 - ip.r_effective;
    }
    const Tensor v_interp =
        encoder_forward(tape, config.encoder, state.params, assemble_batch(mixed));
    Tensor target = l2_normalize(
        tape, add(tape, scale_rows(tape, v, ratios),
                  scale_rows(tape, gather_rows(tape, v, partners), inverse_ratios)));
    if (config.inter_stop_gradient) target = target.detach();
    l_inter = inter_loss(tape, v_interp, target, config.tau, config.inter_literal);
    total = add(tape, total, scale(tape, l_inter, config.lambda2));
  }

  for (Tensor& t : state.params.weights) t.zero_grad();
  for (Tensor& t : state.params.biases) t.zero_grad();
  tape.backward(total);

  std::vector<Tensor> flat = state.params.all();
  sgd_update(flat, state.velocity, lr, config.sgd_momentum, config.weight_decay,
             param_names(state.params));

  // Bank rows absorb the view-1 features (gradient-free copies).
  const std::size_t d = config.embed_dim;
  for (std::size_t i = 0; i < b; ++i) state.bank.update(batch_indices[i], v.data() + i * d);

  return combine_losses(l_iraug.item(), l_intra.defined() ? l_intra.item() : 0.0,
                        l_inter.defined() ? l_inter.item() : 0.0, config.lambda1, config.lambda2);
}

std::string format_double(double value) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

std::string metrics_csv_header(bool with_knn) {
  return with_knn ? "epoch,l_iraug,l_intra,l_inter,total,lr,knn_acc"
                  : "epoch,l_iraug,l_intra,l_inter,total,lr";
}

std::string metrics_csv_row(const EpochMetrics& m, bool with_knn) {
  std::string row = std::to_string(m.epoch) + "," + format_double(m.l_iraug) + "," +
                    format_double(m.l_intra) + "," + format_double(m.l_inter) + "," +
                    format_double(m.total) + "," + format_double(m.lr);
  if (with_knn) {
    row += ",";
    if (m.knn_acc) row += format_double(*m.knn_acc);
  }
  return row;
}

std::vector<EpochMetrics> train_loop(TrainState& state, const UnlabeledView& data,
                                     const TrainConfig& config, const TrainHooks& hooks) {
  validate_train_config(config);
  const std::size_t n = data.size();
  if (n == 0) throw_config("train: dataset is empty");
  if (state.bank.size() != n)
    throw_config("train: bank size " + std::to_string(state.bank.size()) +
                 " does not match dataset size " + std::to_string(n));

  std::vector<EpochMetrics> all_metrics;
  const std::size_t total_epochs = config.total_epochs();
  for (std::size_t epoch = state.epochs_done + 1; epoch <= total_epochs; ++epoch) {
    // Seeded shuffle; the stream depends only on (seed, epoch).
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = derive_rng(config.seed, Stream::shuffle, {epoch});
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.integer(i + 1));
      std::swap(order[i], order[j]);
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.lr = lr_at_epoch(config, ((epoch - 1) % config.epochs) + 1);
    std::size_t samples_seen = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, n);
      if (end - start < 2) break;  // a trailing single sample cannot form pairs
      std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
      const LossReport report = train_step(state, data, batch, config, epoch, step);
      if (hooks.on_step) hooks.on_step(report);
      const double w = static_cast<double>(end - start);
      metrics.l_iraug += report.l_iraug * w;
      metrics.l_intra += report.l_intra * w;
      metrics.l_inter += report.l_inter * w;
      metrics.total += report.total * w;
      samples_seen += end - start;
      ++step;
    }
    if (samples_seen == 0) throw_config("train: no batch of size >= 2 could be formed");
    metrics.l_iraug /= static_cast<double>(samples_seen);
    metrics.l_intra /= static_cast<double>(samples_seen);
    metrics.l_inter /= static_cast<double>(samples_seen);
    metrics.total /= static_cast<double>(samples_seen);

    state.epochs_done = epoch;
    state.quantize_f32();

    if (hooks.evaluate && config.eval_every > 0 &&
        (epoch % config.eval_every == 0 || epoch == total_epochs))
      metrics.knn_acc = hooks.evaluate(state);
    if (hooks.on_epoch) hooks.on_epoch(metrics);
    if (hooks.save_checkpoint && config.checkpoint_every > 0 &&
        epoch % config.checkpoint_every == 0 && epoch != total_epochs)
      hooks.save_checkpoint(state);
    all_metrics.push_back(std::move(metrics));
  }
  if (hooks.save_checkpoint) hooks.save_checkpoint(state);
  return all_metrics;
}

std::vector<EpochMetrics> train(const UnlabeledView& data, const TrainConfig& config,
                                TrainState& state_out, const TrainHooks& hooks) {
  state_out = init_train_state(config, data.size());
  return train_loop(state_out, data, config, hooks);
}

}  // namespace eir
