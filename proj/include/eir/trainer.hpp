#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eir/augment.hpp"
#include "eir/data.hpp"
#include "eir/encoder.hpp"
#include "eir/losses.hpp"
#include "eir/memory_bank.hpp"

namespace eir {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double lr = 0.03;
  std::vector<std::size_t> lr_milestones{120, 160};  // decay applies after these epochs
  double lr_decay = 0.1;
  double sgd_momentum = 0.9;
  double weight_decay = 0.0005;
  double tau = 0.1;
  std::optional<double> intra_tau;  // defaults to tau
  double bank_momentum = 0.5;
  double lambda1 = 15.0;
  double lambda2 = 2.0;
  std::size_t embed_dim = 128;
  std::uint64_t seed = 1;
  std::size_t rounds = 1;  // full schedule repetitions
  bool avg_views = false;
  bool inter_literal = false;
  bool inter_stop_gradient = false;
  std::size_t checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  std::size_t eval_every = 0;        // epochs between periodic kNN evals; 0 = off
  std::size_t eval_k = 200;
  EncoderSpec encoder{Architecture::mlp, {128, 128}, 128, {64}};
  InterpolationSpec interpolation;
  AugmentPolicy augment;

  double effective_intra_tau() const { return intra_tau.value_or(tau); }
  std::size_t total_epochs() const { return epochs * rounds; }
  LossConfig loss_config() const;
};

void validate_train_config(const TrainConfig& config);

/// Piecewise-constant schedule: base lr multiplied by decay after each
/// milestone epoch (1-indexed, within a round).
double lr_at_epoch(const TrainConfig& config, std::size_t epoch_in_round);

struct TrainState {
  EncoderParams params;
  EmbeddingBank bank;
  std::vector<Tensor> velocity;  // aligned with params.all()
  std::size_t epochs_done = 0;   // global across rounds

  /// Rounds every float in params/velocity/bank to f32. Applied at epoch
  /// boundaries so checkpointed state is exactly representable and resumed
  /// runs replay bit-identically.
  void quantize_f32();
};

TrainState init_train_state(const TrainConfig& config, std::size_t dataset_size);

/// velocity = momentum * velocity + grad + weight_decay * param;
/// param -= lr * velocity.
void sgd_update(std::vector<Tensor>& params, std::vector<Tensor>& velocity, double lr,
                double momentum, double weight_decay,
                const std::vector<std::string>& param_names = {});

/// One optimization step over a batch of (sample, instance-index) pairs.
/// Indices must be unique within the batch.
LossReport train_step(TrainState& state, const UnlabeledView& data,
                      const std::vector<std::size_t>& batch_indices, const TrainConfig& config,
                      std::size_t global_epoch, std::size_t step);

struct EpochMetrics {
  std::size_t epoch = 0;
  double l_iraug = 0.0;
  double l_intra = 0.0;
  double l_inter = 0.0;
  double total = 0.0;
  double lr = 0.0;
  std::optional<double> knn_acc;
};

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

/// CSV row "epoch,l_iraug,l_intra,l_inter,total,lr[,knn_acc]".
std::string metrics_csv_header(bool with_knn);
std::string metrics_csv_row(const EpochMetrics& m, bool with_knn);

struct TrainHooks {
  /// Called after every optimization step with that step's losses.
  std::function<void(const LossReport&)> on_step;
  /// Called once per epoch with that epoch's aggregate metrics.
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Periodic evaluation; receives the live state, returns kNN accuracy.
  std::function<double(const TrainState&)> evaluate;
  /// Checkpoint writer, driven by checkpoint_every and at the end.
  std::function<void(const TrainState&)> save_checkpoint;
};

/// Epoch loop from state.epochs_done + 1 through config.total_epochs().
std::vector<EpochMetrics> train_loop(TrainState& state, const UnlabeledView& data,
                                     const TrainConfig& config, const TrainHooks& hooks = {});

/// Fresh state + full loop.
std::vector<EpochMetrics> train(const UnlabeledView& data, const TrainConfig& config,
                                TrainState& state_out, const TrainHooks& hooks = {});

}  // namespace eir
