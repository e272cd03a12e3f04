#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "eir/config.hpp"
#include "eir/error.hpp"
#include "eir/serialize.hpp"
#include "eir/trainer.hpp"

using namespace eir;

namespace {

// Small vector-data recipe used across the trainer tests.
RunConfig toy_run(std::size_t epochs = 2, std::uint64_t seed = 5) {
  RunConfig run;
  run.train.epochs = epochs;
  run.train.batch_size = 16;
  run.train.lr = 0.03;
  run.train.embed_dim = 8;
  run.train.seed = seed;
  run.train.lambda1 = 1.0;
  run.train.lambda2 = 1.0;
  run.train.eval_k = 5;
  run.train.encoder.architecture = Architecture::mlp;
  run.train.encoder.input_shape = {12};
  run.train.encoder.layer_widths = {16, 8};
  run.train.encoder.embed_dim = 8;
  run.train.augment.flip = false;
  run.train.augment.grayscale = false;
  run.train.augment.crop_scale = 0.7;
  run.train.augment.jitter_strength = 0.1;
  run.dataset.type = DatasetConfig::Type::synthetic;
  run.dataset.synthetic.num_classes = 4;
  run.dataset.synthetic.per_class = 16;
  run.dataset.synthetic.test_per_class = 4;
  run.dataset.synthetic.dim = 12;
  run.dataset.synthetic.separation = 4.0;
  run.dataset.synthetic.noise_std = 0.5;
  run.dataset.synthetic.seed = seed;
  return run;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("lr schedule lands on the exact decimal rates") {
  TrainConfig config;  // defaults: lr 0.03, milestones {120, 160}, decay 0.1
  CHECK(lr_at_epoch(config, 119) == 0.03);
  CHECK(lr_at_epoch(config, 120) == 0.03);
  CHECK(lr_at_epoch(config, 121) == 0.003);
  CHECK(lr_at_epoch(config, 125) == 0.003);
  CHECK(lr_at_epoch(config, 159) == 0.003);
  CHECK(lr_at_epoch(config, 161) == 0.0003);
  CHECK(lr_at_epoch(config, 165) == 0.0003);
  CHECK(lr_at_epoch(config, 200) == 0.0003);
}

TEST_CASE("sgd_update: momentum and weight decay semantics") {
  // momentum 0, wd 0: plain gradient step
  std::vector<Tensor> params{Tensor({1}, {2.0}, true)};
  std::vector<Tensor> velocity{Tensor::zeros({1})};
  params[0].grad()[0] = 0.5;
  sgd_update(params, velocity, 0.1, 0.0, 0.0);
  CHECK(params[0][0] == doctest::Approx(2.0 - 0.1 * 0.5).epsilon(1e-15));

  // zero grads with nonzero velocity still move the parameter
  std::vector<Tensor> p2{Tensor({1}, {1.0}, true)};
  std::vector<Tensor> v2{Tensor({1}, {2.0})};
  p2[0].grad()[0] = 0.0;
  sgd_update(p2, v2, 0.1, 0.9, 0.0);
  CHECK(p2[0][0] == doctest::Approx(1.0 - 0.1 * 0.9 * 2.0).epsilon(1e-15));

  // two hand-computed steps on a scalar parameter
  double p = 1.0, v = 0.0;
  const double lr = 0.05, mom = 0.9, wd = 0.01;
  const double grads[2] = {0.3, -0.2};
  std::vector<Tensor> pt{Tensor({1}, {p}, true)};
  std::vector<Tensor> vt{Tensor::zeros({1})};
  for (int step = 0; step < 2; ++step) {
    v = mom * v + grads[step] + wd * p;
    p -= lr * v;
    pt[0].zero_grad();
    pt[0].grad()[0] = grads[step];
    sgd_update(pt, vt, lr, mom, wd);
    CHECK(std::abs(pt[0][0] - p) <= 1e-12);
  }
}

TEST_CASE("sgd_update names the parameter on non-finite gradients") {
  std::vector<Tensor> params{Tensor({1}, {1.0}, true)};
  std::vector<Tensor> velocity{Tensor::zeros({1})};
  params[0].grad()[0] = std::nan("");
  try {
    sgd_update(params, velocity, 0.1, 0.9, 0.0, {"weights[0]"});
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("weights[0]") != std::string::npos);
  }
}

TEST_CASE("train_step rejects duplicate instance indices") {
  RunConfig run = toy_run();
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);
  TrainState state = init_train_state(run.train, view.size());
  CHECK_THROWS_AS(train_step(state, view, {0, 1, 1, 2}, run.train, 1, 0), Error);
}

TEST_CASE("loss decreases over 50 steps on separable data") {
  RunConfig run = toy_run();
  run.train.lambda1 = 0.5;
  run.train.lambda2 = 0.5;
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);
  TrainState state = init_train_state(run.train, view.size());
  std::vector<std::size_t> batch;
  for (std::size_t i = 0; i < 16; ++i) batch.push_back(i);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 50; ++step) {
    const LossReport r = train_step(state, view, batch, run.train, 1, step);
    if (step == 0) first = r.total;
    last = r.total;
  }
  CHECK(last < first);
}

TEST_CASE("lambda gating: zero weights never touch the other losses") {
  RunConfig run = toy_run();
  run.train.lambda1 = 0.0;
  run.train.lambda2 = 0.0;
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);
  TrainState state{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
  const auto metrics = train(view, run.train, state);
  for (const EpochMetrics& m : metrics) {
    CHECK(m.l_intra == 0.0);
    CHECK(m.l_inter == 0.0);
    CHECK(m.total == m.l_iraug);
  }
}

TEST_CASE("training is deterministic: same seed, bit-identical checkpoints") {
  const RunConfig run = toy_run();
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);
  const std::string echo = canonical_config_json(run);

  const auto path_a = temp_path("eir_det_a.eirc");
  const auto path_b = temp_path("eir_det_b.eirc");
  for (const auto& path : {path_a, path_b}) {
    TrainState state{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
    train(view, run.train, state);
    save_checkpoint(path, echo, run.train, state);
  }
  std::ifstream a(path_a, std::ios::binary), b(path_b, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(a)),
                            std::istreambuf_iterator<char>());
  const std::string bytes_b((std::istreambuf_iterator<char>(b)),
                            std::istreambuf_iterator<char>());
  CHECK(bytes_a == bytes_b);
  std::filesystem::remove(path_a);
  std::filesystem::remove(path_b);
}

TEST_CASE("checkpoint round trip preserves the training state") {
  const RunConfig run = toy_run();
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);
  TrainState state{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
  train(view, run.train, state);

  const auto path = temp_path("eir_roundtrip.eirc");
  save_checkpoint(path, canonical_config_json(run), run.train, state);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.state.epochs_done == state.epochs_done);
  CHECK(loaded.seed == run.train.seed);
  const auto flat = state.params.all();
  const auto flat_loaded = loaded.state.params.all();
  REQUIRE(flat.size() == flat_loaded.size());
  for (std::size_t t = 0; t < flat.size(); ++t) {
    REQUIRE(flat[t].shape() == flat_loaded[t].shape());
    for (std::size_t i = 0; i < flat[t].size(); ++i) CHECK(flat[t][i] == flat_loaded[t][i]);
  }
  for (std::size_t i = 0; i < state.bank.rows().size(); ++i)
    CHECK(state.bank.rows()[i] == loaded.state.bank.rows()[i]);
  CHECK(loaded.state.bank.momentum() == run.train.bank_momentum);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects foreign magic and versions") {
  const auto path = temp_path("eir_badversion.eirc");
  {
    std::ofstream out(path, std::ios::binary);
    out.write("EIRC", 4);
    out.put(static_cast<char>(99));  // version 99 little-endian
    out.put(0);
  }
  try {
    load_checkpoint(path);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  {
    std::ofstream out(path, std::ios::binary);
    out.write("XXXX??", 6);
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("resume from a mid-run checkpoint replays the uninterrupted run") {
  RunConfig run = toy_run(4);
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);

  // uninterrupted 4-epoch run
  TrainState full{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
  const auto full_metrics = train(view, run.train, full);

  // stop after 2 epochs, checkpoint, reload, continue
  RunConfig half = run;
  half.train.epochs = 2;
  TrainState part{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
  train(view, half.train, part);
  const auto path = temp_path("eir_resume.eirc");
  save_checkpoint(path, canonical_config_json(run), run.train, part);

  Checkpoint resumed = load_checkpoint(path);
  const auto tail_metrics = train_loop(resumed.state, view, run.train);
  REQUIRE(tail_metrics.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const EpochMetrics& a = full_metrics[2 + i];
    const EpochMetrics& b = tail_metrics[i];
    CHECK(a.epoch == b.epoch);
    CHECK(a.l_iraug == b.l_iraug);
    CHECK(a.l_intra == b.l_intra);
    CHECK(a.l_inter == b.l_inter);
    CHECK(a.total == b.total);
  }

  const auto flat_full = full.params.all();
  const auto flat_resumed = resumed.state.params.all();
  for (std::size_t t = 0; t < flat_full.size(); ++t)
    for (std::size_t i = 0; i < flat_full[t].size(); ++i)
      CHECK(flat_full[t][i] == flat_resumed[t][i]);
  std::filesystem::remove(path);
}

TEST_CASE("bank rows stay unit-norm across training") {
  RunConfig run = toy_run(3);
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);
  TrainState state{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
  train(view, run.train, state);
  const std::size_t d = state.bank.dim();
  for (std::size_t i = 0; i < state.bank.size(); ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      ss += state.bank.rows()[i * d + j] * state.bank.rows()[i * d + j];
    CHECK(std::abs(std::sqrt(ss) - 1.0) <= 1e-6);
  }
}

TEST_CASE("rounds repeat the lr schedule") {
  RunConfig run = toy_run(2);
  run.train.rounds = 2;
  run.train.lr_milestones = {1};
  run.train.lr_decay = 0.1;
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);
  TrainState state{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
  const auto metrics = train(view, run.train, state);
  REQUIRE(metrics.size() == 4);
  CHECK(metrics[0].lr == 0.03);
  CHECK(metrics[1].lr == 0.003);
  CHECK(metrics[2].lr == 0.03);  // second round restarts the schedule
  CHECK(metrics[3].lr == 0.003);
}

TEST_CASE("inter stop-gradient and literal flags are plumbed through") {
  RunConfig run = toy_run(1);
  run.train.lambda1 = 0.0;
  run.train.lambda2 = 1.0;
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);

  auto first_inter = [&](bool stop_grad, bool literal) {
    RunConfig r = run;
    r.train.inter_stop_gradient = stop_grad;
    r.train.inter_literal = literal;
    TrainState state = init_train_state(r.train, view.size());
    std::vector<std::size_t> batch{0, 1, 2, 3, 4, 5, 6, 7};
    // two steps: the second sees parameters moved by differing gradients
    train_step(state, view, batch, r.train, 1, 0);
    return train_step(state, view, batch, r.train, 1, 1).l_inter;
  };
  const double flowing = first_inter(false, false);
  const double stopped = first_inter(true, false);
  const double literal = first_inter(false, true);
  CHECK(flowing != stopped);
  CHECK(flowing != literal);
}

TEST_CASE("metrics csv rows are stable") {
  EpochMetrics m;
  m.epoch = 3;
  m.l_iraug = 1.5;
  m.l_intra = 0.25;
  m.l_inter = 2.0;
  m.total = 4.0;
  m.lr = 0.03;
  CHECK(metrics_csv_header(false) == "epoch,l_iraug,l_intra,l_inter,total,lr");
  CHECK(metrics_csv_row(m, false) == "3,1.5,0.25,2,4,0.03");
  m.knn_acc = 0.5;
  CHECK(metrics_csv_header(true) == "epoch,l_iraug,l_intra,l_inter,total,lr,knn_acc");
  CHECK(metrics_csv_row(m, true) == "3,1.5,0.25,2,4,0.03,0.5");
}

TEST_CASE("config validation rejects bad recipes") {
  RunConfig run = toy_run();
  run.train.batch_size = 1;
  CHECK_THROWS_AS(validate_train_config(run.train), Error);
  run = toy_run();
  run.train.lr = 0.0;
  CHECK_THROWS_AS(validate_train_config(run.train), Error);
  run = toy_run();
  run.train.embed_dim = 9;  // encoder still ends at 8
  CHECK_THROWS_AS(validate_train_config(run.train), Error);
}
