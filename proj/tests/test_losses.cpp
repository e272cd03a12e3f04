#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eir/augment.hpp"
#include "eir/encoder.hpp"
#include "eir/error.hpp"
#include "eir/losses.hpp"
#include "eir/memory_bank.hpp"
#include "eir/rng.hpp"
#include "support/oracles.hpp"

using namespace eir;

namespace {

// bank with unit-norm random rows
EmbeddingBank random_bank(std::size_t n, std::size_t d, std::uint64_t seed) {
  return EmbeddingBank(n, d, 0.5, seed);
}

Tensor random_unit_rows(std::size_t b, std::size_t d, std::uint64_t seed,
                        bool requires_grad = false) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({b, d}, requires_grad);
  for (std::size_t r = 0; r < b; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      t[r * d + j] = rng.normal();
      ss += t[r * d + j] * t[r * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) t[r * d + j] /= std::sqrt(ss);
  }
  return t;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  const std::size_t d = t.shape()[1];
  Tensor out = Tensor::zeros(t.shape());
  for (std::size_t r = 0; r < perm.size(); ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = t[perm[r] * d + j];
  return out;
}

}  // namespace

TEST_CASE("instance_probability: symmetric bank gives 1/N") {
  Tensor rows = Tensor::zeros({5, 3});
  for (std::size_t i = 0; i < 5; ++i) rows[i * 3] = 1.0;  // five identical rows
  EmbeddingBank bank(rows, 0.5);
  Tensor v({3}, {0.0, 1.0, 0.0});
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(instance_probability(v, bank, i, 1.0) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("instance_probability: orthogonal two-row hand case") {
  EmbeddingBank bank(Tensor({2, 2}, {1, 0, 0, 1}), 0.5);
  Tensor v({2}, {1.0, 0.0});
  const double e = std::exp(1.0);
  CHECK(instance_probability(v, bank, 0, 1.0) == doctest::Approx(e / (e + 1)).epsilon(1e-12));
}

TEST_CASE("instance_probability matches the naive loop oracle") {
  EmbeddingBank bank = random_bank(16, 8, 31);
  const Tensor v = random_unit_rows(1, 8, 32);
  for (std::size_t i = 0; i < 16; ++i) {
    const double expect =
        oracle::instance_probability(v.data(), bank.rows().data(), 16, 8, i, 0.1);
    CHECK(std::abs(instance_probability(v, bank, i, 0.1) - expect) <= 1e-9);
  }
}

TEST_CASE("iraug_loss: two-view aligned hand case (value frozen from the oracle)") {
  // v = vhat = bank row 0; second row orthogonal; N=2, tau=1.
  EmbeddingBank bank(Tensor({2, 2}, {1, 0, 0, 1}), 0.5);
  Tensor v({1, 2}, {1.0, 0.0});
  Tape tape;
  const double loss = iraug_loss(tape, v, v, {0}, bank, 1.0).item();
  const std::size_t idx[] = {0};
  const double expect = oracle::iraug(v.data(), v.data(), idx, 1, bank.rows().data(), 2, 2, 1.0);
  CHECK(std::abs(loss - expect) <= 1e-12);
  // closed form: -log(2e/(e+1)); the sum of two softmax terms exceeds 1, so
  // the loss is legitimately negative here.
  const double e = std::exp(1.0);
  CHECK(expect == doctest::Approx(-std::log(2 * e / (e + 1))).epsilon(1e-12));
  CHECK(loss == doctest::Approx(-0.3798854930417224).epsilon(1e-10));
  CHECK(loss < 0.0);
}

TEST_CASE("iraug_loss matches the per-sample oracle on random batches") {
  EmbeddingBank bank = random_bank(32, 6, 41);
  const Tensor v = random_unit_rows(4, 6, 42);
  const Tensor vhat = random_unit_rows(4, 6, 43);
  const std::vector<std::size_t> indices{3, 17, 5, 29};
  Tape tape;
  const double loss = iraug_loss(tape, v, vhat, indices, bank, 0.1).item();
  const double expect =
      oracle::iraug(v.data(), vhat.data(), indices.data(), 4, bank.rows().data(), 32, 6, 0.1);
  CHECK(std::abs(loss - expect) <= 1e-9);

  // avg_views halves the probability sum
  Tape tape2;
  const double avg = iraug_loss(tape2, v, vhat, indices, bank, 0.1, true).item();
  const double expect_avg = oracle::iraug(v.data(), vhat.data(), indices.data(), 4,
                                          bank.rows().data(), 32, 6, 0.1, true);
  CHECK(std::abs(avg - expect_avg) <= 1e-9);
}

TEST_CASE("iraug_loss is invariant under batch permutation") {
  EmbeddingBank bank = random_bank(16, 5, 51);
  const Tensor v = random_unit_rows(4, 5, 52);
  const Tensor vhat = random_unit_rows(4, 5, 53);
  const std::vector<std::size_t> indices{1, 8, 3, 12};
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<std::size_t> perm_indices(4);
  for (std::size_t i = 0; i < 4; ++i) perm_indices[i] = indices[perm[i]];
  Tape tape;
  const double a = iraug_loss(tape, v, vhat, indices, bank, 0.1).item();
  const double b = iraug_loss(tape, permute_rows(v, perm), permute_rows(vhat, perm),
                              perm_indices, bank, 0.1)
                       .item();
  CHECK(std::abs(a - b) <= 1e-12);
}

TEST_CASE("intra_distributions: identical views give identical distributions") {
  EmbeddingBank bank = random_bank(8, 4, 61);
  const Tensor v = random_unit_rows(1, 4, 62);
  Tape tape;
  auto [p, q] = intra_distributions(tape, v, v, bank, 0.1);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == q[i]);
}

TEST_CASE("intra_distributions: orthogonal bank gives the uniform distribution") {
  // bank rows orthogonal to both views -> all similarities zero
  EmbeddingBank bank(Tensor({3, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0}), 0.5);
  Tensor v({1, 4}, {0, 0, 0, 1});
  Tape tape;
  auto [p, q] = intra_distributions(tape, v, v, bank, 0.1);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(q[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
}

TEST_CASE("intra_distributions sum to one") {
  EmbeddingBank bank = random_bank(10, 6, 63);
  const Tensor v = random_unit_rows(3, 6, 64);
  const Tensor vhat = random_unit_rows(3, 6, 65);
  Tape tape;
  auto [p, q] = intra_distributions(tape, v, vhat, bank, 0.1);
  for (std::size_t r = 0; r < 3; ++r) {
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      sp += p[r * 10 + i];
      sq += q[r * 10 + i];
    }
    CHECK(std::abs(sp - 1.0) <= 1e-9);
    CHECK(std::abs(sq - 1.0) <= 1e-9);
  }
}

TEST_CASE("intra_loss: zero iff views identical, else positive") {
  EmbeddingBank bank = random_bank(8, 4, 71);
  const Tensor v = random_unit_rows(2, 4, 72);
  Tape tape;
  CHECK(intra_loss(tape, v, v, bank, 0.1).item() == 0.0);

  const Tensor vhat = random_unit_rows(2, 4, 73);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = random_unit_rows(2, 4, 100 + trial);
    const Tensor b = random_unit_rows(2, 4, 200 + trial);
    Tape t2;
    CHECK(intra_loss(t2, a, b, bank, 0.1).item() >= 0.0);
  }
}

TEST_CASE("intra_loss matches the element-wise KL oracle") {
  EmbeddingBank bank = random_bank(8, 5, 81);
  const Tensor v = random_unit_rows(2, 5, 82);
  const Tensor vhat = random_unit_rows(2, 5, 83);
  Tape tape;
  const double loss = intra_loss(tape, v, vhat, bank, 0.1).item();
  const double expect = oracle::intra_kl(v.data(), vhat.data(), 2, bank.rows().data(), 8, 5, 0.1);
  CHECK(std::abs(loss - expect) <= 1e-9);
}

TEST_CASE("intra_loss gradients reach both views") {
  EmbeddingBank bank = random_bank(8, 5, 84);
  Tensor v = random_unit_rows(2, 5, 85, true);
  Tensor vhat = random_unit_rows(2, 5, 86, true);
  Tape tape;
  tape.backward(intra_loss(tape, v, vhat, bank, 0.1));
  double gv = 0.0, gvhat = 0.0;
  for (double g : v.grad()) gv += std::abs(g);
  for (double g : vhat.grad()) gvhat += std::abs(g);
  CHECK(gv > 0.0);
  CHECK(gvhat > 0.0);
  CHECK_FALSE(bank.rows().has_grad());
}

TEST_CASE("inter_loss: orthogonal two-row hand case") {
  // interpolated features orthogonal; targets equal to them; tau = 1
  Tensor feats({2, 2}, {1, 0, 0, 1});
  Tape tape;
  const double loss = inter_loss(tape, feats, feats, 1.0).item();
  const double e = std::exp(1.0);
  CHECK(loss == doctest::Approx(-std::log(e / (e + 1))).epsilon(1e-12));
  CHECK(loss == doctest::Approx(0.31326168751822286).epsilon(1e-10));
}

TEST_CASE("inter_loss vanishes for aligned orthogonal features at small tau") {
  Tensor feats({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tape tape;
  CHECK(inter_loss(tape, feats, feats, 0.01).item() <= 1e-6);
}

TEST_CASE("inter_loss matches the per-row oracle, both readings") {
  const Tensor interp = random_unit_rows(4, 6, 91);
  const Tensor target = random_unit_rows(4, 6, 92);
  Tape tape;
  const double conv = inter_loss(tape, interp, target, 0.1, false).item();
  CHECK(std::abs(conv - oracle::inter(interp.data(), target.data(), 4, 6, 0.1, false)) <= 1e-9);
  Tape tape2;
  const double literal = inter_loss(tape2, interp, target, 0.1, true).item();
  CHECK(std::abs(literal - oracle::inter(interp.data(), target.data(), 4, 6, 0.1, true)) <= 1e-9);
}

TEST_CASE("inter_loss needs at least two samples") {
  Tensor one = random_unit_rows(1, 4, 93);
  Tape tape;
  CHECK_THROWS_AS(inter_loss(tape, one, one, 0.1), Error);
}

TEST_CASE("inter_loss is invariant under batch permutation") {
  const Tensor interp = random_unit_rows(5, 4, 94);
  const Tensor target = random_unit_rows(5, 4, 95);
  const std::vector<std::size_t> perm{4, 2, 0, 1, 3};
  Tape tape;
  const double a = inter_loss(tape, interp, target, 0.1).item();
  const double b =
      inter_loss(tape, permute_rows(interp, perm), permute_rows(target, perm), 0.1).item();
  CHECK(std::abs(a - b) <= 1e-12);
}

TEST_CASE("inter_loss boundary consistency at mixup r=1") {
  // With r = 1 the interpolated sample is x_i itself and the target reduces
  // to f(x_i); the full pipeline must agree with that direct form.
  EncoderSpec spec;
  spec.architecture = Architecture::mlp;
  spec.input_shape = {6};
  spec.layer_widths = {8, 4};
  spec.embed_dim = 4;
  const EncoderParams params = init_encoder(spec, 321);
  Rng rng(322);
  const std::size_t b = 4;
  Tensor x = Tensor::zeros({b, 6});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  std::vector<std::size_t> partners{1, 2, 3, 0};

  Tape tape;
  const Tensor v = encoder_forward(tape, spec, params, x);

  // pipeline form: per-row mixup with r=1, ratio-weighted targets
  Tensor x_mix = Tensor::zeros({b, 6});
  for (std::size_t i = 0; i < b; ++i) {
    Tensor xi = Tensor::zeros({6}), xj = Tensor::zeros({6});
    for (std::size_t j = 0; j < 6; ++j) {
      xi[j] = x[i * 6 + j];
      xj[j] = x[partners[i] * 6 + j];
    }
    const Tensor mixed = mixup(xi, xj, 1.0);
    for (std::size_t j = 0; j < 6; ++j) x_mix[i * 6 + j] = mixed[j];
  }
  const Tensor v_mix = encoder_forward(tape, spec, params, x_mix);
  const std::vector<double> ones(b, 1.0), zeros(b, 0.0);
  const Tensor target = l2_normalize(
      tape, add(tape, scale_rows(tape, v, ones),
                scale_rows(tape, gather_rows(tape, v, partners), zeros)));
  const double pipeline = inter_loss(tape, v_mix, target, 0.1).item();

  // direct form: interpolated sample is x_i, target is f(x_i)
  const double direct = inter_loss(tape, v, v, 0.1).item();
  CHECK(std::abs(pipeline - direct) <= 1e-12);
}

TEST_CASE("combine_losses arithmetic and gating") {
  const LossReport r = combine_losses(1.0, 2.0, 3.0, 15.0, 2.0);
  CHECK(r.total == 37.0);

  const LossReport gated = combine_losses(0.713, 9.0, 9.0, 0.0, 0.0);
  CHECK(gated.total == gated.l_iraug);

  CHECK_THROWS_AS(combine_losses(std::nan(""), 0, 0, 1, 1), Error);
  CHECK_THROWS_AS(combine_losses(0, 0, 0, -1, 1), Error);

  // defaults carry the full-scale operating point
  const LossConfig defaults;
  CHECK(defaults.lambda1 == 15.0);
  CHECK(defaults.lambda2 == 2.0);
  CHECK(defaults.tau == 0.1);
}

TEST_CASE("losses report consistency: total == l_iraug + l1*l_intra + l2*l_inter") {
  Rng rng(97);
  for (int trial = 0; trial < 10; ++trial) {
    const double li = rng.uniform(-1, 5), lt = rng.uniform(0, 2), le = rng.uniform(0, 4);
    const double l1 = rng.uniform(0, 20), l2 = rng.uniform(0, 5);
    const LossReport r = combine_losses(li, lt, le, l1, l2);
    CHECK(std::abs(r.total - (r.l_iraug + l1 * r.l_intra + l2 * r.l_inter)) <= 1e-9);
  }
}

TEST_CASE("loss gradients through the encoder match finite differences (small)") {
  EncoderSpec spec;
  spec.architecture = Architecture::mlp;
  spec.input_shape = {5};
  spec.layer_widths = {6, 4};
  spec.embed_dim = 4;
  EncoderParams params = init_encoder(spec, 7);
  EmbeddingBank bank = random_bank(8, 4, 98);
  Rng rng(99);
  Tensor batch1 = Tensor::zeros({3, 5});
  Tensor batch2 = Tensor::zeros({3, 5});
  for (std::size_t i = 0; i < batch1.size(); ++i) {
    batch1[i] = rng.uniform(-1, 1);
    batch2[i] = rng.uniform(-1, 1);
  }
  const std::vector<std::size_t> indices{1, 4, 6};

  auto losses_value = [&](int which) {
    Tape tape;
    const Tensor v = encoder_forward(tape, spec, params, batch1);
    const Tensor vhat = encoder_forward(tape, spec, params, batch2);
    if (which == 0) return iraug_loss(tape, v, vhat, indices, bank, 0.1).item();
    if (which == 1) return intra_loss(tape, v, vhat, bank, 0.1).item();
    return inter_loss(tape, v, vhat, 0.1).item();
  };
  for (int which = 0; which < 3; ++which) {
    CAPTURE(which);
    Tape tape;
    const Tensor v = encoder_forward(tape, spec, params, batch1);
    const Tensor vhat = encoder_forward(tape, spec, params, batch2);
    Tensor loss;
    if (which == 0) loss = iraug_loss(tape, v, vhat, indices, bank, 0.1);
    if (which == 1) loss = intra_loss(tape, v, vhat, bank, 0.1);
    if (which == 2) loss = inter_loss(tape, v, vhat, 0.1);
    for (Tensor& t : params.weights) t.zero_grad();
    for (Tensor& t : params.biases) t.zero_grad();
    tape.backward(loss);
    CHECK(oracle::max_grad_rel_err([&]() { return losses_value(which); }, params.all()) < 1e-4);
  }
}
