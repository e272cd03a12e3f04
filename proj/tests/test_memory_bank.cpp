#include <doctest.h>

#include <cmath>

#include "eir/error.hpp"
#include "eir/memory_bank.hpp"
#include "eir/rng.hpp"
#include "eir/tensor.hpp"

using namespace eir;

namespace {

double row_norm(const Tensor& rows, std::size_t i, std::size_t d) {
  double ss = 0.0;
  for (std::size_t j = 0; j < d; ++j) ss += rows[i * d + j] * rows[i * d + j];
  return std::sqrt(ss);
}

Tensor unit_vec(std::size_t d, std::size_t axis) {
  Tensor v = Tensor::zeros({d});
  v[axis] = 1.0;
  return v;
}

}  // namespace

TEST_CASE("init: unit rows, deterministic, isotropic") {
  EmbeddingBank bank(1000, 128, 0.5, 21);
  for (std::size_t i = 0; i < bank.size(); ++i)
    CHECK(std::abs(row_norm(bank.rows(), i, 128) - 1.0) <= 1e-9);

  EmbeddingBank again(1000, 128, 0.5, 21);
  for (std::size_t i = 0; i < 128; ++i) CHECK(bank.rows()[i] == again.rows()[i]);

  // Monte-Carlo isotropy: mean pairwise cosine stays near zero.
  double mean_cos = 0.0;
  std::size_t pairs = 0;
  const Tensor& rows = bank.rows();
  for (std::size_t a = 0; a < 1000; ++a)
    for (std::size_t b = a + 1; b < 1000; ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 128; ++j) dot += rows[a * 128 + j] * rows[b * 128 + j];
      mean_cos += dot;
      ++pairs;
    }
  CHECK(std::abs(mean_cos / static_cast<double>(pairs)) < 0.05);
}

TEST_CASE("init rejects non-positive sizes") {
  CHECK_THROWS_AS(EmbeddingBank(0, 8, 0.5, 1), Error);
  CHECK_THROWS_AS(EmbeddingBank(8, 0, 0.5, 1), Error);
}

TEST_CASE("lookup copies rows as gradient-free constants") {
  EmbeddingBank bank(10, 4, 0.5, 3);
  const Tensor rows = bank.lookup({2, 7});
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(rows[j] == bank.rows()[2 * 4 + j]);
    CHECK(rows[4 + j] == bank.rows()[7 * 4 + j]);
  }
  CHECK_FALSE(rows.requires_grad());

  const Tensor twice = bank.lookup({5, 5});
  for (std::size_t j = 0; j < 4; ++j) CHECK(twice[j] == twice[4 + j]);

  CHECK_THROWS_AS(bank.lookup({10}), Error);
}

TEST_CASE("gradients never flow into the bank") {
  EmbeddingBank bank(6, 3, 0.5, 9);
  const Tensor before = bank.rows().clone();
  Tape tape;
  Tensor query = Tensor::zeros({1, 3}, true);
  query[0] = 1.0;
  Tensor logits = matmul(tape, query, transpose(tape, bank.rows()));
  tape.backward(sum(tape, logits));
  CHECK_FALSE(bank.rows().has_grad());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(bank.rows()[i] == before[i]);
}

TEST_CASE("update momentum boundaries") {
  // m = 0: row replaced by the new feature
  EmbeddingBank replace(4, 3, 0.0, 1);
  const Tensor v = unit_vec(3, 1);
  replace.update(2, v);
  CHECK(replace.rows()[2 * 3 + 0] == 0.0);
  CHECK(replace.rows()[2 * 3 + 1] == 1.0);

  // m = 1: row unchanged
  EmbeddingBank keep(4, 3, 1.0, 1);
  const Tensor before = keep.rows().clone();
  keep.update(2, v);
  for (std::size_t j = 0; j < 3; ++j) CHECK(keep.rows()[2 * 3 + j] == before[2 * 3 + j]);
}

TEST_CASE("update blends and renormalizes: hand case") {
  EmbeddingBank bank(Tensor({1, 2}, {1.0, 0.0}), 0.5);
  bank.update(0, unit_vec(2, 1));
  const double expected = std::sqrt(0.5);
  CHECK(bank.rows()[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(bank.rows()[1] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("rows stay unit-norm through 1000 random updates") {
  EmbeddingBank bank(32, 16, 0.5, 7);
  Rng rng(55);
  for (int iter = 0; iter < 1000; ++iter) {
    Tensor v = Tensor::zeros({16});
    double ss = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      v[j] = rng.normal();
      ss += v[j] * v[j];
    }
    for (std::size_t j = 0; j < 16; ++j) v[j] /= std::sqrt(ss);
    bank.update(rng.integer(32), v);
  }
  for (std::size_t i = 0; i < 32; ++i)
    CHECK(std::abs(row_norm(bank.rows(), i, 16) - 1.0) <= 1e-6);
}

TEST_CASE("update error paths") {
  EmbeddingBank bank(2, 2, 0.5, 1);
  Tensor nan_vec = Tensor::zeros({2});
  nan_vec[0] = std::nan("");
  CHECK_THROWS_AS(bank.update(0, nan_vec), Error);
  CHECK_THROWS_AS(bank.update(5, unit_vec(2, 0)), Error);

  // anti-parallel blend at m = 0.5 degenerates; must raise, not renormalize noise
  EmbeddingBank anti(Tensor({1, 2}, {1.0, 0.0}), 0.5);
  Tensor opposite = Tensor::zeros({2});
  opposite[0] = -1.0;
  CHECK_THROWS_AS(anti.update(0, opposite), Error);
}
