#include <doctest.h>

#include <cmath>

#include "eir/augment.hpp"
#include "eir/error.hpp"
#include "eir/rng.hpp"

using namespace eir;

namespace {

Tensor random_image(std::uint64_t seed, std::size_t c = 3, std::size_t h = 8, std::size_t w = 8) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({c, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

Tensor random_vec(std::uint64_t seed, std::size_t n = 16) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({n});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

AugmentPolicy disabled_policy() {
  AugmentPolicy p;
  p.crop = p.flip = p.jitter = p.grayscale = false;
  return p;
}

}  // namespace

TEST_CASE("two_views with every transform disabled returns the sample twice") {
  const Tensor x = random_image(1);
  Rng rng(2);
  auto [v1, v2] = two_views(x, disabled_policy(), rng);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(v1[i] == x[i]);
    CHECK(v2[i] == x[i]);
  }
}

TEST_CASE("two_views is reproducible for a fixed stream") {
  const Tensor x = random_image(3);
  AugmentPolicy policy;
  Rng a(77), b(77);
  auto [a1, a2] = two_views(x, policy, a);
  auto [b1, b2] = two_views(x, policy, b);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(a1[i] == b1[i]);
    CHECK(a2[i] == b2[i]);
  }
}

TEST_CASE("crops make the two views differ nearly always") {
  const Tensor x = random_image(4);
  AugmentPolicy policy;  // crop + flip + jitter + grayscale
  std::size_t distinct = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(1000 + trial);
    auto [v1, v2] = two_views(x, policy, rng);
    double diff = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) diff += std::abs(v1[i] - v2[i]);
    if (diff > 0.0) ++distinct;
  }
  CHECK(distinct >= 99);
}

TEST_CASE("vector views stay in range and respond to the policy") {
  const Tensor x = random_vec(5);
  AugmentPolicy policy;
  policy.flip = policy.grayscale = false;
  policy.jitter_strength = 0.3;
  Rng rng(6);
  auto [v1, v2] = two_views(x, policy, rng, -1.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(v1[i] >= -1.0);
    CHECK(v1[i] <= 1.0);
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) diff += std::abs(v1[i] - v2[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("mixup boundaries and hand arithmetic") {
  const Tensor a = random_image(7);
  const Tensor b = random_image(8);
  const Tensor at_one = mixup(a, b, 1.0);
  const Tensor at_zero = mixup(a, b, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(at_one[i] == a[i]);
    CHECK(at_zero[i] == b[i]);
  }
  const Tensor zeros = Tensor::zeros({2, 4, 4});
  const Tensor ones = Tensor::full({2, 4, 4}, 1.0);
  const Tensor half = mixup(zeros, ones, 0.5);
  for (std::size_t i = 0; i < half.size(); ++i) CHECK(half[i] == 0.5);
}

TEST_CASE("mixup symmetry and convexity") {
  const Tensor a = random_vec(9, 32);
  const Tensor b = random_vec(10, 32);
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const double r = rng.uniform();
    const Tensor ab = mixup(a, b, r);
    const Tensor ba = mixup(b, a, 1.0 - r);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(ab[i] - ba[i]) <= 1e-12);
      const double lo = std::min(a[i], b[i]) - 1e-12;
      const double hi = std::max(a[i], b[i]) + 1e-12;
      CHECK(ab[i] >= lo);
      CHECK(ab[i] <= hi);
    }
  }
}

TEST_CASE("mixup error paths") {
  CHECK_THROWS_AS(mixup(random_vec(1, 8), random_vec(1, 9), 0.5), Error);
  CHECK_THROWS_AS(mixup(random_vec(1, 8), random_vec(2, 8), 1.5), Error);
}

TEST_CASE("cutmix boundaries") {
  const Tensor a = random_image(12, 3, 32, 32);
  const Tensor b = random_image(13, 3, 32, 32);
  Rng rng(14);
  const CutmixResult keep = cutmix(a, b, 1.0, rng);
  CHECK(keep.r_effective == 1.0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(keep.sample[i] == a[i]);

  const CutmixResult fill = cutmix(a, b, 0.0, rng);
  CHECK(fill.r_effective == 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(fill.sample[i] == b[i]);
}

TEST_CASE("cutmix r_effective equals the pixel-count oracle") {
  const Tensor zeros = Tensor::zeros({3, 32, 32});
  const Tensor ones = Tensor::full({3, 32, 32}, 1.0);
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const CutmixResult res = cutmix(zeros, ones, 0.7, rng);
    std::size_t pasted = 0;
    for (std::size_t i = 0; i < 1024; ++i)  // one channel plane is enough
      if (res.sample[i] == 1.0) ++pasted;
    const double oracle_r = 1.0 - static_cast<double>(pasted) / 1024.0;
    CHECK(res.r_effective == oracle_r);
    CHECK(std::abs(res.r_effective - 0.7) < 0.05);  // integer-rounding gap only
  }
}

TEST_CASE("cutmix on vectors pastes a contiguous block") {
  const Tensor zeros = Tensor::zeros({20});
  const Tensor ones = Tensor::full({20}, 1.0);
  Rng rng(16);
  const CutmixResult res = cutmix(zeros, ones, 0.6, rng);
  std::size_t pasted = 0;
  long first = -1, last = -1;
  for (std::size_t i = 0; i < 20; ++i)
    if (res.sample[i] == 1.0) {
      ++pasted;
      if (first < 0) first = static_cast<long>(i);
      last = static_cast<long>(i);
    }
  CHECK(pasted == 8);  // round(20 * 0.4)
  CHECK(last - first + 1 == static_cast<long>(pasted));
  CHECK(res.r_effective == doctest::Approx(1.0 - 8.0 / 20.0));
}

TEST_CASE("cutmix rejects unsupported ranks") {
  Rng rng(17);
  const Tensor mat = Tensor::zeros({4, 4});
  CHECK_THROWS_AS(cutmix(mat, mat, 0.5, rng), Error);
}

TEST_CASE("interpolate honors the ratio policy") {
  const Tensor a = random_vec(18, 12);
  const Tensor b = random_vec(19, 12);
  InterpolationSpec fixed;
  fixed.mode = InterpolationSpec::Mode::mixup;
  fixed.ratio_policy = InterpolationSpec::RatioPolicy::fixed;
  fixed.r = 0.25;
  Rng rng(20);
  const Interpolated out = interpolate(a, b, fixed, rng);
  CHECK(out.r_effective == 0.25);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(out.sample[i] == doctest::Approx(0.25 * a[i] + 0.75 * b[i]).epsilon(1e-12));

  InterpolationSpec uniform;
  uniform.ratio_policy = InterpolationSpec::RatioPolicy::uniform;
  uniform.lo = 0.3;
  uniform.hi = 0.7;
  for (int trial = 0; trial < 10; ++trial) {
    const Interpolated u = interpolate(a, b, uniform, rng);
    CHECK(u.r_effective >= 0.3);
    CHECK(u.r_effective <= 0.7);
  }
}

TEST_CASE("policy validation") {
  AugmentPolicy p;
  p.crop_scale = 0.0;
  CHECK_THROWS_AS(validate_policy(p), Error);
  p = AugmentPolicy{};
  p.flip_prob = 1.5;
  CHECK_THROWS_AS(validate_policy(p), Error);
  InterpolationSpec spec;
  spec.lo = 0.8;
  spec.hi = 0.2;
  CHECK_THROWS_AS(validate_interpolation(spec), Error);
}
