#include "eir/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eir/error.hpp"

namespace eir {

void validate_policy(const AugmentPolicy& p) {
  if (p.crop_scale <= 0.0 || p.crop_scale > 1.0)
    throw_parameter("augment policy: crop_scale must be in (0,1]");
  if (p.flip_prob < 0.0 || p.flip_prob > 1.0)
    throw_parameter("augment policy: flip_prob must be in [0,1]");
  if (p.grayscale_prob < 0.0 || p.grayscale_prob > 1.0)
    throw_parameter("augment policy: grayscale_prob must be in [0,1]");
  if (p.jitter_strength < 0.0) throw_parameter("augment policy: jitter_strength must be >= 0");
}

namespace {

bool is_image(const Tensor& x) { return x.rank() == 3; }

void clamp_values(Tensor& x, double lo, double hi) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo, hi);
}

// Bilinear sample of one channel inside the crop window [top, top+ch) x
// [left, left+cw), mapped to the full output grid.
Tensor resized_crop(const Tensor& x, std::size_t top, std::size_t left, std::size_t ch,
                    std::size_t cw) {
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double sy = (static_cast<double>(i) + 0.5) * static_cast<double>(ch) /
                              static_cast<double>(H) -
                          0.5;
        const double sx = (static_cast<double>(j) + 0.5) * static_cast<double>(cw) /
                              static_cast<double>(W) -
                          0.5;
        const double fy = std::clamp(sy, 0.0, static_cast<double>(ch - 1));
        const double fx = std::clamp(sx, 0.0, static_cast<double>(cw - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t x0 = static_cast<std::size_t>(fx);
        const std::size_t y1 = std::min(y0 + 1, ch - 1);
        const std::size_t x1 = std::min(x0 + 1, cw - 1);
        const double wy = fy - static_cast<double>(y0);
        const double wx = fx - static_cast<double>(x0);
        auto at = [&](std::size_t yy, std::size_t xx) {
          return x[(c * H + top + yy) * W + left + xx];
        };
        out[(c * H + i) * W + j] = (1.0 - wy) * ((1.0 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                                   wy * ((1.0 - wx) * at(y1, x0) + wx * at(y1, x1));
      }
  return out;
}

Tensor image_view(const Tensor& x, const AugmentPolicy& p, Rng& rng, double lo, double hi) {
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  Tensor out = x.clone();
  if (p.crop) {
    const double area = rng.uniform(p.crop_scale, 1.0) * static_cast<double>(H * W);
    const double aspect = std::exp(rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
    std::size_t cw = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
    std::size_t ch = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect)));
    cw = std::clamp<std::size_t>(cw, 1, W);
    ch = std::clamp<std::size_t>(ch, 1, H);
    const std::size_t top = ch < H ? rng.integer(H - ch + 1) : 0;
    const std::size_t left = cw < W ? rng.integer(W - cw + 1) : 0;
    out = resized_crop(out, top, left, ch, cw);
  }
  if (p.flip && rng.bernoulli(p.flip_prob)) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W / 2; ++j)
          std::swap(out[(c * H + i) * W + j], out[(c * H + i) * W + (W - 1 - j)]);
  }
  if (p.jitter) {
    const double s = p.jitter_strength;
    const double brightness = rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s);
    const double contrast = rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s);
    double mean = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) mean += out[i];
    mean /= static_cast<double>(out.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (out[i] * brightness - mean) * contrast + mean;
  }
  if (p.grayscale && rng.bernoulli(p.grayscale_prob)) {
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) acc += out[(c * H + i) * W + j];
        const double gray = acc / static_cast<double>(C);
        for (std::size_t c = 0; c < C; ++c) out[(c * H + i) * W + j] = gray;
      }
  }
  clamp_values(out, lo, hi);
  return out;
}

Tensor vector_view(const Tensor& x, const AugmentPolicy& p, Rng& rng, double lo, double hi) {
  const std::size_t n = x.size();
  Tensor out = x.clone();
  if (p.crop) {
    // Crop analog for coordinates: zero a contiguous block, keeping a
    // fraction drawn from [crop_scale, 1].
    const double kept = rng.uniform(p.crop_scale, 1.0);
    const std::size_t masked =
        static_cast<std::size_t>(std::lround((1.0 - kept) * static_cast<double>(n)));
    if (masked > 0) {
      const std::size_t start = rng.integer(n - masked + 1);
      for (std::size_t i = start; i < start + masked; ++i) out[i] = 0.0;
    }
  }
  if (p.flip && rng.bernoulli(p.flip_prob)) {
    for (std::size_t i = 0; i < n / 2; ++i) std::swap(out[i], out[n - 1 - i]);
  }
  if (p.jitter) {
    for (std::size_t i = 0; i < n; ++i) out[i] += p.jitter_strength * rng.normal();
  }
  clamp_values(out, lo, hi);
  return out;
}

}  // namespace

Tensor augment_view(const Tensor& x, const AugmentPolicy& policy, Rng& rng, double lo, double hi) {
  validate_policy(policy);
  if (!policy.crop && !policy.flip && !policy.jitter && !policy.grayscale) return x.clone();
  return is_image(x) ? image_view(x, policy, rng, lo, hi) : vector_view(x, policy, rng, lo, hi);
}

std::pair<Tensor, Tensor> two_views(const Tensor& x, const AugmentPolicy& policy, Rng& rng,
                                    double lo, double hi) {
  Tensor v1 = augment_view(x, policy, rng, lo, hi);
  Tensor v2 = augment_view(x, policy, rng, lo, hi);
  return {std::move(v1), std::move(v2)};
}

Tensor mixup(const Tensor& a, const Tensor& b, double r) {
  if (a.shape() != b.shape())
    throw_dimension("mixup: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  if (r < 0.0 || r > 1.0) throw_parameter("mixup: r must be in [0,1], got " + std::to_string(r));
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = r * a[i] + (1.0 - r) * b[i];
  return out;
}

CutmixResult cutmix(const Tensor& a, const Tensor& b, double r, Rng& rng) {
  if (a.shape() != b.shape())
    throw_dimension("cutmix: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  if (r < 0.0 || r > 1.0) throw_parameter("cutmix: r must be in [0,1], got " + std::to_string(r));
  if (a.rank() == 3) {
    const std::size_t C = a.shape()[0], H = a.shape()[1], W = a.shape()[2];
    const double side = std::sqrt(1.0 - r);
    const std::size_t ph =
        std::min(H, static_cast<std::size_t>(std::lround(side * static_cast<double>(H))));
    const std::size_t pw =
        std::min(W, static_cast<std::size_t>(std::lround(side * static_cast<double>(W))));
    Tensor out = a.clone();
    double pasted = 0.0;
    if (ph > 0 && pw > 0) {
      const std::size_t top = ph < H ? rng.integer(H - ph + 1) : 0;
      const std::size_t left = pw < W ? rng.integer(W - pw + 1) : 0;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = top; i < top + ph; ++i)
          for (std::size_t j = left; j < left + pw; ++j)
            out[(c * H + i) * W + j] = b[(c * H + i) * W + j];
      pasted = static_cast<double>(ph * pw);
    }
    return {std::move(out), 1.0 - pasted / static_cast<double>(H * W)};
  }
  if (a.rank() == 1) {
    const std::size_t n = a.size();
    const std::size_t len =
        std::min(n, static_cast<std::size_t>(std::lround((1.0 - r) * static_cast<double>(n))));
    Tensor out = a.clone();
    if (len > 0) {
      const std::size_t start = len < n ? rng.integer(n - len + 1) : 0;
      for (std::size_t i = start; i < start + len; ++i) out[i] = b[i];
    }
    return {std::move(out), 1.0 - static_cast<double>(len) / static_cast<double>(n)};
  }
  throw_parameter("cutmix: unsupported sample rank " + std::to_string(a.rank()) +
                  " (expected image {C,H,W} or vector)");
}

void validate_interpolation(const InterpolationSpec& spec) {
  if (spec.r < 0.0 || spec.r > 1.0) throw_parameter("interpolation: r must be in [0,1]");
  if (spec.lo > spec.hi || spec.lo < 0.0 || spec.hi > 1.0)
    throw_parameter("interpolation: need 0 <= lo <= hi <= 1");
}

Interpolated interpolate(const Tensor& a, const Tensor& b, const InterpolationSpec& spec,
                         Rng& rng) {
  validate_interpolation(spec);
  const double r = spec.ratio_policy == InterpolationSpec::RatioPolicy::fixed
                       ? spec.r
                       : rng.uniform(spec.lo, spec.hi);
  if (spec.mode == InterpolationSpec::Mode::mixup) return {mixup(a, b, r), r};
  CutmixResult cm = cutmix(a, b, r, rng);
  return {std::move(cm.sample), cm.r_effective};
}

}  // namespace eir
