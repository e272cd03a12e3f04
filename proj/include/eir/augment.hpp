#pragma once

#include <utility>

#include "eir/rng.hpp"
#include "eir/tensor.hpp"

namespace eir {

/// Stochastic two-view policy. Image samples are rank-3 {C,H,W}; vector
/// samples are rank-1. Each transform has an enable flag so ablations can
/// toggle them individually.
struct AugmentPolicy {
  double crop_scale = 0.2;       // minimum kept area (images) / kept fraction (vectors)
  double flip_prob = 0.5;
  double jitter_strength = 0.4;
  double grayscale_prob = 0.2;
  bool crop = true;
  bool flip = true;
  bool jitter = true;
  bool grayscale = true;
};

void validate_policy(const AugmentPolicy& policy);

/// One stochastic view. Output values are clamped to [lo, hi].
Tensor augment_view(const Tensor& x, const AugmentPolicy& policy, Rng& rng, double lo, double hi);

/// Two independent views of the same sample. With every transform disabled
/// this returns (x, x) exactly.
std::pair<Tensor, Tensor> two_views(const Tensor& x, const AugmentPolicy& policy, Rng& rng,
                                    double lo = 0.0, double hi = 1.0);

/// Element-wise r*a + (1-r)*b.
Tensor mixup(const Tensor& a, const Tensor& b, double r);

struct CutmixResult {
  Tensor sample;
  /// 1 - (pasted elements / total elements): the realized information ratio
  /// of a. Downstream feature targets must use this, not the requested r.
  double r_effective;
};

/// Pastes a block of b into a. Images get a rectangular patch with area
/// targeting (1-r) of the image, position uniform over in-bounds placements;
/// vectors get a contiguous coordinate block of the same fraction.
CutmixResult cutmix(const Tensor& a, const Tensor& b, double r, Rng& rng);

struct InterpolationSpec {
  enum class Mode { mixup, cutmix };
  enum class RatioPolicy { fixed, uniform };
  Mode mode = Mode::mixup;
  RatioPolicy ratio_policy = RatioPolicy::uniform;
  double r = 0.5;   // fixed-policy ratio
  double lo = 0.3;  // uniform-policy bounds
  double hi = 0.7;
};

void validate_interpolation(const InterpolationSpec& spec);

struct Interpolated {
  Tensor sample;
  double r_effective;
};

/// Draws the ratio per policy and applies the configured operator.
Interpolated interpolate(const Tensor& a, const Tensor& b, const InterpolationSpec& spec, Rng& rng);

}  // namespace eir
