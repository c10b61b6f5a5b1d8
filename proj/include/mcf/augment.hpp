#pragma once

#include <vector>

#include "mcf/data.hpp"
#include "mcf/layers.hpp"

namespace mcf {

struct AugmentConfig {
  bool enabled = true;
  double flip_p = 0.5;
  std::vector<double> scales{0.5, 1.0, 1.25, 1.5, 1.75};
  int crop_h = 64;
  int crop_w = 64;
  bool color_jitter = true;
  double jitter_low = 0.75;
  double jitter_high = 1.25;
};

/// Horizontal mirror of image and label.
SegSample hflip(const SegSample& sample);

/// Image resampled bilinearly, label by nearest neighbour.
SegSample rescale(const SegSample& sample, int out_h, int out_w);

/// Window [top, top+crop_h) × [left, left+crop_w); parts outside the sample
/// are filled with 0 (image) and kIgnoreLabel (label).
SegSample crop(const SegSample& sample, int top, int left, int crop_h, int crop_w);

/// Random scale, crop (padding when needed), flip and brightness/contrast
/// jitter. Geometric transforms hit image and label alike; jitter touches
/// only the image.
SegSample augment(const SegSample& sample, const AugmentConfig& config, Rng& rng);

SegBatch augment(const SegBatch& batch, const AugmentConfig& config, Rng& rng);

}  // namespace mcf
