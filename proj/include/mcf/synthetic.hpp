#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mcf/data.hpp"

namespace mcf {

/// Axis-aligned rectangles and disks painted in class-coded colours over a
/// background (class 0), with additive noise. Same spec, same bytes.
struct SynthDatasetSpec {
  int num_images = 8;
  int image_size = 64;
  int num_classes = 4;
  int min_shapes = 3;
  int max_shapes = 6;
  double noise = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<SegSample> generate_synthetic_dataset(const SynthDatasetSpec& spec);

/// Colour (RGB in [0, 1]) used for a class.
std::array<float, 3> class_color(int class_id, int num_classes);

}  // namespace mcf
