#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcf/tensor.hpp"

namespace mcf {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Integer class map N×H×W. Values are class ids or kIgnoreLabel.
struct LabelMap {
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> values;

  std::size_t size() const { return values.size(); }
};

/// One image (3×H×W floats in [0, 1], planar) with its label map.
struct SegSample {
  int height = 0;
  int width = 0;
  std::vector<float> image;
  std::vector<std::uint8_t> label;
};

struct SegBatch {
  Tensor<float> images;  // N×3×H×W
  LabelMap labels;
};

/// Stacks samples of identical size into a batch.
SegBatch make_batch(std::span<const SegSample> samples);

/// Per-pixel argmax over the class axis of N×K×H×W logits.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits);

}  // namespace mcf
