#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcf/data.hpp"
#include "mcf/tensor.hpp"

namespace mcf {

/// Per-pixel softmax statistics, computed without recording a graph.
template <typename T>
struct PixelStats {
  std::vector<T> loss;             // −log p_target; 0 at ignored pixels
  std::vector<T> target_prob;      // p_target; 1 at ignored pixels
  std::vector<std::uint8_t> valid; // 0 where the label is kIgnoreLabel
};

/// Class probabilities of N×K×H×W logits (max-subtracted log-sum-exp).
template <typename T>
std::vector<T> softmax_channels(const Tensor<T>& logits);

template <typename T>
PixelStats<T> pixel_cross_entropy(const Tensor<T>& logits, const LabelMap& labels);

/// Mean cross-entropy over pixels with keep[i] != 0. Labels of kept pixels must
/// be valid classes. An empty selection yields loss 0 and zero gradient.
template <typename T>
Tensor<T> masked_cross_entropy(const Tensor<T>& logits, const LabelMap& labels,
                               std::span<const std::uint8_t> keep);

/// Mean cross-entropy over every non-ignored pixel.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const LabelMap& labels);

/// Online hard example mining. Keeps valid pixels whose target probability is
/// below `threshold`; when fewer than `min_kept` qualify, keeps the `min_kept`
/// highest-loss valid pixels instead (ties broken by lower index).
template <typename T>
std::vector<std::uint8_t> ohem_filter(const PixelStats<T>& stats, double threshold,
                                      std::size_t min_kept);

}  // namespace mcf
