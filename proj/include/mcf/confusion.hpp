#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcf/data.hpp"

namespace mcf {

/// counts[i][j] = pixels of true class i predicted as j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return num_classes_; }
  std::uint64_t at(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth) * num_classes_ + predicted];
  }
  std::uint64_t& at(int truth, int predicted) {
    return counts_[static_cast<std::size_t>(truth) * num_classes_ + predicted];
  }

  /// Adds every pixel whose label is not kIgnoreLabel. Throws if a prediction
  /// or label is out of range.
  void update(std::span<const std::uint8_t> prediction, std::span<const std::uint8_t> labels);
  void update(const LabelMap& prediction, const LabelMap& labels);

  void merge(const ConfusionMatrix& other);

  std::uint64_t total() const;
  double pixel_accuracy() const;

 private:
  int num_classes_;
  std::vector<std::uint64_t> counts_;
};

struct IouReport {
  double miou = 0;
  // NaN for classes excluded from the mean (absent from both truth and
  // prediction).
  std::vector<double> per_class;
  int classes_counted = 0;
};

/// IoU_i = P_ii / (Σ_j P_ij + Σ_j P_ji − P_ii); the mean skips classes with a
/// zero denominator. `exclude_background` also drops class 0 from the mean.
IouReport mean_iou(const ConfusionMatrix& cm, bool exclude_background = false);

}  // namespace mcf
