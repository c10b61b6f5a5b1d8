#include "mcf/confusion.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mcf {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0) {
  if (num_classes < 1 || num_classes > 255) throw ConfigError("confusion matrix: bad class count");
}

void ConfusionMatrix::update(std::span<const std::uint8_t> prediction,
                             std::span<const std::uint8_t> labels) {
  if (prediction.size() != labels.size()) throw ShapeError("confusion update: size mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    if (prediction[i] >= num_classes_) {
      throw ShapeError("confusion update: prediction " + std::to_string(prediction[i]) +
                       " out of range");
    }
    if (labels[i] >= num_classes_) {
      throw ShapeError("confusion update: label " + std::to_string(labels[i]) + " out of range");
    }
    ++at(labels[i], prediction[i]);
  }
}

void ConfusionMatrix::update(const LabelMap& prediction, const LabelMap& labels) {
  if (prediction.n != labels.n || prediction.h != labels.h || prediction.w != labels.w) {
    throw ShapeError("confusion update: prediction and label maps differ in shape");
  }
  update(prediction.values, labels.values);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) throw ShapeError("confusion merge: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

double ConfusionMatrix::pixel_accuracy() const {
  const std::uint64_t t = total();
  if (t == 0) throw NumericError("pixel accuracy of an empty confusion matrix");
  std::uint64_t diag = 0;
  for (int i = 0; i < num_classes_; ++i) diag += at(i, i);
  return static_cast<double>(diag) / static_cast<double>(t);
}

IouReport mean_iou(const ConfusionMatrix& cm, bool exclude_background) {
  const int k = cm.num_classes();
  IouReport report;
  report.per_class.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  double acc = 0;
  for (int i = 0; i < k; ++i) {
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(i, j);
      col += cm.at(j, i);
    }
    const std::uint64_t denom = row + col - cm.at(i, i);
    if (denom == 0) continue;
    const double iou = static_cast<double>(cm.at(i, i)) / static_cast<double>(denom);
    report.per_class[static_cast<std::size_t>(i)] = iou;
    if (exclude_background && i == 0) continue;
    acc += iou;
    ++report.classes_counted;
  }
  if (report.classes_counted == 0) throw NumericError("mIoU undefined: no class has a nonzero denominator");
  report.miou = acc / report.classes_counted;
  return report;
}

}  // namespace mcf
