#include "mcf/data.hpp"

#include <algorithm>

namespace mcf {

SegBatch make_batch(std::span<const SegSample> samples) {
  if (samples.empty()) throw ShapeError("make_batch: no samples");
  const int h = samples.front().height, w = samples.front().width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  SegBatch batch;
  batch.labels.n = static_cast<int>(samples.size());
  batch.labels.h = h;
  batch.labels.w = w;
  std::vector<float> images;
  images.reserve(samples.size() * 3 * plane);
  batch.labels.values.reserve(samples.size() * plane);
  for (const auto& s : samples) {
    if (s.height != h || s.width != w || s.image.size() != 3 * plane || s.label.size() != plane) {
      throw ShapeError("make_batch: samples differ in size");
    }
    images.insert(images.end(), s.image.begin(), s.image.end());
    batch.labels.values.insert(batch.labels.values.end(), s.label.begin(), s.label.end());
  }
  batch.images = Tensor<float>(Shape{batch.labels.n, 3, h, w}, std::move(images));
  return batch;
}

template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits) {
  if (logits.rank() != 4) throw ShapeError("argmax_labels: expected N×K×H×W logits");
  const int n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  LabelMap out{n, h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * plane)};
  const T* z = logits.data().data();
  for (int b = 0; b < n; ++b) {
    const T* zb = z + static_cast<std::size_t>(b) * k * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c) {
        if (zb[c * plane + i] > zb[best * plane + i]) best = c;
      }
      out.values[static_cast<std::size_t>(b) * plane + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template LabelMap argmax_labels(const Tensor<float>&);
template LabelMap argmax_labels(const Tensor<double>&);

}  // namespace mcf
