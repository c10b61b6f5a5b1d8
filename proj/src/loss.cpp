#include "mcf/loss.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace mcf {

namespace {

template <typename T>
void check_logits(const Tensor<T>& logits, const LabelMap& labels) {
  if (logits.rank() != 4) throw ShapeError("cross entropy: logits must be N×K×H×W");
  if (logits.dim(1) < 2) throw ShapeError("cross entropy: need at least two classes");
  if (labels.n != logits.dim(0) || labels.h != logits.dim(2) || labels.w != logits.dim(3) ||
      labels.values.size() != static_cast<std::size_t>(labels.n) * labels.h * labels.w) {
    throw ShapeError("cross entropy: label map does not match logits " +
                     shape_to_string(logits.shape()));
  }
}

// Log-sum-exp and max logit of one pixel, classes strided by `plane`.
template <typename T>
T log_sum_exp(const T* z, int k, std::size_t plane) {
  T zmax = z[0];
  for (int c = 1; c < k; ++c) zmax = std::max(zmax, z[c * plane]);
  T acc = 0;
  for (int c = 0; c < k; ++c) acc += std::exp(z[c * plane] - zmax);
  return zmax + std::log(acc);
}

}  // namespace

template <typename T>
std::vector<T> softmax_channels(const Tensor<T>& logits) {
  if (logits.rank() != 4) throw ShapeError("softmax_channels: logits must be N×K×H×W");
  const int n = logits.dim(0), k = logits.dim(1);
  const std::size_t plane = static_cast<std::size_t>(logits.dim(2)) * logits.dim(3);
  std::vector<T> out(logits.numel());
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * k * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const T lse = log_sum_exp(logits.data().data() + base + i, k, plane);
      for (int c = 0; c < k; ++c) {
        const std::size_t idx = base + c * plane + i;
        out[idx] = std::exp(logits.data()[idx] - lse);
      }
    }
  }
  return out;
}

template <typename T>
PixelStats<T> pixel_cross_entropy(const Tensor<T>& logits, const LabelMap& labels) {
  check_logits(logits, labels);
  const int n = logits.dim(0), k = logits.dim(1);
  const std::size_t plane = static_cast<std::size_t>(labels.h) * labels.w;
  PixelStats<T> stats;
  stats.loss.assign(labels.size(), T(0));
  stats.target_prob.assign(labels.size(), T(1));
  stats.valid.assign(labels.size(), 0);
  for (int b = 0; b < n; ++b) {
    const T* z = logits.data().data() + static_cast<std::size_t>(b) * k * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t p = static_cast<std::size_t>(b) * plane + i;
      const std::uint8_t t = labels.values[p];
      if (t == kIgnoreLabel) continue;
      if (t >= k) throw ShapeError("cross entropy: label " + std::to_string(t) + " >= class count");
      const T nll = log_sum_exp(z + i, k, plane) - z[t * plane + i];
      stats.loss[p] = nll;
      stats.target_prob[p] = std::exp(-nll);
      stats.valid[p] = 1;
    }
  }
  return stats;
}

template <typename T>
Tensor<T> masked_cross_entropy(const Tensor<T>& logits, const LabelMap& labels,
                               std::span<const std::uint8_t> keep) {
  check_logits(logits, labels);
  if (keep.size() != labels.size()) throw ShapeError("cross entropy: mask size mismatch");
  const int n = logits.dim(0), k = logits.dim(1);
  const std::size_t plane = static_cast<std::size_t>(labels.h) * labels.w;
  std::size_t kept = 0;
  T total = 0;
  for (int b = 0; b < n; ++b) {
    const T* z = logits.data().data() + static_cast<std::size_t>(b) * k * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t p = static_cast<std::size_t>(b) * plane + i;
      if (!keep[p]) continue;
      const std::uint8_t t = labels.values[p];
      if (t >= k) throw ShapeError("cross entropy: kept pixel has label " + std::to_string(t));
      total += log_sum_exp(z + i, k, plane) - z[t * plane + i];
      ++kept;
    }
  }
  if (kept == 0) std::cerr << "warning: cross entropy over zero pixels, loss defined as 0\n";
  const T loss = kept ? total / static_cast<T>(kept) : T(0);

  std::vector<std::uint8_t> mask(keep.begin(), keep.end());
  std::vector<std::uint8_t> targets = labels.values;
  auto backward_fn = [=](Node<T>& self) {
    if (kept == 0) return;
    Node<T>& in = *self.inputs[0];
    auto& dz = in.ensure_grad();
    const T scale = self.grad[0] / static_cast<T>(kept);
    for (int b = 0; b < n; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * k * plane;
      const T* z = in.value.data() + base;
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t p = static_cast<std::size_t>(b) * plane + i;
        if (!mask[p]) continue;
        const T lse = log_sum_exp(z + i, k, plane);
        for (int c = 0; c < k; ++c) {
          T g = std::exp(z[c * plane + i] - lse);
          if (c == targets[p]) g -= T(1);
          dz[base + c * plane + i] += scale * g;
        }
      }
    }
  };
  return make_result<T>("cross_entropy", Shape{1}, std::vector<T>{loss}, {logits}, backward_fn);
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const LabelMap& labels) {
  std::vector<std::uint8_t> keep(labels.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = labels.values[i] != kIgnoreLabel;
  return masked_cross_entropy(logits, labels, keep);
}

template <typename T>
std::vector<std::uint8_t> ohem_filter(const PixelStats<T>& stats, double threshold,
                                      std::size_t min_kept) {
  if (min_kept < 1) throw ConfigError("ohem: min_kept must be >= 1");
  const std::size_t total = stats.loss.size();
  std::vector<std::uint8_t> keep(total, 0);
  std::vector<std::size_t> valid;
  valid.reserve(total);
  std::size_t hard = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (!stats.valid[i]) continue;
    valid.push_back(i);
    if (stats.target_prob[i] < static_cast<T>(threshold)) {
      keep[i] = 1;
      ++hard;
    }
  }
  if (hard >= min_kept || hard == valid.size()) return keep;

  const std::size_t want = std::min(min_kept, valid.size());
  auto harder = [&](std::size_t a, std::size_t b) {
    if (stats.loss[a] != stats.loss[b]) return stats.loss[a] > stats.loss[b];
    return a < b;
  };
  std::nth_element(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(want - 1),
                   valid.end(), harder);
  std::fill(keep.begin(), keep.end(), 0);
  for (std::size_t j = 0; j < want; ++j) keep[valid[j]] = 1;
  return keep;
}

#define MCF_INSTANTIATE_LOSS(T)                                                                   \
  template std::vector<T> softmax_channels(const Tensor<T>&);                                     \
  template PixelStats<T> pixel_cross_entropy(const Tensor<T>&, const LabelMap&);                  \
  template Tensor<T> masked_cross_entropy(const Tensor<T>&, const LabelMap&,                      \
                                          std::span<const std::uint8_t>);                         \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, const LabelMap&);                    \
  template std::vector<std::uint8_t> ohem_filter(const PixelStats<T>&, double, std::size_t);

MCF_INSTANTIATE_LOSS(float)
MCF_INSTANTIATE_LOSS(double)

}  // namespace mcf
