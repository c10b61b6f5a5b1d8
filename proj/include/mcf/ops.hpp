#pragma once

#include <cstdint>
#include <optional>
#include <type_traits>
#include <vector>

#include "mcf/tensor.hpp"

namespace mcf {

/// Running statistics owned by a batch-norm layer.
template <typename T>
struct BatchNormStats {
  std::vector<T> mean;
  std::vector<T> var;

  explicit BatchNormStats(int channels = 0)
      : mean(static_cast<std::size_t>(channels), T(0)),
        var(static_cast<std::size_t>(channels), T(1)) {}
};

struct BatchNormOptions {
  bool training = false;
  double eps = 1e-5;
  double momentum = 0.1;
};

// Convolution with zero padding. Output extent: (H + 2p - k) / s + 1.
// `bias` takes no part in deduction so std::nullopt can be passed directly.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::optional<std::type_identity_t<Tensor<T>>>& bias,
                 int stride, int padding);

/// Per-channel normalization over N, H, W. In training mode batch statistics are
/// used and `stats` is updated (unbiased variance); in eval mode `stats` is used.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormStats<T>& stats, const BatchNormOptions& options);

/// Bilinear resampling with half-pixel centers (align_corners = false) and
/// edge clamping. Returns the input unchanged when the size already matches.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, int out_h, int out_w);

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, int kernel, int stride, int padding);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Elementwise sum. Shapes must match, or one operand must be N×C×1×1 against
/// an N×C×H×W partner (channel-gate broadcast). Nothing else broadcasts.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product with the same broadcast rule as add().
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, end) of an N×C×H×W tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int end);

/// N×C×H×W -> N×C×1×1 spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Sum of all elements as a shape-[1] tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

/// Multiply-accumulate counter fed by ops while a MacTrace is alive on the
/// current thread. Conv: N·C_out·H'·W'·C_in·k². Batch norm, covariance and
/// gating products: one per input element. Bilinear resize: four per output
/// element (zero when the size is unchanged). Everything else is free.
class MacTrace {
 public:
  MacTrace();
  ~MacTrace();
  MacTrace(const MacTrace&) = delete;
  MacTrace& operator=(const MacTrace&) = delete;

  std::uint64_t total() const { return total_; }

  static void record(std::uint64_t macs);

 private:
  std::uint64_t total_ = 0;
  MacTrace* previous_ = nullptr;
};

}  // namespace mcf
