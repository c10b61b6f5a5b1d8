#pragma once

#include <array>
#include <string>

#include "mcf/layers.hpp"

namespace mcf {

/// Unbiased per-sample, per-channel covariance across spatial positions:
///   cov_c = Σ_i (x_ci − x̄_c)(y_ci − ȳ_c) / (n − 1),  n = H·W.
/// Inputs must share an N×C×H×W shape with H·W >= 2. Returns N×C×1×1.
template <typename T>
Tensor<T> channel_covariance(const Tensor<T>& x, const Tensor<T>& y);

/// Squeeze-expand pair applied to an N×C×1×1 covariance vector:
/// expand(relu(reduce(v))), reduce C -> max(1, C/r). When disabled the block
/// holds no parameters and passes its input through.
template <typename T>
class AdjustmentBlock {
 public:
  AdjustmentBlock() = default;
  AdjustmentBlock(int channels, int reduction, bool enabled, Rng& rng);

  Tensor<T> forward(const Tensor<T>& v) const;
  void collect(ParameterSet<T>& set, const std::string& prefix);

  bool enabled() const { return enabled_; }
  int channels() const { return channels_; }

  Conv2d<T> reduce;
  Conv2d<T> expand;

 private:
  int channels_ = 0;
  bool enabled_ = true;
};

struct CffmOptions {
  int high_channels = 0;  // C_h, the semantic (lower resolution) input
  int low_channels = 0;   // C_l, the spatial-detail (higher resolution) input
  int fused_channels = 0; // C_f, common width of the covariance operands
  int reduction = 4;
  bool use_adjust = true;
  // Gate a multiplies the low-level map and gate b the high-level map.
  bool prose_variant = false;
};

/// Covariance feature fusion. Both inputs are projected to C_f by 1×1 convs.
/// The high branch compares the high projection with the low projection
/// resampled down to the high resolution; the low branch compares the high
/// projection resampled up with the low projection. Each covariance vector is
/// adjusted, passed through a 3×3 conv and a sigmoid to give a channel gate.
/// Output: concat(Up(a ⊙ x_h), b ⊙ x_l), C_h + C_l channels at x_l's size.
template <typename T>
class Cffm {
 public:
  struct Gates {
    Tensor<T> a;  // gate applied to x_h (x_l under the prose variant)
    Tensor<T> b;
  };

  Cffm() = default;
  Cffm(const CffmOptions& options, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x_high, const Tensor<T>& x_low) const;
  Gates gates(const Tensor<T>& x_high, const Tensor<T>& x_low) const;
  void collect(ParameterSet<T>& set, const std::string& prefix);

  const CffmOptions& options() const { return options_; }

  Conv2d<T> project_high;
  Conv2d<T> project_low;
  AdjustmentBlock<T> adjust_high;
  AdjustmentBlock<T> adjust_low;
  Conv2d<T> mask_high;
  Conv2d<T> mask_low;

 private:
  void check_inputs(const Tensor<T>& x_high, const Tensor<T>& x_low) const;

  CffmOptions options_;
};

/// Covariance feature refinement: c = σ(conv3×3(adjust(cov(x, x)))),
/// output = c ⊙ conv3×3(x). Shape-preserving.
template <typename T>
class Cfrm {
 public:
  Cfrm() = default;
  Cfrm(int channels, int reduction, bool use_adjust, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> gate(const Tensor<T>& x) const;
  void collect(ParameterSet<T>& set, const std::string& prefix);

  AdjustmentBlock<T> adjust;
  Conv2d<T> mask;
  Conv2d<T> refine;
};

/// Multi-scale forgetting-gate unit. Each input is harmonized to C_g channels
/// with a 1×1 conv, resized to the 1/8 map's size, and filtered by
/// f(x) = x ⊙ σ(conv3×3(x)). Output: conv3×3(concat(f1 + f2, f3)).
template <typename T>
class LGate {
 public:
  LGate() = default;
  LGate(std::array<int, 3> in_channels, int gate_channels, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x1, const Tensor<T>& x2, const Tensor<T>& x3) const;
  /// Forgetting gate i (0-based) applied to an already harmonized input.
  Tensor<T> forget(int i, const Tensor<T>& x) const;
  void collect(ParameterSet<T>& set, const std::string& prefix);

  std::array<Conv2d<T>, 3> harmonize;
  std::array<Conv2d<T>, 3> gate;
  Conv2d<T> fuse;
};

}  // namespace mcf
