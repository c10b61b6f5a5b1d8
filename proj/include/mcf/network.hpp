#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcf/covariance.hpp"
#include "mcf/layers.hpp"

namespace mcf {

/// Everything needed to build a model. Same config (including seed) gives the
/// same parameter set, bit for bit.
struct ModelConfig {
  int num_classes = 19;
  int input_channels = 3;
  // Applied to spatial/backbone widths, gate_channels and ffm_width.
  double width_multiplier = 1.0;
  std::array<int, 3> spatial_widths{64, 64, 128};
  std::array<int, 4> backbone_widths{64, 128, 256, 512};
  std::array<int, 4> backbone_blocks{2, 2, 2, 2};
  int fused_channels = 0;  // C_f; 0 means "same as the context width C_g"
  int gate_channels = 128; // C_g
  int reduction = 4;
  int ffm_width = 256;
  bool use_lgate = true;
  bool use_cffm = true;
  bool use_cfrm = true;
  bool cffm_prose_variant = false;
  bool use_adjust = true;
  std::uint64_t seed = 0;

  void validate() const;
  /// Widths after applying width_multiplier; multiplier of the result is 1.
  ModelConfig resolved() const;
};

/// Backbone outputs at 1/8, 1/16 and 1/32 of the input, plus the pooled tail
/// (already broadcast-added onto f32).
template <typename T>
struct FeaturePyramid {
  Tensor<T> f8;
  Tensor<T> f16;
  Tensor<T> f32;
  Tensor<T> tail;
};

template <typename T>
class SpatialPath {
 public:
  SpatialPath() = default;
  SpatialPath(int in_channels, const std::array<int, 3>& widths, Rng& rng);

  Tensor<T> forward(const Tensor<T>& image, bool training);
  void collect(ParameterSet<T>& set, const std::string& prefix);

  std::array<ConvBnRelu<T>, 3> layers;
};

/// Residual block of two 3×3 conv+BN layers; 1×1 conv+BN shortcut when the
/// stride or width changes.
template <typename T>
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(int in_channels, int out_channels, int stride, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(ParameterSet<T>& set, const std::string& prefix);

  Conv2d<T> conv1;
  BatchNorm2d<T> bn1;
  Conv2d<T> conv2;
  BatchNorm2d<T> bn2;
  bool has_projection = false;
  Conv2d<T> shortcut;
  BatchNorm2d<T> shortcut_bn;
};

/// ResNet-style backbone: 7×7/2 stem, 3×3/2 max pool, four stages.
template <typename T>
class ContextPath {
 public:
  ContextPath() = default;
  ContextPath(int in_channels, const std::array<int, 4>& widths, const std::array<int, 4>& blocks,
              Rng& rng);

  FeaturePyramid<T> forward(const Tensor<T>& image, bool training);
  void collect(ParameterSet<T>& set, const std::string& prefix);

  ConvBnRelu<T> stem;
  std::array<std::vector<BasicBlock<T>>, 4> stages;
};

/// Fusion head: conv3×3+BN+ReLU, then an SE-style gate with residual add.
template <typename T>
class FeatureFusion {
 public:
  FeatureFusion() = default;
  FeatureFusion(int in_channels, int out_channels, int reduction, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(ParameterSet<T>& set, const std::string& prefix);

  ConvBnRelu<T> block;
  Conv2d<T> squeeze;
  Conv2d<T> excite;
};

template <typename T>
class Mcfnet {
 public:
  explicit Mcfnet(const ModelConfig& config);

  Mcfnet(const Mcfnet&) = delete;
  Mcfnet& operator=(const Mcfnet&) = delete;

  /// Logits N×num_classes×H×W. H and W must be multiples of 32.
  Tensor<T> forward(const Tensor<T>& image, bool training);

  /// Handles to every parameter and buffer, in a fixed order.
  ParameterSet<T> parameters();

  const ModelConfig& config() const { return config_; }

  SpatialPath<T> spatial;
  ContextPath<T> context;
  LGate<T> lgate;
  Conv2d<T> pyramid_merge;  // replaces L-Gate when it is disabled
  Cffm<T> cffm;
  FeatureFusion<T> ffm;
  Cfrm<T> cfrm;
  Conv2d<T> classifier;

 private:
  ModelConfig config_;
};

}  // namespace mcf
