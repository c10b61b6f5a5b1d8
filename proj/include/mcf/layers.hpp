#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mcf/ops.hpp"
#include "mcf/tensor.hpp"

namespace mcf {

using Rng = std::mt19937_64;

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool weight_decay = true;
};

/// Non-trainable state saved alongside parameters (batch-norm running stats).
template <typename T>
struct Buffer {
  std::string name;
  std::vector<T>* values = nullptr;
};

/// Flat, ordered view over a model's parameters and buffers. Names are unique
/// dotted paths. Holds handles into the model, so it must not outlive it.
template <typename T>
class ParameterSet {
 public:
  void add_parameter(std::string name, Tensor<T> value, bool weight_decay);
  void add_buffer(std::string name, std::vector<T>* values);

  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Buffer<T>>& buffers() const { return buffers_; }

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  void check_unique(const std::string& name) const;

  std::vector<Parameter<T>> params_;
  std::vector<Buffer<T>> buffers_;
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

enum class ConvInit {
  kFanOutNormal,  // N(0, sqrt(2 / (C_out·k²)))
  kSmallNormal,   // N(0, 0.01), used for the classifier
  kZero,
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, Rng& rng,
         ConvInit init = ConvInit::kFanOutNormal);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(ParameterSet<T>& set, const std::string& prefix);

  int in_channels() const { return weight.dim(1); }
  int out_channels() const { return weight.dim(0); }
  int kernel() const { return weight.dim(2); }

  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(ParameterSet<T>& set, const std::string& prefix);

  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormStats<T> stats;
  BatchNormOptions options;
};

template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(int in_channels, int out_channels, int kernel, int stride, int padding, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(ParameterSet<T>& set, const std::string& prefix);

  Conv2d<T> conv;
  BatchNorm2d<T> bn;
};

}  // namespace mcf
