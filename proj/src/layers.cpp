#include "mcf/layers.hpp"

#include <cmath>

namespace mcf {

template <typename T>
void ParameterSet<T>::check_unique(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
  }
  for (const auto& b : buffers_) {
    if (b.name == name) throw ConfigError("duplicate buffer name: " + name);
  }
}

template <typename T>
void ParameterSet<T>::add_parameter(std::string name, Tensor<T> value, bool weight_decay) {
  check_unique(name);
  params_.push_back({std::move(name), std::move(value), weight_decay});
}

template <typename T>
void ParameterSet<T>::add_buffer(std::string name, std::vector<T>* values) {
  check_unique(name);
  buffers_.push_back({std::move(name), values});
}

template <typename T>
std::size_t ParameterSet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride_, int padding_, Rng& rng,
                  ConvInit init)
    : stride(stride_), padding(padding_) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1) {
    throw ConfigError("conv channels and kernel must be >= 1");
  }
  Shape wshape{out_channels, in_channels, kernel, kernel};
  std::vector<T> w(shape_numel(wshape), T(0));
  if (init != ConvInit::kZero) {
    const double stddev = init == ConvInit::kFanOutNormal
                              ? std::sqrt(2.0 / (static_cast<double>(out_channels) * kernel * kernel))
                              : 0.01;
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : w) v = static_cast<T>(dist(rng));
  }
  weight = Tensor<T>(std::move(wshape), std::move(w), true);
  bias = Tensor<T>::zeros(Shape{out_channels}, true);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  return conv2d<T>(x, weight, bias, stride, padding);
}

template <typename T>
void Conv2d<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  set.add_parameter(join_name(prefix, "weight"), weight, true);
  set.add_parameter(join_name(prefix, "bias"), bias, false);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels)
    : gamma(Tensor<T>::full(Shape{channels}, T(1), true)),
      beta(Tensor<T>::zeros(Shape{channels}, true)),
      stats(channels) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool training) {
  BatchNormOptions opts = options;
  opts.training = training;
  return batch_norm2d<T>(x, gamma, beta, stats, opts);
}

template <typename T>
void BatchNorm2d<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  set.add_parameter(join_name(prefix, "gamma"), gamma, true);
  set.add_parameter(join_name(prefix, "beta"), beta, false);
  set.add_buffer(join_name(prefix, "running_mean"), &stats.mean);
  set.add_buffer(join_name(prefix, "running_var"), &stats.var);
}

template <typename T>
ConvBnRelu<T>::ConvBnRelu(int in_channels, int out_channels, int kernel, int stride, int padding,
                          Rng& rng)
    : conv(in_channels, out_channels, kernel, stride, padding, rng), bn(out_channels) {}

template <typename T>
Tensor<T> ConvBnRelu<T>::forward(const Tensor<T>& x, bool training) {
  return relu(bn.forward(conv.forward(x), training));
}

template <typename T>
void ConvBnRelu<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  conv.collect(set, join_name(prefix, "conv"));
  bn.collect(set, join_name(prefix, "bn"));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ConvBnRelu<float>;
template class ConvBnRelu<double>;

}  // namespace mcf
