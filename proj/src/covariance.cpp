#include "mcf/covariance.hpp"

#include <cmath>

namespace mcf {

template <typename T>
Tensor<T> channel_covariance(const Tensor<T>& x, const Tensor<T>& y) {
  if (x.rank() != 4 || x.shape() != y.shape()) {
    throw ShapeError("channel_covariance: operands must share an N×C×H×W shape, got " +
                     shape_to_string(x.shape()) + " and " + shape_to_string(y.shape()));
  }
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  if (hw < 2) throw NumericError("channel_covariance: needs at least two spatial positions");
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  const T denom = static_cast<T>(hw - 1);

  // Means are kept for backward: d cov / d x_i = (y_i − ȳ) / (n − 1), the mean
  // term vanishes because deviations sum to zero.
  std::vector<T> mean_x(planes), mean_y(planes), out(planes);
  const T* xv = x.data().data();
  const T* yv = y.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* xp = xv + p * hw;
    const T* yp = yv + p * hw;
    T sx = 0, sy = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      sx += xp[i];
      sy += yp[i];
    }
    const T mx = sx / static_cast<T>(hw);
    const T my = sy / static_cast<T>(hw);
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += (xp[i] - mx) * (yp[i] - my);
    mean_x[p] = mx;
    mean_y[p] = my;
    out[p] = acc / denom;
  }
  MacTrace::record(x.numel());

  auto backward_fn = [=](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    Node<T>& ny = *self.inputs[1];
    // Read both value arrays before touching grads: nx and ny may be the same node.
    for (int side = 0; side < 2; ++side) {
      Node<T>& target = side == 0 ? nx : ny;
      if (!target.requires_grad) continue;
      const Node<T>& other = side == 0 ? ny : nx;
      const std::vector<T>& other_mean = side == 0 ? mean_y : mean_x;
      auto& d = target.ensure_grad();
      for (std::size_t p = 0; p < planes; ++p) {
        const T g = self.grad[p] / denom;
        const T* op = other.value.data() + p * hw;
        T* dp = d.data() + p * hw;
        for (std::size_t i = 0; i < hw; ++i) dp[i] += g * (op[i] - other_mean[p]);
      }
    }
  };
  return make_result<T>("channel_covariance", Shape{n, c, 1, 1}, std::move(out), {x, y},
                        backward_fn);
}

template <typename T>
AdjustmentBlock<T>::AdjustmentBlock(int channels, int reduction, bool enabled, Rng& rng)
    : channels_(channels), enabled_(enabled) {
  if (channels < 1 || reduction < 1) throw ConfigError("adjustment block: invalid channels/ratio");
  if (!enabled_) return;
  const int hidden = std::max(1, channels / reduction);
  reduce = Conv2d<T>(channels, hidden, 1, 1, 0, rng);
  expand = Conv2d<T>(hidden, channels, 1, 1, 0, rng);
}

template <typename T>
Tensor<T> AdjustmentBlock<T>::forward(const Tensor<T>& v) const {
  if (v.rank() != 4 || v.dim(1) != channels_ || v.dim(2) != 1 || v.dim(3) != 1) {
    throw ShapeError("adjust: expected N×" + std::to_string(channels_) + "×1×1, got " +
                     shape_to_string(v.shape()));
  }
  if (!enabled_) return v;
  return expand.forward(relu(reduce.forward(v)));
}

template <typename T>
void AdjustmentBlock<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  if (!enabled_) return;
  reduce.collect(set, join_name(prefix, "reduce"));
  expand.collect(set, join_name(prefix, "expand"));
}

template <typename T>
Cffm<T>::Cffm(const CffmOptions& options, Rng& rng) : options_(options) {
  const int ch = options.high_channels, cl = options.low_channels, cf = options.fused_channels;
  if (ch < 1 || cl < 1 || cf < 1) throw ConfigError("cffm: channel counts must be >= 1");
  project_high = Conv2d<T>(ch, cf, 1, 1, 0, rng);
  project_low = Conv2d<T>(cl, cf, 1, 1, 0, rng);
  adjust_high = AdjustmentBlock<T>(cf, options.reduction, options.use_adjust, rng);
  adjust_low = AdjustmentBlock<T>(cf, options.reduction, options.use_adjust, rng);
  // Each gate must match the map it multiplies.
  const int a_channels = options.prose_variant ? cl : ch;
  const int b_channels = options.prose_variant ? ch : cl;
  mask_high = Conv2d<T>(cf, a_channels, 3, 1, 1, rng);
  mask_low = Conv2d<T>(cf, b_channels, 3, 1, 1, rng);
}

template <typename T>
void Cffm<T>::check_inputs(const Tensor<T>& x_high, const Tensor<T>& x_low) const {
  if (x_high.rank() != 4 || x_low.rank() != 4 || x_high.dim(0) != x_low.dim(0)) {
    throw ShapeError("cffm: inputs must be N×C×H×W with equal batch size");
  }
  if (x_high.dim(1) != options_.high_channels || x_low.dim(1) != options_.low_channels) {
    throw ShapeError("cffm: configured for " + std::to_string(options_.high_channels) + "/" +
                     std::to_string(options_.low_channels) + " channels, got " +
                     shape_to_string(x_high.shape()) + " and " + shape_to_string(x_low.shape()));
  }
  if (x_low.dim(2) < x_high.dim(2) || x_low.dim(3) < x_high.dim(3)) {
    throw ShapeError("cffm: the low-level map must not be smaller than the high-level map");
  }
}

template <typename T>
typename Cffm<T>::Gates Cffm<T>::gates(const Tensor<T>& x_high, const Tensor<T>& x_low) const {
  check_inputs(x_high, x_low);
  const Tensor<T> ph = project_high.forward(x_high);
  const Tensor<T> pl = project_low.forward(x_low);
  const Tensor<T> v_high =
      channel_covariance(ph, bilinear_resize(pl, x_high.dim(2), x_high.dim(3)));
  const Tensor<T> v_low = channel_covariance(bilinear_resize(ph, x_low.dim(2), x_low.dim(3)), pl);
  Gates g;
  g.a = sigmoid(mask_high.forward(adjust_high.forward(v_high)));
  g.b = sigmoid(mask_low.forward(adjust_low.forward(v_low)));
  return g;
}

template <typename T>
Tensor<T> Cffm<T>::forward(const Tensor<T>& x_high, const Tensor<T>& x_low) const {
  const Gates g = gates(x_high, x_low);
  const int h = x_low.dim(2), w = x_low.dim(3);
  if (options_.prose_variant) {
    return concat_channels(bilinear_resize(mul(g.b, x_high), h, w), mul(g.a, x_low));
  }
  return concat_channels(bilinear_resize(mul(g.a, x_high), h, w), mul(g.b, x_low));
}

template <typename T>
void Cffm<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  project_high.collect(set, join_name(prefix, "project_high"));
  project_low.collect(set, join_name(prefix, "project_low"));
  adjust_high.collect(set, join_name(prefix, "adjust_high"));
  adjust_low.collect(set, join_name(prefix, "adjust_low"));
  mask_high.collect(set, join_name(prefix, "mask_high"));
  mask_low.collect(set, join_name(prefix, "mask_low"));
}

template <typename T>
Cfrm<T>::Cfrm(int channels, int reduction, bool use_adjust, Rng& rng)
    : adjust(channels, reduction, use_adjust, rng),
      mask(channels, channels, 3, 1, 1, rng),
      refine(channels, channels, 3, 1, 1, rng) {}

template <typename T>
Tensor<T> Cfrm<T>::gate(const Tensor<T>& x) const {
  return sigmoid(mask.forward(adjust.forward(channel_covariance(x, x))));
}

template <typename T>
Tensor<T> Cfrm<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != refine.in_channels()) {
    throw ShapeError("cfrm: expected " + std::to_string(refine.in_channels()) +
                     " channels, got " + shape_to_string(x.shape()));
  }
  return mul(gate(x), refine.forward(x));
}

template <typename T>
void Cfrm<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  adjust.collect(set, join_name(prefix, "adjust"));
  mask.collect(set, join_name(prefix, "mask"));
  refine.collect(set, join_name(prefix, "refine"));
}

template <typename T>
LGate<T>::LGate(std::array<int, 3> in_channels, int gate_channels, Rng& rng) {
  if (gate_channels < 1) throw ConfigError("lgate: gate width must be >= 1");
  for (std::size_t i = 0; i < 3; ++i) {
    harmonize[i] = Conv2d<T>(in_channels[i], gate_channels, 1, 1, 0, rng);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    gate[i] = Conv2d<T>(gate_channels, gate_channels, 3, 1, 1, rng);
  }
  fuse = Conv2d<T>(2 * gate_channels, gate_channels, 3, 1, 1, rng);
}

template <typename T>
Tensor<T> LGate<T>::forget(int i, const Tensor<T>& x) const {
  return mul(x, sigmoid(gate[static_cast<std::size_t>(i)].forward(x)));
}

template <typename T>
Tensor<T> LGate<T>::forward(const Tensor<T>& x1, const Tensor<T>& x2, const Tensor<T>& x3) const {
  for (const Tensor<T>* t : {&x1, &x2, &x3}) {
    if (t->rank() != 4 || t->dim(0) != x1.dim(0)) throw ShapeError("lgate: inputs must be N×C×H×W");
  }
  const int h = x1.dim(2), w = x1.dim(3);
  auto near = [](int actual, double expected) { return std::abs(actual - expected) <= 1.0; };
  if (!near(x2.dim(2), h / 2.0) || !near(x2.dim(3), w / 2.0) || !near(x3.dim(2), h / 4.0) ||
      !near(x3.dim(3), w / 4.0)) {
    throw ShapeError("lgate: inputs must be at 1, 1/2 and 1/4 of the first input's size, got " +
                     shape_to_string(x1.shape()) + ", " + shape_to_string(x2.shape()) + ", " +
                     shape_to_string(x3.shape()));
  }
  const Tensor<T> h1 = harmonize[0].forward(x1);
  const Tensor<T> h2 = bilinear_resize(harmonize[1].forward(x2), h, w);
  const Tensor<T> h3 = bilinear_resize(harmonize[2].forward(x3), h, w);
  return fuse.forward(concat_channels(add(forget(0, h1), forget(1, h2)), forget(2, h3)));
}

template <typename T>
void LGate<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  for (std::size_t i = 0; i < 3; ++i) {
    harmonize[i].collect(set, join_name(prefix, "harmonize" + std::to_string(i + 1)));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    gate[i].collect(set, join_name(prefix, "gate" + std::to_string(i + 1)));
  }
  fuse.collect(set, join_name(prefix, "fuse"));
}

template Tensor<float> channel_covariance(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> channel_covariance(const Tensor<double>&, const Tensor<double>&);
template class AdjustmentBlock<float>;
template class AdjustmentBlock<double>;
template class Cffm<float>;
template class Cffm<double>;
template class Cfrm<float>;
template class Cfrm<double>;
template class LGate<float>;
template class LGate<double>;

}  // namespace mcf
