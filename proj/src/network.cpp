#include "mcf/network.hpp"

#include <cmath>

namespace mcf {

namespace {

int scale_width(int width, double multiplier) {
  return std::max(1, static_cast<int>(std::lround(width * multiplier)));
}

void check_divisible(int h, int w, int factor, const char* where) {
  if (h % factor != 0 || w % factor != 0) {
    throw ConfigError(std::string(where) + ": input size " + std::to_string(h) + "x" +
                      std::to_string(w) + " must be divisible by " + std::to_string(factor));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
  if (num_classes > 255) throw ConfigError("model.num_classes must be <= 255 (255 is the ignore label)");
  if (input_channels < 1) throw ConfigError("model.input_channels must be >= 1");
  if (!(width_multiplier > 0)) throw ConfigError("model.width_multiplier must be positive");
  for (int w : spatial_widths) {
    if (w < 1) throw ConfigError("model.spatial_widths entries must be >= 1");
  }
  for (int w : backbone_widths) {
    if (w < 1) throw ConfigError("model.backbone_widths entries must be >= 1");
  }
  for (int b : backbone_blocks) {
    if (b < 1) throw ConfigError("model.backbone_blocks entries must be >= 1");
  }
  if (fused_channels < 0) throw ConfigError("model.c_f must be >= 0 (0 selects C_g)");
  if (gate_channels < 1 || reduction < 1 || ffm_width < 1) {
    throw ConfigError("model.c_g, model.r and model.ffm_width must be >= 1");
  }
}

ModelConfig ModelConfig::resolved() const {
  validate();
  ModelConfig r = *this;
  for (auto& w : r.spatial_widths) w = scale_width(w, width_multiplier);
  for (auto& w : r.backbone_widths) w = scale_width(w, width_multiplier);
  r.gate_channels = scale_width(gate_channels, width_multiplier);
  r.ffm_width = scale_width(ffm_width, width_multiplier);
  if (r.fused_channels == 0) r.fused_channels = r.gate_channels;
  r.width_multiplier = 1.0;
  return r;
}

template <typename T>
SpatialPath<T>::SpatialPath(int in_channels, const std::array<int, 3>& widths, Rng& rng) {
  layers[0] = ConvBnRelu<T>(in_channels, widths[0], 7, 2, 3, rng);
  layers[1] = ConvBnRelu<T>(widths[0], widths[1], 3, 2, 1, rng);
  layers[2] = ConvBnRelu<T>(widths[1], widths[2], 3, 2, 1, rng);
}

template <typename T>
Tensor<T> SpatialPath<T>::forward(const Tensor<T>& image, bool training) {
  check_divisible(image.dim(2), image.dim(3), 8, "spatial path");
  Tensor<T> x = image;
  for (auto& layer : layers) x = layer.forward(x, training);
  return x;
}

template <typename T>
void SpatialPath<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect(set, join_name(prefix, "layer" + std::to_string(i + 1)));
  }
}

template <typename T>
BasicBlock<T>::BasicBlock(int in_channels, int out_channels, int stride, Rng& rng)
    : conv1(in_channels, out_channels, 3, stride, 1, rng),
      bn1(out_channels),
      conv2(out_channels, out_channels, 3, 1, 1, rng),
      bn2(out_channels),
      has_projection(stride != 1 || in_channels != out_channels) {
  if (has_projection) {
    shortcut = Conv2d<T>(in_channels, out_channels, 1, stride, 0, rng);
    shortcut_bn = BatchNorm2d<T>(out_channels);
  }
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(const Tensor<T>& x, bool training) {
  Tensor<T> y = relu(bn1.forward(conv1.forward(x), training));
  y = bn2.forward(conv2.forward(y), training);
  const Tensor<T> identity = has_projection ? shortcut_bn.forward(shortcut.forward(x), training) : x;
  return relu(add(y, identity));
}

template <typename T>
void BasicBlock<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  conv1.collect(set, join_name(prefix, "conv1"));
  bn1.collect(set, join_name(prefix, "bn1"));
  conv2.collect(set, join_name(prefix, "conv2"));
  bn2.collect(set, join_name(prefix, "bn2"));
  if (has_projection) {
    shortcut.collect(set, join_name(prefix, "shortcut"));
    shortcut_bn.collect(set, join_name(prefix, "shortcut_bn"));
  }
}

template <typename T>
ContextPath<T>::ContextPath(int in_channels, const std::array<int, 4>& widths,
                            const std::array<int, 4>& blocks, Rng& rng)
    : stem(in_channels, widths[0], 7, 2, 3, rng) {
  int channels = widths[0];
  for (std::size_t s = 0; s < 4; ++s) {
    for (int b = 0; b < blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      stages[s].emplace_back(channels, widths[s], stride, rng);
      channels = widths[s];
    }
  }
}

template <typename T>
FeaturePyramid<T> ContextPath<T>::forward(const Tensor<T>& image, bool training) {
  check_divisible(image.dim(2), image.dim(3), 32, "context path");
  Tensor<T> x = max_pool2d(stem.forward(image, training), 3, 2, 1);
  FeaturePyramid<T> out;
  for (std::size_t s = 0; s < 4; ++s) {
    for (auto& block : stages[s]) x = block.forward(x, training);
    if (s == 1) out.f8 = x;
    if (s == 2) out.f16 = x;
  }
  out.tail = global_avg_pool(x);
  out.f32 = add(x, out.tail);
  return out;
}

template <typename T>
void ContextPath<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  stem.collect(set, join_name(prefix, "stem"));
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t b = 0; b < stages[s].size(); ++b) {
      stages[s][b].collect(set, join_name(prefix, "stage" + std::to_string(s + 1) + "." +
                                                     std::to_string(b)));
    }
  }
}

template <typename T>
FeatureFusion<T>::FeatureFusion(int in_channels, int out_channels, int reduction, Rng& rng)
    : block(in_channels, out_channels, 3, 1, 1, rng),
      squeeze(out_channels, std::max(1, out_channels / reduction), 1, 1, 0, rng),
      excite(std::max(1, out_channels / reduction), out_channels, 1, 1, 0, rng) {}

template <typename T>
Tensor<T> FeatureFusion<T>::forward(const Tensor<T>& x, bool training) {
  const Tensor<T> feat = block.forward(x, training);
  const Tensor<T> attention =
      sigmoid(excite.forward(relu(squeeze.forward(global_avg_pool(feat)))));
  return add(mul(feat, attention), feat);
}

template <typename T>
void FeatureFusion<T>::collect(ParameterSet<T>& set, const std::string& prefix) {
  block.collect(set, join_name(prefix, "block"));
  squeeze.collect(set, join_name(prefix, "squeeze"));
  excite.collect(set, join_name(prefix, "excite"));
}

template <typename T>
Mcfnet<T>::Mcfnet(const ModelConfig& config) : config_(config.resolved()) {
  const ModelConfig& c = config_;
  Rng rng(c.seed);
  spatial = SpatialPath<T>(c.input_channels, c.spatial_widths, rng);
  context = ContextPath<T>(c.input_channels, c.backbone_widths, c.backbone_blocks, rng);
  const std::array<int, 3> pyramid{c.backbone_widths[1], c.backbone_widths[2], c.backbone_widths[3]};
  if (c.use_lgate) {
    lgate = LGate<T>(pyramid, c.gate_channels, rng);
  } else {
    pyramid_merge = Conv2d<T>(pyramid[0] + pyramid[1] + pyramid[2], c.gate_channels, 1, 1, 0, rng);
  }
  const int spatial_out = c.spatial_widths[2];
  if (c.use_cffm) {
    CffmOptions opts;
    opts.high_channels = c.gate_channels;
    opts.low_channels = spatial_out;
    opts.fused_channels = c.fused_channels;
    opts.reduction = c.reduction;
    opts.use_adjust = c.use_adjust;
    opts.prose_variant = c.cffm_prose_variant;
    cffm = Cffm<T>(opts, rng);
  }
  ffm = FeatureFusion<T>(c.gate_channels + spatial_out, c.ffm_width, c.reduction, rng);
  if (c.use_cfrm) cfrm = Cfrm<T>(c.ffm_width, c.reduction, c.use_adjust, rng);
  classifier = Conv2d<T>(c.ffm_width, c.num_classes, 1, 1, 0, rng, ConvInit::kSmallNormal);
}

template <typename T>
Tensor<T> Mcfnet<T>::forward(const Tensor<T>& image, bool training) {
  if (image.rank() != 4 || image.dim(1) != config_.input_channels) {
    throw ShapeError("mcfnet: expected N×" + std::to_string(config_.input_channels) +
                     "×H×W input, got " + shape_to_string(image.shape()));
  }
  const int h = image.dim(2), w = image.dim(3);
  check_divisible(h, w, 32, "mcfnet");
  const Tensor<T> detail = spatial.forward(image, training);
  const FeaturePyramid<T> pyramid = context.forward(image, training);

  Tensor<T> ctx;
  if (config_.use_lgate) {
    ctx = lgate.forward(pyramid.f8, pyramid.f16, pyramid.f32);
  } else {
    const int ph = pyramid.f8.dim(2), pw = pyramid.f8.dim(3);
    ctx = pyramid_merge.forward(
        concat_channels(concat_channels(pyramid.f8, bilinear_resize(pyramid.f16, ph, pw)),
                        bilinear_resize(pyramid.f32, ph, pw)));
  }

  Tensor<T> fused = config_.use_cffm
                        ? cffm.forward(ctx, detail)
                        : concat_channels(bilinear_resize(ctx, detail.dim(2), detail.dim(3)), detail);
  Tensor<T> feat = ffm.forward(fused, training);
  if (config_.use_cfrm) feat = cfrm.forward(feat);
  return bilinear_resize(classifier.forward(feat), h, w);
}

template <typename T>
ParameterSet<T> Mcfnet<T>::parameters() {
  ParameterSet<T> set;
  spatial.collect(set, "spatial");
  context.collect(set, "context");
  if (config_.use_lgate) {
    lgate.collect(set, "lgate");
  } else {
    pyramid_merge.collect(set, "pyramid_merge");
  }
  if (config_.use_cffm) cffm.collect(set, "cffm");
  ffm.collect(set, "ffm");
  if (config_.use_cfrm) cfrm.collect(set, "cfrm");
  classifier.collect(set, "classifier");
  return set;
}

template class SpatialPath<float>;
template class SpatialPath<double>;
template class BasicBlock<float>;
template class BasicBlock<double>;
template class ContextPath<float>;
template class ContextPath<double>;
template class FeatureFusion<float>;
template class FeatureFusion<double>;
template class Mcfnet<float>;
template class Mcfnet<double>;

}  // namespace mcf
