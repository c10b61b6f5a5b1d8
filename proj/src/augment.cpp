#include "mcf/augment.hpp"

#include <algorithm>
#include <cmath>

#include "mcf/ops.hpp"

namespace mcf {

namespace {

int nearest_source(int o, int in, int out) {
  const int src = static_cast<int>(std::floor((o + 0.5) * static_cast<double>(in) / out));
  return std::clamp(src, 0, in - 1);
}

}  // namespace

SegSample hflip(const SegSample& s) {
  SegSample out = s;
  const int h = s.height, w = s.width;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      const std::size_t row = (static_cast<std::size_t>(c) * h + y) * w;
      std::reverse(out.image.begin() + static_cast<std::ptrdiff_t>(row),
                   out.image.begin() + static_cast<std::ptrdiff_t>(row + w));
    }
  }
  for (int y = 0; y < h; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * w;
    std::reverse(out.label.begin() + static_cast<std::ptrdiff_t>(row),
                 out.label.begin() + static_cast<std::ptrdiff_t>(row + w));
  }
  return out;
}

SegSample rescale(const SegSample& s, int out_h, int out_w) {
  if (out_h == s.height && out_w == s.width) return s;
  SegSample out;
  out.height = out_h;
  out.width = out_w;
  {
    NoGradGuard no_grad;
    const Tensor<float> img(Shape{1, 3, s.height, s.width}, s.image);
    const Tensor<float> resized = bilinear_resize(img, out_h, out_w);
    out.image.assign(resized.data().begin(), resized.data().end());
  }
  out.label.resize(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = nearest_source(y, s.height, out_h);
    for (int x = 0; x < out_w; ++x) {
      const int sx = nearest_source(x, s.width, out_w);
      out.label[static_cast<std::size_t>(y) * out_w + x] =
          s.label[static_cast<std::size_t>(sy) * s.width + sx];
    }
  }
  return out;
}

SegSample crop(const SegSample& s, int top, int left, int crop_h, int crop_w) {
  SegSample out;
  out.height = crop_h;
  out.width = crop_w;
  const std::size_t plane = static_cast<std::size_t>(crop_h) * crop_w;
  out.image.assign(3 * plane, 0.0f);
  out.label.assign(plane, kIgnoreLabel);
  for (int y = 0; y < crop_h; ++y) {
    const int sy = top + y;
    if (sy < 0 || sy >= s.height) continue;
    for (int x = 0; x < crop_w; ++x) {
      const int sx = left + x;
      if (sx < 0 || sx >= s.width) continue;
      const std::size_t src = static_cast<std::size_t>(sy) * s.width + sx;
      const std::size_t dst = static_cast<std::size_t>(y) * crop_w + x;
      out.label[dst] = s.label[src];
      for (int c = 0; c < 3; ++c) {
        out.image[c * plane + dst] =
            s.image[static_cast<std::size_t>(c) * s.height * s.width + src];
      }
    }
  }
  return out;
}

SegSample augment(const SegSample& sample, const AugmentConfig& config, Rng& rng) {
  if (!config.enabled) return sample;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SegSample s = sample;
  if (!config.scales.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, config.scales.size() - 1);
    const double scale = config.scales[pick(rng)];
    s = rescale(s, std::max(1, static_cast<int>(std::lround(s.height * scale))),
                std::max(1, static_cast<int>(std::lround(s.width * scale))));
  }
  // Crop window offsets; negative offsets centre-pad a too-small image.
  auto offset = [&](int size, int window) {
    if (size <= window) return -(window - size) / 2;
    std::uniform_int_distribution<int> dist(0, size - window);
    return dist(rng);
  };
  const int top = offset(s.height, config.crop_h);
  const int left = offset(s.width, config.crop_w);
  s = crop(s, top, left, config.crop_h, config.crop_w);
  if (unit(rng) < config.flip_p) s = hflip(s);
  if (config.color_jitter) {
    std::uniform_real_distribution<double> factor(config.jitter_low, config.jitter_high);
    const float brightness = static_cast<float>(factor(rng));
    const float contrast = static_cast<float>(factor(rng));
    double mean = 0;
    for (float v : s.image) mean += v;
    mean /= static_cast<double>(s.image.size());
    for (float& v : s.image) {
      const float adjusted =
          ((v - static_cast<float>(mean)) * contrast + static_cast<float>(mean)) * brightness;
      v = std::clamp(adjusted, 0.0f, 1.0f);
    }
  }
  return s;
}

SegBatch augment(const SegBatch& batch, const AugmentConfig& config, Rng& rng) {
  const int n = batch.labels.n, h = batch.labels.h, w = batch.labels.w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<SegSample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SegSample s;
    s.height = h;
    s.width = w;
    const auto img = batch.images.data().subspan(static_cast<std::size_t>(i) * 3 * plane, 3 * plane);
    s.image.assign(img.begin(), img.end());
    const auto lab = batch.labels.values.begin() + static_cast<std::ptrdiff_t>(i * plane);
    s.label.assign(lab, lab + static_cast<std::ptrdiff_t>(plane));
    samples.push_back(augment(s, config, rng));
  }
  return make_batch(samples);
}

}  // namespace mcf
