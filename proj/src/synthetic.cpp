#include "mcf/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "mcf/layers.hpp"

namespace mcf {

void SynthDatasetSpec::validate() const {
  if (num_classes < 2 || num_classes > 255) throw ConfigError("synthetic: num_classes must be in [2, 255]");
  if (num_images < 1) throw ConfigError("synthetic: num_images must be >= 1");
  if (image_size < 8) throw ConfigError("synthetic: image_size must be >= 8");
  if (min_shapes < 0 || max_shapes < min_shapes) throw ConfigError("synthetic: bad shape range");
  if (noise < 0) throw ConfigError("synthetic: noise must be >= 0");
}

std::array<float, 3> class_color(int class_id, int num_classes) {
  if (class_id == 0) return {0.15f, 0.15f, 0.15f};
  // Evenly spaced hues at full saturation for the foreground classes.
  const double hue = 6.0 * (class_id - 1) / std::max(1, num_classes - 1);
  const int sector = static_cast<int>(hue) % 6;
  const float f = static_cast<float>(hue - std::floor(hue));
  const float hi = 0.9f, lo = 0.1f, rise = lo + (hi - lo) * f, fall = hi - (hi - lo) * f;
  switch (sector) {
    case 0: return {hi, rise, lo};
    case 1: return {fall, hi, lo};
    case 2: return {lo, hi, rise};
    case 3: return {lo, fall, hi};
    case 4: return {rise, lo, hi};
    default: return {hi, lo, fall};
  }
}

std::vector<SegSample> generate_synthetic_dataset(const SynthDatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int size = spec.image_size;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  std::uniform_int_distribution<int> shape_count(spec.min_shapes, spec.max_shapes);
  std::uniform_int_distribution<int> extent(std::max(2, size / 8), std::max(3, size / 3));
  std::uniform_int_distribution<int> position(0, size - 1);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> foreground(1, spec.num_classes - 1);
  std::normal_distribution<double> noise(0.0, spec.noise);

  std::vector<SegSample> out;
  out.reserve(static_cast<std::size_t>(spec.num_images));
  for (int img = 0; img < spec.num_images; ++img) {
    SegSample s;
    s.height = size;
    s.width = size;
    s.label.assign(plane, 0);
    const int count = shape_count(rng);
    const int first = foreground(rng);
    for (int k = 0; k < count; ++k) {
      // The first num_classes-1 shapes cycle through every foreground class.
      const int cls = k < spec.num_classes - 1 ? 1 + (first - 1 + k) % (spec.num_classes - 1)
                                               : foreground(rng);
      const int cy = position(rng), cx = position(rng);
      const int ext_y = extent(rng), ext_x = extent(rng);
      const bool disk = coin(rng) == 1;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          bool inside;
          if (disk) {
            const double r = ext_y / 2.0;
            inside = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r;
          } else {
            inside = std::abs(y - cy) <= ext_y / 2 && std::abs(x - cx) <= ext_x / 2;
          }
          if (inside) s.label[static_cast<std::size_t>(y) * size + x] = static_cast<std::uint8_t>(cls);
        }
      }
    }
    s.image.resize(3 * plane);
    for (std::size_t p = 0; p < plane; ++p) {
      const auto color = class_color(s.label[p], spec.num_classes);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = color[c] + noise(rng);
        s.image[c * plane + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mcf
