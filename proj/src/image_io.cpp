#include "mcf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace mcf {

namespace fs = std::filesystem;

Image8 read_png(const fs::path& path, int channels) {
  if (channels != 1 && channels != 3) throw ImageIoError("read_png: channels must be 1 or 3");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageIoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  if (channels == 1 && (image.format & PNG_FORMAT_FLAG_COLOR) != 0) {
    png_image_free(&image);
    throw ImageIoError("expected a single-channel PNG: " + path.string());
  }
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

void write_png(const fs::path& path, const Image8& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw ImageIoError("write_png: pixel buffer does not match size");
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw ImageIoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

SegSample sample_from_png(const Image8& rgb, const Image8& label) {
  SegSample s;
  s.height = rgb.height;
  s.width = rgb.width;
  const std::size_t plane = static_cast<std::size_t>(rgb.width) * rgb.height;
  s.image.resize(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) s.image[c * plane + p] = rgb.pixels[p * 3 + c] / 255.0f;
  }
  s.label = label.pixels;
  return s;
}

Image8 image_to_png(const SegSample& s) {
  Image8 img{s.width, s.height, 3, {}};
  const std::size_t plane = static_cast<std::size_t>(s.width) * s.height;
  img.pixels.resize(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(s.image[c * plane + p], 0.0f, 1.0f);
      img.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

Image8 label_to_png(const SegSample& s) { return Image8{s.width, s.height, 1, s.label}; }

std::vector<SegSample> load_directory_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("dataset directory not found: " + dir.string());
  std::map<std::string, std::pair<bool, bool>> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    auto ends_with = [&](const std::string& suffix) {
      return name.size() > suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with("_img.png")) stems[name.substr(0, name.size() - 8)].first = true;
    if (ends_with("_lab.png")) stems[name.substr(0, name.size() - 8)].second = true;
  }
  std::vector<SegSample> out;
  std::vector<std::string> problems;
  for (const auto& [stem, present] : stems) {
    if (!present.first || !present.second) {
      problems.push_back(stem + ": missing " + (present.first ? "label" : "image"));
      continue;
    }
    try {
      const Image8 rgb = read_png(dir / (stem + "_img.png"), 3);
      const Image8 lab = read_png(dir / (stem + "_lab.png"), 1);
      if (rgb.width != lab.width || rgb.height != lab.height) {
        problems.push_back(stem + ": image and label sizes differ");
        continue;
      }
      out.push_back(sample_from_png(rgb, lab));
    } catch (const ImageIoError& e) {
      problems.push_back(stem + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid dataset entries in " + dir.string() + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DatasetError(msg);
  }
  return out;
}

void write_directory_dataset(const fs::path& dir, const std::vector<SegSample>& samples) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "%05zu", i);
    write_png(dir / (std::string(stem) + "_img.png"), image_to_png(samples[i]));
    write_png(dir / (std::string(stem) + "_lab.png"), label_to_png(samples[i]));
  }
}

}  // namespace mcf
