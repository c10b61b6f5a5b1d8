#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mcf/data.hpp"

namespace mcf {

class ImageIoError : public Error {
 public:
  using Error::Error;
};

/// Raised by load_directory_dataset; the message lists every offending stem.
class DatasetError : public Error {
 public:
  using Error::Error;
};

struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (grey) or 3 (RGB), interleaved
  std::vector<std::uint8_t> pixels;
};

Image8 read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Image8& image);

/// Planar [0, 1] floats <-> interleaved 8-bit RGB.
SegSample sample_from_png(const Image8& rgb, const Image8& label);
Image8 image_to_png(const SegSample& sample);
Image8 label_to_png(const SegSample& sample);

/// Loads `<stem>_img.png` (RGB) / `<stem>_lab.png` (single channel) pairs in
/// lexicographic stem order. Label values are kept verbatim.
std::vector<SegSample> load_directory_dataset(const std::filesystem::path& dir);

/// Writes samples as `<index>_img.png` / `<index>_lab.png` (zero-padded index).
void write_directory_dataset(const std::filesystem::path& dir, const std::vector<SegSample>& samples);

}  // namespace mcf
