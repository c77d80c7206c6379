#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace dpsr {

// Channels-first float image. RGB images hold values in [0,1].
struct Image {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int64_t c, int64_t h, int64_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c * h * w), fill) {}

  float& at(int64_t c, int64_t y, int64_t x) { return data[static_cast<std::size_t>((c * height + y) * width + x)]; }
  float at(int64_t c, int64_t y, int64_t x) const {
    return data[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  bool empty() const { return data.empty(); }
  bool same_shape(const Image& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }
};

// 8-bit PNG (gray, gray+alpha, RGB or RGBA; alpha dropped) to [0,1].
Image read_png(const std::filesystem::path& path);

// Writes 1- or 3-channel images as 8-bit PNG. Values are clamped to [0,1]
// and quantized with round-half-away-from-zero.
void write_png(const std::filesystem::path& path, const Image& image);

std::uint8_t quantize_u8(float value);

// Rectangular crop; throws ShapeError if the window leaves the image.
Image crop(const Image& image, int64_t y, int64_t x, int64_t height, int64_t width);

// (C,H,W) float32 tensor sharing no storage with `image`.
torch::Tensor to_tensor(const Image& image);
// Accepts (C,H,W) or (1,C,H,W).
Image from_tensor(const torch::Tensor& tensor);

}  // namespace dpsr
