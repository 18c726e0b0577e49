#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dgseg {

inline constexpr std::uint8_t kIgnore = 255;

/// Planar RGB image, channel-major (CHW), values in [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, float fill = 0.0f);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return kChannels; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  float at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }

  std::span<float> plane(int c) { return {data_.data() + c * pixels(), pixels()}; }
  std::span<const float> plane(int c) const { return {data_.data() + c * pixels(), pixels()}; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  void clamp01();

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Per-pixel class ids; kIgnore marks unlabeled pixels.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, std::uint8_t fill = 0);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }

  std::uint8_t& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// One object instance: a boolean mask over the image grid plus its class.
struct InstanceMask {
  int class_id = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> mask;  // 0/1, row-major

  bool at(int y, int x) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t area() const;

  friend bool operator==(const InstanceMask&, const InstanceMask&) = default;
};

struct Sample {
  Image image;
  LabelMap label;
  std::vector<InstanceMask> instances;
  std::string domain_tag;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Throws DataError if image/label/instance dimensions disagree or an instance
/// mask covers pixels not labeled with its class.
void validate_sample(const Sample& s);

Image resize_bilinear(const Image& src, int height, int width);
Image crop(const Image& src, int y0, int x0, int height, int width);
LabelMap crop(const LabelMap& src, int y0, int x0, int height, int width);
Image hflip(const Image& src);
LabelMap hflip(const LabelMap& src);
InstanceMask hflip(const InstanceMask& src);

/// Quantize to multiples of 1/255 exactly as an 8-bit round trip would.
void quantize_8bit(Image& img);

std::uint8_t to_byte(float v);
inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

}  // namespace dgseg
