#include "dgseg/image.hpp"

#include <algorithm>
#include <cmath>

#include "dgseg/error.hpp"

namespace dgseg {

Image::Image(int height, int width, float fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(kChannels) * height * width, fill) {
  if (height < 0 || width < 0) throw Error("Image: negative dimensions");
}

void Image::clamp01() {
  for (auto& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

LabelMap::LabelMap(int height, int width, std::uint8_t fill)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {
  if (height < 0 || width < 0) throw Error("LabelMap: negative dimensions");
}

std::size_t InstanceMask::area() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void validate_sample(const Sample& s) {
  if (s.image.height() != s.label.height() || s.image.width() != s.label.width())
    throw DataError("sample: image " + std::to_string(s.image.height()) + "x" +
                    std::to_string(s.image.width()) + " does not match label " +
                    std::to_string(s.label.height()) + "x" + std::to_string(s.label.width()));
  for (const auto& inst : s.instances) {
    if (inst.height != s.label.height() || inst.width != s.label.width() ||
        inst.mask.size() != s.label.pixels())
      throw DataError("sample: instance mask dimension mismatch");
    bool any = false;
    for (std::size_t i = 0; i < inst.mask.size(); ++i) {
      if (!inst.mask[i]) continue;
      any = true;
      if (s.label.data()[i] != inst.class_id)
        throw DataError("sample: instance of class " + std::to_string(inst.class_id) +
                        " covers a pixel labeled " + std::to_string(s.label.data()[i]));
    }
    if (!any) throw DataError("sample: empty instance mask");
  }
}

Image resize_bilinear(const Image& src, int height, int width) {
  if (src.height() == height && src.width() == width) return src;
  Image out(height, width);
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int y = 0; y < height; ++y) {
    double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    int y0 = std::min(static_cast<int>(fy), src.height() - 1);
    int y1 = std::min(y0 + 1, src.height() - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      int x0 = std::min(static_cast<int>(fx), src.width() - 1);
      int x1 = std::min(x0 + 1, src.width() - 1);
      double wx = fx - x0;
      for (int c = 0; c < Image::kChannels; ++c) {
        double top = src.at(c, y0, x0) * (1 - wx) + src.at(c, y0, x1) * wx;
        double bot = src.at(c, y1, x0) * (1 - wx) + src.at(c, y1, x1) * wx;
        out.at(c, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Image crop(const Image& src, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > src.height() || x0 + width > src.width())
    throw Error("crop: window outside image");
  Image out(height, width);
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = src.at(c, y0 + y, x0 + x);
  return out;
}

LabelMap crop(const LabelMap& src, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > src.height() || x0 + width > src.width())
    throw Error("crop: window outside label map");
  LabelMap out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.at(y, x) = src.at(y0 + y, x0 + x);
  return out;
}

Image hflip(const Image& src) {
  Image out(src.height(), src.width());
  const int w = src.width();
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < src.height(); ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = src.at(c, y, w - 1 - x);
  return out;
}

LabelMap hflip(const LabelMap& src) {
  LabelMap out(src.height(), src.width());
  const int w = src.width();
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = src.at(y, w - 1 - x);
  return out;
}

InstanceMask hflip(const InstanceMask& src) {
  InstanceMask out = src;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      out.mask[static_cast<std::size_t>(y) * src.width + x] =
          src.mask[static_cast<std::size_t>(y) * src.width + (src.width - 1 - x)];
  return out;
}

std::uint8_t to_byte(float v) {
  // nearbyint honours the default round-half-to-even mode.
  float scaled = std::clamp(v, 0.0f, 1.0f) * 255.0f;
  return static_cast<std::uint8_t>(std::nearbyint(scaled));
}

void quantize_8bit(Image& img) {
  for (auto& v : img.data()) v = from_byte(to_byte(v));
}

}  // namespace dgseg
