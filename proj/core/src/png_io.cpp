#include "dgseg/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "dgseg/error.hpp"

namespace dgseg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path) : path_(path), file_(open_file(path, "rb")) {
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
      throw DataError("not a PNG file: " + path.string());
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info_ = png_ ? png_create_info_struct(png_) : nullptr;
    if (!png_ || !info_) throw DataError("libpng init failed");
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  // setjmp must live in the frame that calls libpng, so callers pass a body.
  template <class Fn>
  void run(Fn&& fn) {
    if (setjmp(png_jmpbuf(png_))) throw DataError("corrupt PNG: " + path_.string());
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
    png_read_info(png_, info_);
    fn(png_, info_);
  }

 private:
  std::filesystem::path path_;
  FilePtr file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

std::vector<std::uint8_t> read_rows(png_structp png, png_infop info, int height, std::size_t rowbytes) {
  std::vector<std::uint8_t> buf(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buf.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  (void)info;
  return buf;
}

class PngWriter {
 public:
  explicit PngWriter(const std::filesystem::path& path) : path_(path), file_(open_file(path, "wb")) {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info_ = png_ ? png_create_info_struct(png_) : nullptr;
    if (!png_ || !info_) throw DataError("libpng init failed");
  }
  ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
  PngWriter(const PngWriter&) = delete;
  PngWriter& operator=(const PngWriter&) = delete;

  template <class Fn>
  void run(int height, int width, int color_type, const std::vector<std::uint8_t>& buf,
           std::size_t rowbytes, Fn&& extra) {
    if (setjmp(png_jmpbuf(png_))) throw DataError("failed writing PNG: " + path_.string());
    png_init_io(png_, file_.get());
    png_set_IHDR(png_, info_, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    extra(png_, info_);
    png_write_info(png_, info_);
    std::vector<png_const_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = buf.data() + rowbytes * y;
    for (int y = 0; y < height; ++y) png_write_row(png_, rows[y]);
    png_write_end(png_, nullptr);
  }

 private:
  std::filesystem::path path_;
  FilePtr file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

Image read_png_rgb(const std::filesystem::path& path) {
  PngReader reader(path);
  Image out;
  reader.run([&](png_structp png, png_infop info) {
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
      png_set_gray_to_rgb(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<std::size_t>(width) * 3) throw DataError("unsupported PNG layout: " + path.string());
    auto buf = read_rows(png, info, height, rowbytes);
    out = Image(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) out.at(c, y, x) = from_byte(buf[rowbytes * y + 3 * x + c]);
  });
  return out;
}

LabelMap read_png_index(const std::filesystem::path& path) {
  PngReader reader(path);
  LabelMap out;
  reader.run([&](png_structp png, png_infop info) {
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_PALETTE)
      throw DataError("label PNG must be single-channel: " + path.string());
    if (depth == 16) throw DataError("16-bit label PNG not supported: " + path.string());
    if (depth < 8) png_set_packing(png);
    png_read_update_info(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    auto buf = read_rows(png, info, height, rowbytes);
    out = LabelMap(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(y, x) = buf[rowbytes * y + x];
  });
  return out;
}

void write_png_rgb(const std::filesystem::path& path, const Image& img) {
  const std::size_t rowbytes = static_cast<std::size_t>(img.width()) * 3;
  std::vector<std::uint8_t> buf(rowbytes * img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) buf[rowbytes * y + 3 * x + c] = to_byte(img.at(c, y, x));
  PngWriter w(path);
  w.run(img.height(), img.width(), PNG_COLOR_TYPE_RGB, buf, rowbytes, [](png_structp, png_infop) {});
}

void write_png_gray(const std::filesystem::path& path, const LabelMap& map) {
  std::vector<std::uint8_t> buf(map.data().begin(), map.data().end());
  PngWriter w(path);
  w.run(map.height(), map.width(), PNG_COLOR_TYPE_GRAY, buf, static_cast<std::size_t>(map.width()),
        [](png_structp, png_infop) {});
}

void write_png_palette(const std::filesystem::path& path, const LabelMap& map,
                       std::span<const std::array<std::uint8_t, 3>> palette) {
  if (palette.empty() || palette.size() > 256) throw Error("palette must have 1..256 entries");
  std::vector<png_color> colors(palette.size());
  for (std::size_t i = 0; i < palette.size(); ++i) colors[i] = {palette[i][0], palette[i][1], palette[i][2]};
  std::vector<std::uint8_t> buf(map.data().begin(), map.data().end());
  for (auto& v : buf)
    if (v >= palette.size()) v = static_cast<std::uint8_t>(palette.size() - 1);
  PngWriter w(path);
  w.run(map.height(), map.width(), PNG_COLOR_TYPE_PALETTE, buf, static_cast<std::size_t>(map.width()),
        [&](png_structp png, png_infop info) {
          png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
        });
}

std::array<int, 2> png_dimensions(const std::filesystem::path& path) {
  PngReader reader(path);
  std::array<int, 2> dims{};
  reader.run([&](png_structp png, png_infop info) {
    dims = {static_cast<int>(png_get_image_height(png, info)), static_cast<int>(png_get_image_width(png, info))};
  });
  return dims;
}

}  // namespace dgseg
