#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dgseg/image.hpp"

namespace dgseg {

/// Reads any 8-bit PNG and converts it to RGB in [0, 1].
Image read_png_rgb(const std::filesystem::path& path);

/// Reads a single-channel 8-bit PNG (gray or palette indices) without any
/// colour conversion.
LabelMap read_png_index(const std::filesystem::path& path);

void write_png_rgb(const std::filesystem::path& path, const Image& img);
void write_png_gray(const std::filesystem::path& path, const LabelMap& map);

/// Palette PNG whose pixel values are indices into `palette`.
void write_png_palette(const std::filesystem::path& path, const LabelMap& map,
                       std::span<const std::array<std::uint8_t, 3>> palette);

/// Reads just the header: {height, width}.
std::array<int, 2> png_dimensions(const std::filesystem::path& path);

}  // namespace dgseg
