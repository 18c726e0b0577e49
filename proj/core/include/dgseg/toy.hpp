#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dgseg/dataset.hpp"

namespace dgseg {

enum class ToyVariant { kSource, kTextureShift, kNight };

std::string to_string(ToyVariant v);
ToyVariant parse_toy_variant(const std::string& s);

/// Procedural scene description. Class 0 is background; classes 1..C-1 are
/// drawn from {circle, square, triangle, bar, blob} in that order.
struct ToySceneSpec {
  int height = 64;
  int width = 64;
  int min_shapes = 3;
  int max_shapes = 6;
  int num_classes = 6;
  /// Texture variants per class in each domain's texture library.
  int texture_library_size = 4;
  ToyVariant variant = ToyVariant::kSource;
  /// Luminance multiplier for the night variant, in (0, 1].
  double night_gain = 0.35;
  /// Std-dev of additive Gaussian sensor noise for the night variant.
  double night_noise = 0.04;
};

/// Throws ConfigError when the spec violates its invariants.
void validate(const ToySceneSpec& spec);

std::vector<std::string> toy_class_names(int num_classes);

/// Deterministic in (spec, seed). For a given (seed, index) all variants share
/// geometry (labels and instances); they differ only in texture/illumination.
/// Images are quantized to multiples of 1/255 so an 8-bit round trip is exact.
DatasetManifest generate_toy_dataset(const ToySceneSpec& spec, int count, std::uint64_t seed);

/// Single sample of the above, for callers that do not need a manifest.
Sample generate_toy_sample(const ToySceneSpec& spec, int index, std::uint64_t seed);

/// Writes procedural style sources to <out>/paintings/*.png and
/// <out>/textures/*.png: smooth colour fields and periodic patterns.
void generate_style_images(const std::filesystem::path& out, int paintings, int textures, int size,
                           std::uint64_t seed);

}  // namespace dgseg
