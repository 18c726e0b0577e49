#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dgseg/image.hpp"
#include "dgseg/rng.hpp"

namespace dgseg {

struct CutBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  friend bool operator==(const CutBox&, const CutBox&) = default;
};

struct AugConfig {
  double cutmix_prob = 0.5;
  double copy_paste_prob = 0.5;
  double flip_prob = 0.5;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  /// Symmetric Beta(alpha, alpha) for the cut-box area ratio.
  double box_alpha = 1.0;
  int min_instances = 1;
  int max_instances = 3;
  /// Mix stylizations of different source images (labels are transplanted
  /// with their pixels) instead of stylizations of one source.
  bool cross_source = false;
};

void validate(const AugConfig& cfg);

/// Samples from Beta(alpha, beta) using two gamma draws.
double sample_beta(Rng& rng, double alpha, double beta);

/// Box with area ratio ~ Beta(alpha, alpha) and the image's aspect ratio, placed uniformly.
CutBox sample_cut_box(int height, int width, double alpha, Rng& rng);

/// `a` outside the box, `b` inside it (image and label). Instances are
/// re-extracted from the merged label for the thing classes of either input.
Sample cut_mix(const Sample& a, const Sample& b, const CutBox& box);

/// Pastes each mask in order: image from `src`, label set to the mask class.
Sample copy_paste(const Sample& dst, const Sample& src, std::span<const InstanceMask> instances);

struct MixResult {
  Sample sample;
  /// Per pixel, the pool index whose image and label pixel was taken.
  std::vector<std::uint8_t> provenance;
};

/// Starts from a random pool member, optionally cut-mixes a second member in,
/// then optionally pastes instances taken from the other members.
MixResult style_mix(std::span<const Sample> pool, Rng& rng, const AugConfig& cfg);

/// Horizontal flip (image, label, instances) with probability flip_prob, then
/// brightness/contrast/saturation jitter on the image only, clamped to [0, 1].
Sample flip_and_jitter(const Sample& s, Rng& rng, const AugConfig& cfg);

/// Label classes of the instance masks in `s`.
std::vector<int> thing_classes_of(const Sample& s);

}  // namespace dgseg
