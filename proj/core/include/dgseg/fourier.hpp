#pragma once

#include <complex>
#include <span>
#include <vector>

#include "dgseg/image.hpp"

namespace dgseg {

struct FrequencySwapConfig {
  /// Half-width of the centred low-frequency square, as a fraction of
  /// min(H, W). Valid range [0, 0.5].
  double beta = 0.01;
  /// Replace phase instead of amplitude inside the square.
  bool swap_phase = false;
};

void validate(const FrequencySwapConfig& cfg);

/// Integer half-width b = floor(beta * min(H, W)). The swapped region is every
/// frequency (ky, kx), in signed form, with |ky| < b and |kx| < b; b = 0 is
/// empty and b = 1 is the DC bin alone.
int swap_half_width(double beta, int height, int width);

/// Forward 2-D DFT (unnormalized) of a real h x w plane, full complex output.
std::vector<std::complex<double>> dft2(std::span<const double> plane, int height, int width);

/// Inverse 2-D DFT including the 1/(h*w) factor; returns the real part.
std::vector<double> idft2_real(std::span<const std::complex<double>> spectrum, int height, int width);

/// Per channel: transform the source, replace its amplitude (or phase) inside
/// the low-frequency square by the style's, keep everything else, invert,
/// clamp to [0, 1]. The style is bilinearly resized to the source size first.
Image stylize_frequency(const Image& source, const Image& style, const FrequencySwapConfig& cfg);

}  // namespace dgseg
