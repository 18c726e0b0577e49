#include "dgseg/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>

#include "dgseg/error.hpp"

namespace dgseg {

namespace {

// FFTW planning is not thread-safe; execution on a private plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

ComplexBuffer alloc_complex(std::size_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (!p) throw Error("fftw_malloc failed");
  return ComplexBuffer(p);
}

void transform(fftw_complex* in, fftw_complex* out, int h, int w, int sign) {
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(h, w, in, out, sign, FFTW_ESTIMATE);
  }
  if (!plan) throw Error("fftw plan creation failed");
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
}

int signed_freq(int k, int n) { return k <= n / 2 ? k : k - n; }

}  // namespace

void validate(const FrequencySwapConfig& cfg) {
  if (!(cfg.beta >= 0.0 && cfg.beta <= 0.5)) throw ConfigError("frequency swap: beta must be in [0, 0.5]");
}

int swap_half_width(double beta, int height, int width) {
  return static_cast<int>(std::floor(beta * std::min(height, width)));
}

std::vector<std::complex<double>> dft2(std::span<const double> plane, int height, int width) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (plane.size() != n) throw Error("dft2: plane size mismatch");
  auto in = alloc_complex(n);
  auto out = alloc_complex(n);
  for (std::size_t i = 0; i < n; ++i) {
    in[i][0] = plane[i];
    in[i][1] = 0.0;
  }
  transform(in.get(), out.get(), height, width, FFTW_FORWARD);
  std::vector<std::complex<double>> result(n);
  for (std::size_t i = 0; i < n; ++i) result[i] = {out[i][0], out[i][1]};
  return result;
}

std::vector<double> idft2_real(std::span<const std::complex<double>> spectrum, int height, int width) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (spectrum.size() != n) throw Error("idft2: spectrum size mismatch");
  auto in = alloc_complex(n);
  auto out = alloc_complex(n);
  for (std::size_t i = 0; i < n; ++i) {
    in[i][0] = spectrum[i].real();
    in[i][1] = spectrum[i].imag();
  }
  transform(in.get(), out.get(), height, width, FFTW_BACKWARD);
  std::vector<double> result(n);
  for (std::size_t i = 0; i < n; ++i) result[i] = out[i][0] / static_cast<double>(n);
  return result;
}

Image stylize_frequency(const Image& source, const Image& style, const FrequencySwapConfig& cfg) {
  validate(cfg);
  const int h = source.height();
  const int w = source.width();
  const int b = swap_half_width(cfg.beta, h, w);
  if (b == 0) return source;
  const Image resized = resize_bilinear(style, h, w);
  Image out(h, w);
  std::vector<double> plane(static_cast<std::size_t>(h) * w);
  for (int c = 0; c < Image::kChannels; ++c) {
    auto to_double = [&](const Image& img) {
      auto p = img.plane(c);
      std::copy(p.begin(), p.end(), plane.begin());
      return dft2(plane, h, w);
    };
    auto src = to_double(source);
    const auto sty = to_double(resized);
    for (int ky = 0; ky < h; ++ky) {
      if (std::abs(signed_freq(ky, h)) >= b) continue;
      for (int kx = 0; kx < w; ++kx) {
        if (std::abs(signed_freq(kx, w)) >= b) continue;
        const std::size_t i = static_cast<std::size_t>(ky) * w + kx;
        if (cfg.swap_phase)
          src[i] = std::polar(std::abs(src[i]), std::arg(sty[i]));
        else
          src[i] = std::polar(std::abs(sty[i]), std::arg(src[i]));
      }
    }
    const auto back = idft2_real(src, h, w);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < back.size(); ++i) dst[i] = static_cast<float>(std::clamp(back[i], 0.0, 1.0));
  }
  return out;
}

}  // namespace dgseg
