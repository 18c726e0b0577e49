#include "dgseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dgseg/dataset.hpp"
#include "dgseg/error.hpp"

namespace dgseg {

void validate(const AugConfig& cfg) {
  for (double p : {cfg.cutmix_prob, cfg.copy_paste_prob, cfg.flip_prob})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
  if (cfg.brightness < 0 || cfg.contrast < 0 || cfg.saturation < 0)
    throw ConfigError("jitter strengths must be >= 0");
  if (!(cfg.box_alpha > 0)) throw ConfigError("cut-box alpha must be > 0");
  if (cfg.min_instances < 0 || cfg.max_instances < cfg.min_instances)
    throw ConfigError("instance count range must satisfy 0 <= min <= max");
}

namespace {

// Marsaglia-Tsang; shape < 1 is boosted with a uniform power.
double sample_gamma(Rng& rng, double shape) {
  if (shape < 1.0) {
    const double u = rng.uniform();
    return sample_gamma(rng, shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

void check_same_size(const Sample& a, const Sample& b, const char* what) {
  if (a.image.height() != b.image.height() || a.image.width() != b.image.width() ||
      a.label.height() != b.label.height() || a.label.width() != b.label.width())
    throw Error(std::string(what) + ": samples differ in size");
}

std::vector<InstanceMask> reextract(const LabelMap& label, const std::set<int>& things) {
  if (things.empty()) return {};
  return extract_instances(label, things);
}

}  // namespace

double sample_beta(Rng& rng, double alpha, double beta) {
  if (alpha == 1.0 && beta == 1.0) return rng.uniform();
  const double x = sample_gamma(rng, alpha), y = sample_gamma(rng, beta);
  return x / (x + y);
}

CutBox sample_cut_box(int height, int width, double alpha, Rng& rng) {
  const double r = sample_beta(rng, alpha, alpha);
  const double s = std::sqrt(r);
  CutBox b;
  b.w = std::clamp(static_cast<int>(std::lround(width * s)), 0, width);
  b.h = std::clamp(static_cast<int>(std::lround(height * s)), 0, height);
  b.x = rng.uniform_int(0, width - b.w);
  b.y = rng.uniform_int(0, height - b.h);
  return b;
}

std::vector<int> thing_classes_of(const Sample& s) {
  std::set<int> c;
  for (const auto& m : s.instances) c.insert(m.class_id);
  return {c.begin(), c.end()};
}

Sample cut_mix(const Sample& a, const Sample& b, const CutBox& box) {
  check_same_size(a, b, "cut_mix");
  const int h = a.image.height(), w = a.image.width();
  if (box.w < 0 || box.h < 0 || box.x < 0 || box.y < 0 || box.x + box.w > w || box.y + box.h > h)
    throw Error("cut_mix: box lies outside the image");
  Sample out = a;
  if (box.w == 0 || box.h == 0) return out;
  for (int c = 0; c < 3; ++c)
    for (int y = box.y; y < box.y + box.h; ++y)
      for (int x = box.x; x < box.x + box.w; ++x) out.image.at(c, y, x) = b.image.at(c, y, x);
  for (int y = box.y; y < box.y + box.h; ++y)
    for (int x = box.x; x < box.x + box.w; ++x) out.label.at(y, x) = b.label.at(y, x);
  std::set<int> things;
  for (int c : thing_classes_of(a)) things.insert(c);
  for (int c : thing_classes_of(b)) things.insert(c);
  out.instances = reextract(out.label, things);
  return out;
}

Sample copy_paste(const Sample& dst, const Sample& src, std::span<const InstanceMask> instances) {
  check_same_size(dst, src, "copy_paste");
  Sample out = dst;
  if (instances.empty()) return out;
  const int h = dst.image.height(), w = dst.image.width();
  std::set<int> things;
  for (int c : thing_classes_of(dst)) things.insert(c);
  for (const auto& m : instances) {
    if (m.height != h || m.width != w)
      throw Error("copy_paste: mask " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                  " does not match image " + std::to_string(h) + "x" + std::to_string(w));
    things.insert(m.class_id);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!m.at(y, x)) continue;
        for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = src.image.at(c, y, x);
        out.label.at(y, x) = static_cast<std::uint8_t>(m.class_id);
      }
  }
  out.instances = reextract(out.label, things);
  return out;
}

MixResult style_mix(std::span<const Sample> pool, Rng& rng, const AugConfig& cfg) {
  if (pool.empty()) throw Error("style_mix: empty pool");
  if (pool.size() > 255) throw Error("style_mix: pool larger than 255 members");
  for (const auto& s : pool) check_same_size(pool[0], s, "style_mix");
  const int n = static_cast<int>(pool.size());
  const int h = pool[0].image.height(), w = pool[0].image.width();
  const int base = n == 1 ? 0 : static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
  MixResult r{pool[base], std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, static_cast<std::uint8_t>(base))};
  if (n == 1) return r;

  // Uniform draw over members other than the base.
  auto other = [&] {
    int k = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - 1)));
    return k >= base ? k + 1 : k;
  };

  if (rng.bernoulli(cfg.cutmix_prob)) {
    const int j = other();
    const CutBox box = sample_cut_box(h, w, cfg.box_alpha, rng);
    r.sample = cut_mix(r.sample, pool[j], box);
    for (int y = box.y; y < box.y + box.h; ++y)
      for (int x = box.x; x < box.x + box.w; ++x) r.provenance[static_cast<std::size_t>(y) * w + x] = j;
  }
  if (rng.bernoulli(cfg.copy_paste_prob)) {
    const int count = rng.uniform_int(cfg.min_instances, cfg.max_instances);
    for (int t = 0; t < count; ++t) {
      const int j = other();
      const auto& donor = pool[j];
      if (donor.instances.empty()) continue;
      const auto& m = donor.instances[rng.uniform_int(donor.instances.size())];
      r.sample = copy_paste(r.sample, donor, std::span<const InstanceMask>(&m, 1));
      for (std::size_t p = 0; p < m.mask.size(); ++p)
        if (m.mask[p]) r.provenance[p] = static_cast<std::uint8_t>(j);
    }
  }
  return r;
}

Sample flip_and_jitter(const Sample& s, Rng& rng, const AugConfig& cfg) {
  Sample out = s;
  if (rng.bernoulli(cfg.flip_prob)) {
    out.image = hflip(s.image);
    out.label = hflip(s.label);
    for (auto& m : out.instances) m = hflip(m);
  }
  const std::size_t np = out.image.pixels();
  auto plane = [&](int c) { return out.image.plane(c); };
  bool touched = false;
  if (cfg.brightness > 0) {
    const float f = static_cast<float>(rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness));
    for (auto& v : out.image.data()) v *= f;
    touched = true;
  }
  if (cfg.contrast > 0) {
    const float f = static_cast<float>(rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast));
    double mean = 0.0;
    for (std::size_t p = 0; p < np; ++p)
      mean += 0.299 * plane(0)[p] + 0.587 * plane(1)[p] + 0.114 * plane(2)[p];
    const float m = static_cast<float>(mean / static_cast<double>(np));
    for (auto& v : out.image.data()) v = (v - m) * f + m;
    touched = true;
  }
  if (cfg.saturation > 0) {
    const float f = static_cast<float>(rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation));
    for (std::size_t p = 0; p < np; ++p) {
      const float g = 0.299f * plane(0)[p] + 0.587f * plane(1)[p] + 0.114f * plane(2)[p];
      for (int c = 0; c < 3; ++c) plane(c)[p] = g + (plane(c)[p] - g) * f;
    }
    touched = true;
  }
  if (touched) out.image.clamp01();
  return out;
}

}  // namespace dgseg
