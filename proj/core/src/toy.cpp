#include "dgseg/toy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "dgseg/error.hpp"
#include "dgseg/png_io.hpp"
#include "dgseg/rng.hpp"

namespace dgseg {

namespace fs = std::filesystem;

std::string to_string(ToyVariant v) {
  switch (v) {
    case ToyVariant::kSource: return "source";
    case ToyVariant::kTextureShift: return "texture-shift";
    case ToyVariant::kNight: return "night";
  }
  return "source";
}

ToyVariant parse_toy_variant(const std::string& s) {
  if (s == "source") return ToyVariant::kSource;
  if (s == "texture-shift") return ToyVariant::kTextureShift;
  if (s == "night") return ToyVariant::kNight;
  throw ConfigError("unknown toy variant '" + s + "' (expected source, texture-shift or night)");
}

void validate(const ToySceneSpec& spec) {
  if (spec.height < 8 || spec.width < 8) throw ConfigError("toy: canvas must be at least 8x8");
  if (spec.num_classes < 2 || spec.num_classes > 6) throw ConfigError("toy: num_classes must be in [2, 6]");
  if (spec.min_shapes < 0 || spec.max_shapes < spec.min_shapes)
    throw ConfigError("toy: need 0 <= min_shapes <= max_shapes");
  if (spec.texture_library_size < 1) throw ConfigError("toy: texture_library_size must be >= 1");
  if (!(spec.night_gain > 0.0 && spec.night_gain <= 1.0)) throw ConfigError("toy: night_gain must be in (0, 1]");
  if (spec.night_noise < 0.0) throw ConfigError("toy: night_noise must be >= 0");
}

std::vector<std::string> toy_class_names(int num_classes) {
  static const std::array<const char*, 6> names = {"background", "circle", "square", "triangle", "bar", "blob"};
  return {names.begin(), names.begin() + num_classes};
}

namespace {

enum : std::uint64_t { kGeometry = 1, kTexture = 2, kNoise = 3, kLibrary = 4 };

enum class ShapeKind { kCircle = 1, kSquare, kTriangle, kBar, kBlob };

struct Shape {
  int class_id;
  double cy, cx, r, angle;
  std::array<std::array<double, 3>, 3> lobes;  // blob: (dy, dx, radius)
};

bool inside(const Shape& s, double y, double x) {
  const double dy = y - s.cy;
  const double dx = x - s.cx;
  const double c = std::cos(s.angle);
  const double sn = std::sin(s.angle);
  const double u = c * dx + sn * dy;
  const double v = -sn * dx + c * dy;
  switch (static_cast<ShapeKind>(s.class_id)) {
    case ShapeKind::kCircle: return dx * dx + dy * dy <= s.r * s.r;
    case ShapeKind::kSquare: return std::abs(u) <= 0.8 * s.r && std::abs(v) <= 0.8 * s.r;
    case ShapeKind::kTriangle: {
      // Equilateral triangle with circumradius r, apex along +v.
      const double h = 1.5 * s.r;
      const double vv = v + 0.5 * s.r;
      if (vv < 0 || vv > h) return false;
      const double half = (h - vv) / std::sqrt(3.0);
      return std::abs(u) <= half;
    }
    case ShapeKind::kBar: return std::abs(u) <= 1.2 * s.r && std::abs(v) <= 0.3 * s.r;
    case ShapeKind::kBlob:
      for (const auto& l : s.lobes) {
        const double ly = dy - l[0];
        const double lx = dx - l[1];
        if (ly * ly + lx * lx <= l[2] * l[2]) return true;
      }
      return false;
  }
  return false;
}

struct Texture {
  std::array<double, 3> base;
  int pattern;  // 0 flat, 1 stripes, 2 checker, 3 noise
  double freq;
  double amp;
  double angle;
};

// Canonical class colours for the source domain.
constexpr std::array<std::array<double, 3>, 6> kSourceColors = {{
    {0.45, 0.50, 0.40},
    {0.85, 0.20, 0.20},
    {0.20, 0.30, 0.85},
    {0.85, 0.80, 0.20},
    {0.75, 0.25, 0.75},
    {0.20, 0.75, 0.75},
}};

Texture make_texture(std::uint64_t seed, bool shifted, int cls, int t, int num_classes) {
  Rng rng(derive_seed(seed, {kLibrary, shifted ? 1u : 0u, static_cast<std::uint64_t>(cls),
                             static_cast<std::uint64_t>(t)}));
  Texture tex;
  // The shifted domain hands every class another class's palette.
  const int palette = shifted ? (cls + 2) % num_classes : cls;
  for (int c = 0; c < 3; ++c)
    tex.base[c] = std::clamp(kSourceColors[palette][c] + rng.uniform(-0.08, 0.08), 0.05, 0.95);
  tex.pattern = static_cast<int>(rng.uniform_int(4));
  tex.freq = rng.uniform(0.06, 0.25);
  tex.amp = shifted ? rng.uniform(0.2, 0.45) : rng.uniform(0.05, 0.2);
  tex.angle = rng.uniform(0.0, std::numbers::pi);
  return tex;
}

double pattern_value(const Texture& tex, int y, int x, double phase, std::uint64_t noise_key) {
  switch (tex.pattern) {
    case 1: {
      const double t = x * std::cos(tex.angle) + y * std::sin(tex.angle);
      return std::sin(2 * std::numbers::pi * tex.freq * t + phase);
    }
    case 2: {
      const double a = std::sin(2 * std::numbers::pi * tex.freq * x + phase);
      const double b = std::sin(2 * std::numbers::pi * tex.freq * y + phase);
      return a * b >= 0 ? 1.0 : -1.0;
    }
    case 3: {
      const std::uint64_t h = mix64(noise_key ^ mix64((static_cast<std::uint64_t>(y) << 32) | static_cast<std::uint32_t>(x)));
      return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
    default: return 0.0;
  }
}

std::vector<Shape> make_geometry(const ToySceneSpec& spec, int index, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kGeometry, static_cast<std::uint64_t>(index)}));
  const int n = rng.uniform_int(spec.min_shapes, spec.max_shapes);
  const double scale = std::min(spec.height, spec.width);
  std::vector<Shape> shapes;
  if (spec.num_classes < 2) return shapes;
  for (int i = 0; i < n; ++i) {
    Shape s{};
    s.class_id = rng.uniform_int(1, spec.num_classes - 1);
    s.r = rng.uniform(0.10, 0.20) * scale;
    s.cy = rng.uniform(0.0, spec.height - 1.0);
    s.cx = rng.uniform(0.0, spec.width - 1.0);
    s.angle = rng.uniform(0.0, 2 * std::numbers::pi);
    for (auto& l : s.lobes) {
      const double a = rng.uniform(0.0, 2 * std::numbers::pi);
      l = {0.45 * s.r * std::sin(a), 0.45 * s.r * std::cos(a), rng.uniform(0.45, 0.7) * s.r};
    }
    shapes.push_back(s);
  }
  return shapes;
}

}  // namespace

Sample generate_toy_sample(const ToySceneSpec& spec, int index, std::uint64_t seed) {
  validate(spec);
  const int h = spec.height;
  const int w = spec.width;
  const auto shapes = make_geometry(spec, index, seed);

  Sample s;
  s.domain_tag = to_string(spec.variant);
  s.label = LabelMap(h, w, 0);
  std::vector<int> owner(static_cast<std::size_t>(h) * w, -1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (std::size_t k = 0; k < shapes.size(); ++k)
        if (inside(shapes[k], y + 0.5, x + 0.5)) {
          owner[static_cast<std::size_t>(y) * w + x] = static_cast<int>(k);
          s.label.at(y, x) = static_cast<std::uint8_t>(shapes[k].class_id);
        }

  for (std::size_t k = 0; k < shapes.size(); ++k) {
    InstanceMask m{shapes[k].class_id, h, w, std::vector<std::uint8_t>(owner.size(), 0)};
    for (std::size_t p = 0; p < owner.size(); ++p) m.mask[p] = owner[p] == static_cast<int>(k);
    if (m.area() >= static_cast<std::size_t>(kDefaultMinInstanceArea)) s.instances.push_back(std::move(m));
  }

  // Texture choices come from their own stream so they never perturb geometry.
  const bool shifted = spec.variant == ToyVariant::kTextureShift;
  Rng trng(derive_seed(seed, {kTexture, static_cast<std::uint64_t>(index)}));
  const double illumination = trng.uniform(0.85, 1.1);
  struct Painter {
    Texture tex;
    double phase;
    std::uint64_t noise_key;
  };
  std::vector<Painter> painters;
  auto pick = [&](int cls) {
    const int t = static_cast<int>(trng.uniform_int(static_cast<std::uint64_t>(spec.texture_library_size)));
    Painter p{make_texture(seed, shifted, cls, t, spec.num_classes), trng.uniform(0.0, 2 * std::numbers::pi),
              trng.next_u64()};
    return p;
  };
  const Painter background = pick(0);
  for (const auto& sh : shapes) painters.push_back(pick(sh.class_id));

  s.image = Image(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int k = owner[static_cast<std::size_t>(y) * w + x];
      const Painter& p = k < 0 ? background : painters[k];
      const double mod = 1.0 + p.tex.amp * pattern_value(p.tex, y, x, p.phase, p.noise_key);
      for (int c = 0; c < 3; ++c) s.image.at(c, y, x) = static_cast<float>(p.tex.base[c] * mod * illumination);
    }
  s.image.clamp01();
  quantize_8bit(s.image);

  if (spec.variant == ToyVariant::kNight) {
    Rng nrng(derive_seed(seed, {kNoise, static_cast<std::uint64_t>(index)}));
    for (auto& v : s.image.data()) {
      double out = v * spec.night_gain;
      if (spec.night_noise > 0) out += spec.night_noise * nrng.normal();
      v = static_cast<float>(out);
    }
    s.image.clamp01();
    quantize_8bit(s.image);
  }
  return s;
}

DatasetManifest generate_toy_dataset(const ToySceneSpec& spec, int count, std::uint64_t seed) {
  validate(spec);
  if (count < 1) throw ConfigError("toy: count must be >= 1");
  DatasetManifest m;
  m.num_classes = spec.num_classes;
  m.class_names = toy_class_names(spec.num_classes);
  for (int i = 0; i < count; ++i) {
    SampleRecord r;
    char id[16];
    std::snprintf(id, sizeof id, "%06d", i);
    r.id = id;
    r.domain_tag = to_string(spec.variant);
    r.data = std::make_shared<const Sample>(generate_toy_sample(spec, i, seed));
    m.records.push_back(std::move(r));
  }
  return m;
}

void generate_style_images(const fs::path& out, int paintings, int textures, int size, std::uint64_t seed) {
  if (paintings < 0 || textures < 0 || size < 8) throw ConfigError("style images: invalid counts or size");
  std::error_code ec;
  fs::create_directories(out / "paintings", ec);
  fs::create_directories(out / "textures", ec);
  if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());

  for (int i = 0; i < paintings; ++i) {
    Rng rng(derive_seed(seed, {11, static_cast<std::uint64_t>(i)}));
    const double brightness = rng.uniform(0.2, 1.0);
    std::array<double, 3> bg{rng.uniform(), rng.uniform(), rng.uniform()};
    struct Blob {
      double y, x, sigma;
      std::array<double, 3> color;
    };
    std::vector<Blob> blobs(6);
    for (auto& b : blobs) b = {rng.uniform(0, size), rng.uniform(0, size), rng.uniform(0.08, 0.3) * size,
                               {rng.uniform(), rng.uniform(), rng.uniform()}};
    Image img(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        std::array<double, 3> acc = bg;
        double wsum = 1.0;
        for (const auto& b : blobs) {
          const double d2 = (y - b.y) * (y - b.y) + (x - b.x) * (x - b.x);
          const double wgt = 4.0 * std::exp(-d2 / (2 * b.sigma * b.sigma));
          for (int c = 0; c < 3; ++c) acc[c] += wgt * b.color[c];
          wsum += wgt;
        }
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(brightness * acc[c] / wsum);
      }
    img.clamp01();
    char name[32];
    std::snprintf(name, sizeof name, "painting_%02d.png", i);
    write_png_rgb(out / "paintings" / name, img);
  }

  for (int i = 0; i < textures; ++i) {
    Rng rng(derive_seed(seed, {12, static_cast<std::uint64_t>(i)}));
    const double brightness = rng.uniform(0.2, 1.0);
    std::array<double, 3> a{rng.uniform(), rng.uniform(), rng.uniform()};
    std::array<double, 3> b{rng.uniform(), rng.uniform(), rng.uniform()};
    Texture tex{{0, 0, 0}, 1 + static_cast<int>(rng.uniform_int(3)), rng.uniform(0.05, 0.3), 1.0,
                rng.uniform(0.0, std::numbers::pi)};
    const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
    const std::uint64_t key = rng.next_u64();
    Image img(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double t = 0.5 * (1.0 + pattern_value(tex, y, x, phase, key));
        for (int c = 0; c < 3; ++c)
          img.at(c, y, x) = static_cast<float>(brightness * (a[c] * t + b[c] * (1 - t)));
      }
    img.clamp01();
    char name[32];
    std::snprintf(name, sizeof name, "texture_%02d.png", i);
    write_png_rgb(out / "textures" / name, img);
  }
}

}  // namespace dgseg
