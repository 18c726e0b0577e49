#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "dgseg/error.hpp"
#include "dgseg/fourier.hpp"
#include "dgseg/png_io.hpp"
#include "dgseg/style_bank.hpp"
#include "dgseg/stylizer.hpp"
#include "dgseg/toy.hpp"
#include "test_util.hpp"

namespace dgseg {
namespace {

using testing::random_image;
using testing::TempDir;

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b.data()[i]));
  return m;
}

TEST(Fourier, HalfWidth) {
  EXPECT_EQ(swap_half_width(0.0, 64, 48), 0);
  EXPECT_EQ(swap_half_width(0.01, 64, 64), 0);
  EXPECT_EQ(swap_half_width(0.02, 64, 64), 1);
  EXPECT_EQ(swap_half_width(0.5, 10, 7), 3);
}

TEST(Fourier, MatchesNaiveDft) {
  Rng rng(1);
  const int h = 5, w = 6;
  std::vector<double> plane(h * w);
  for (auto& v : plane) v = rng.uniform();
  const auto spec = dft2(plane, h, w);
  for (int ky = 0; ky < h; ++ky)
    for (int kx = 0; kx < w; ++kx) {
      std::complex<double> s = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          s += plane[y * w + x] * std::polar(1.0, -2 * std::numbers::pi * (double(ky) * y / h + double(kx) * x / w));
      EXPECT_NEAR(std::abs(spec[ky * w + kx] - s), 0.0, 1e-9);
    }
  const auto back = idft2_real(spec, h, w);
  for (int i = 0; i < h * w; ++i) EXPECT_NEAR(back[i], plane[i], 1e-12);
}

TEST(Fourier, Parseval) {
  Rng rng(2);
  for (auto [h, w] : {std::pair{8, 8}, std::pair{7, 12}, std::pair{33, 20}}) {
    std::vector<double> plane(h * w);
    for (auto& v : plane) v = rng.uniform();
    double e_img = 0, e_spec = 0;
    for (double v : plane) e_img += v * v;
    for (const auto& c : dft2(plane, h, w)) e_spec += std::norm(c);
    EXPECT_NEAR(e_img, e_spec / (h * w), 1e-5 * e_img);
  }
}

TEST(FrequencySwap, ZeroBetaIsIdentity) {
  Rng rng(3);
  const Image src = random_image(17, 23, rng);
  const Image sty = random_image(9, 30, rng);
  EXPECT_LE(max_abs_diff(stylize_frequency(src, sty, {.beta = 0.0}), src), 1e-6);
}

TEST(FrequencySwap, SelfStyleIsIdentity) {
  Rng rng(4);
  const Image src = random_image(16, 20, rng);
  for (double beta : {0.05, 0.2, 0.5}) EXPECT_LE(max_abs_diff(stylize_frequency(src, src, {.beta = beta}), src), 1e-6);
}

TEST(FrequencySwap, ConstantDcSwap) {
  const Image src(8, 8, 0.2f), sty(8, 8, 0.8f);
  ASSERT_EQ(swap_half_width(0.15, 8, 8), 1);
  const Image out = stylize_frequency(src, sty, {.beta = 0.15});
  for (float v : out.data()) EXPECT_NEAR(v, 0.8, 1e-6);
}

TEST(FrequencySwap, ShapeRangeAndPurity) {
  Rng rng(5);
  for (auto [h, w] : {std::pair{13, 7}, std::pair{32, 48}}) {
    const Image src = random_image(h, w, rng);
    const Image sty = random_image(20, 20, rng);
    for (bool phase : {false, true}) {
      const FrequencySwapConfig cfg{.beta = 0.3, .swap_phase = phase};
      const Image a = stylize_frequency(src, sty, cfg);
      EXPECT_EQ(a.height(), h);
      EXPECT_EQ(a.width(), w);
      for (float v : a.data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
      EXPECT_EQ(a, stylize_frequency(src, sty, cfg));
    }
  }
}

TEST(FrequencySwap, ConfigValidation) {
  EXPECT_THROW(validate(FrequencySwapConfig{.beta = -0.1}), ConfigError);
  EXPECT_THROW(validate(FrequencySwapConfig{.beta = 0.6}), ConfigError);
}

TEST(NeuralStylizer, ParameterBudget) {
  const std::size_t n = stylizer_parameter_count(StylizerArch{});
  EXPECT_EQ(n, 63747u);
  EXPECT_GE(n, 57114u);
  EXPECT_LE(n, 69805u);
  NeuralStylizer net(StylizerArch{}, 1);
  EXPECT_EQ(net.export_params().parameter_count(), n);
  const StylizerArch small{8, 8, 8, 1};
  EXPECT_EQ(NeuralStylizer(small, 1).export_params().parameter_count(), stylizer_parameter_count(small));
}

TEST(NeuralStylizer, ApplyKeepsShapeAndRange) {
  Rng rng(6);
  NeuralStylizer net(StylizerArch{8, 8, 8, 1}, 2);
  const Image src = random_image(13, 10, rng);
  const Image out = net.apply(src);
  EXPECT_EQ(out.height(), 13);
  EXPECT_EQ(out.width(), 10);
  for (float v : out.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(out, net.apply(src));
}

TEST(NeuralStylizer, ParamsRoundTrip) {
  NeuralStylizer a(StylizerArch{8, 8, 8, 1}, 3);
  const NeuralStylizer b(a.export_params());
  Rng rng(7);
  const Image src = random_image(8, 8, rng);
  EXPECT_EQ(a.apply(src), b.apply(src));
}

TEST(NeuralStylizer, TrainingReducesLoss) {
  Rng rng(8);
  const std::vector<Image> content{random_image(32, 32, rng), random_image(32, 32, rng)};
  const Image style = testing::constant_image(32, 32, 0.9f);
  StylizerTrainReport rep;
  const auto params =
      train_neural_stylizer(style, content, {.steps = 40, .learning_rate = 3e-3, .crop_size = 16}, {8, 8, 8, 1}, &rep);
  EXPECT_EQ(params.parameter_count(), stylizer_parameter_count({8, 8, 8, 1}));
  EXPECT_LT(rep.final_loss, rep.initial_loss);
  const auto again =
      train_neural_stylizer(style, content, {.steps = 40, .learning_rate = 3e-3, .crop_size = 16}, {8, 8, 8, 1});
  EXPECT_EQ(params, again);
}

std::vector<StyleRef> fake_refs(int paintings, int textures) {
  std::vector<StyleRef> out;
  for (int i = 0; i < paintings; ++i) out.push_back({-1, StyleKind::kPainting, "p/" + std::to_string(100 + i)});
  for (int i = 0; i < textures; ++i) out.push_back({-1, StyleKind::kTexture, "t/" + std::to_string(100 + i)});
  return out;
}

TEST(SelectStyles, BalancedAndIndexed) {
  const auto active = select_styles(fake_refs(15, 15), 20, 25, 9);
  ASSERT_EQ(active.size(), 20u);
  int p = 0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    EXPECT_EQ(active[i].style_id, static_cast<int>(i));
    p += active[i].kind == StyleKind::kPainting;
  }
  EXPECT_EQ(p, 10);
  EXPECT_EQ(active, select_styles(fake_refs(15, 15), 20, 25, 9));
}

TEST(SelectStyles, TopsUpFromOtherKind) {
  const auto active = select_styles(fake_refs(2, 10), 6, 12, 1);
  int p = 0;
  for (const auto& r : active) p += r.kind == StyleKind::kPainting;
  EXPECT_EQ(active.size(), 6u);
  EXPECT_EQ(p, 2);
  EXPECT_THROW(select_styles(fake_refs(1, 1), 3, 3, 0), ConfigError);
}

TEST(StyleBank, ConfigValidation) {
  StyleBankConfig c;
  c.pool_size = 10;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.size = 0;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_EQ(parse_stylizer_kind("fda"), StylizerKind::kFrequencySwap);
  EXPECT_THROW(parse_stylizer_kind("cyclegan"), ConfigError);
}

TEST(StyleBank, CustomBankChecksDimensions) {
  const StyleBank bank = StyleBank::custom({{0, StyleKind::kPainting, ""}},
                                           {[](const Image&) { return Image(2, 2, 0.5f); }});
  EXPECT_THROW(bank.stylize(0, Image(3, 3)), Error);
  EXPECT_THROW(bank.stylize(5, Image(2, 2)), Error);
}

TEST(StyleBank, FrequencyBankBuildSaveLoad) {
  TempDir dir("bank");
  generate_style_images(dir / "styles", 3, 3, 24, 5);
  StyleBankConfig cfg;
  cfg.kind = StylizerKind::kFrequencySwap;
  cfg.size = 4;
  cfg.pool_size = 5;
  cfg.frequency.beta = 0.1;
  const StyleBank bank = build_style_bank(dir / "styles", cfg, {});
  ASSERT_EQ(bank.size(), 4);
  save_style_bank(dir / "saved", bank);
  const StyleBank loaded = load_style_bank(dir / "saved");
  EXPECT_EQ(loaded.styles().size(), 4u);
  EXPECT_EQ(loaded.kind(), StylizerKind::kFrequencySwap);
  Rng rng(1);
  const Image src = random_image(24, 24, rng);
  for (int a = 0; a < 4; ++a) EXPECT_EQ(bank.stylize(a, src), loaded.stylize(a, src));
}

TEST(StyleBank, NeuralBankBuildSaveLoad) {
  TempDir dir("nbank");
  generate_style_images(dir / "styles", 2, 2, 16, 6);
  StyleBankConfig cfg;
  cfg.size = 2;
  cfg.pool_size = 3;
  cfg.arch = {8, 8, 8, 1};
  cfg.train.steps = 3;
  cfg.train.crop_size = 16;
  Rng rng(2);
  const std::vector<Image> content{random_image(16, 16, rng)};
  const StyleBank bank = build_style_bank(dir / "styles", cfg, content);
  save_style_bank(dir / "saved", bank);
  const StyleBank loaded = load_style_bank(dir / "saved");
  ASSERT_EQ(loaded.size(), 2);
  EXPECT_EQ(loaded.neural_params(1), bank.neural_params(1));
  const Image src = random_image(12, 20, rng);
  EXPECT_EQ(bank.stylize(1, src), loaded.stylize(1, src));
  EXPECT_THROW(build_style_bank(dir / "styles", cfg, {}), ConfigError);
}

TEST(StyleBank, LoadRejectsWrongVersion) {
  TempDir dir("vbank");
  const StyleBank bank = StyleBank::frequency({{0, StyleKind::kTexture, "x.png"}}, {Image(4, 4, 0.3f)}, {});
  save_style_bank(dir.path(), bank);
  auto doc = nlohmann::json::parse(testing::read_file(dir / "bank.json"));
  doc["version"] = kStyleBankVersion + 1;
  std::ofstream(dir / "bank.json") << doc.dump();
  EXPECT_THROW(load_style_bank(dir.path()), DataError);
}

}  // namespace
}  // namespace dgseg
