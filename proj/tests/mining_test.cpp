#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dgseg/error.hpp"
#include "dgseg/mining.hpp"
#include "dgseg/model.hpp"
#include "test_util.hpp"

namespace dgseg {
namespace {

using nn::Tensor;

Tensor identity_encoder(const Tensor& x) { return x; }

// 2x2 average pooling followed by a fixed channel mix; a cheap non-trivial encoder.
Tensor pooled_encoder(const Tensor& x) {
  Tensor out(x.n(), 2, x.h() / 2, x.w() / 2);
  for (int n = 0; n < x.n(); ++n)
    for (int y = 0; y < out.h(); ++y)
      for (int xx = 0; xx < out.w(); ++xx) {
        float c[3];
        for (int k = 0; k < 3; ++k)
          c[k] = 0.25f * (x.at(n, k, 2 * y, 2 * xx) + x.at(n, k, 2 * y + 1, 2 * xx) + x.at(n, k, 2 * y, 2 * xx + 1) +
                          x.at(n, k, 2 * y + 1, 2 * xx + 1));
        out.at(n, 0, y, xx) = c[0] - 0.5f * c[1];
        out.at(n, 1, y, xx) = c[2] * c[2];
      }
  return out;
}

StyleBank offset_bank(const std::vector<float>& offsets) {
  std::vector<StyleRef> refs;
  std::vector<StyleBank::StyleFn> fns;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    refs.push_back({static_cast<int>(k), StyleKind::kTexture, ""});
    const float d = offsets[k];
    fns.push_back([d](const Image& img) {
      Image out = img;
      for (auto& v : out.data()) v -= d;
      return out;
    });
  }
  return StyleBank::custom(refs, fns);
}

StyleBank gain_bank(const std::vector<float>& gains) {
  std::vector<StyleRef> refs;
  std::vector<StyleBank::StyleFn> fns;
  for (std::size_t k = 0; k < gains.size(); ++k) {
    refs.push_back({static_cast<int>(k), k % 2 ? StyleKind::kTexture : StyleKind::kPainting, ""});
    const float g = gains[k];
    fns.push_back([g](const Image& img) {
      Image out = img;
      for (auto& v : out.data()) v *= g;
      return out;
    });
  }
  return StyleBank::custom(refs, fns);
}

TEST(FeatureDistance, HandExample) {
  Tensor a(1, 1, 1, 2), b(1, 1, 1, 2);
  a.data()[0] = 1;
  a.data()[1] = 2;
  b.data()[0] = 0;
  b.data()[1] = 4;
  EXPECT_DOUBLE_EQ(feature_distance(a, b), 1.5);
  EXPECT_THROW(feature_distance(a, Tensor(1, 1, 2, 1)), Error);
}

TEST(Mining, DarkeningPicksStrongerDarkening) {
  const StyleBank bank = offset_bank({0.1f, 0.5f});
  const std::vector<Image> batch{Image(4, 4, 0.8f)};
  Rng rng(1);
  const auto r = mine_adversarial_styles(batch, bank, identity_encoder, MiningPolicy::kAdversarial, rng);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].chosen_style, 1);
  EXPECT_NEAR(r[0].distances[0], 0.1, 1e-6);
  EXPECT_NEAR(r[0].distances[1], 0.5, 1e-6);
}

TEST(Mining, TieGoesToLowestId) {
  const StyleBank bank = offset_bank({0.1f, 0.3f, 0.3f, 0.3f});
  Rng data(2);
  const std::vector<Image> batch{testing::random_image(4, 4, data)};
  Rng rng(1);
  EXPECT_EQ(mine_adversarial_styles(batch, bank, identity_encoder, MiningPolicy::kAdversarial, rng)[0].chosen_style, 1);
}

TEST(Mining, SingleStyleBank) {
  const StyleBank bank = gain_bank({0.7f});
  Rng data(3);
  std::vector<Image> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(testing::random_image(6, 6, data));
  for (auto policy : {MiningPolicy::kAdversarial, MiningPolicy::kRandom}) {
    Rng rng(4);
    for (const auto& r : mine_adversarial_styles(batch, bank, pooled_encoder, policy, rng)) EXPECT_EQ(r.chosen_style, 0);
  }
}

TEST(Mining, ArgmaxAgainstNaiveLoop) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int a = 1 + static_cast<int>(rng.uniform_int(std::uint64_t{20}));
    std::vector<float> gains(a);
    for (auto& g : gains) g = static_cast<float>(rng.uniform(0.2, 1.8));
    const StyleBank bank = gain_bank(gains);
    std::vector<Image> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(testing::random_image(8, 6, rng));
    Rng pr(1);
    const auto res = mine_adversarial_styles(batch, bank, pooled_encoder, MiningPolicy::kAdversarial, pr, 2);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Tensor f0 = pooled_encoder(to_tensor(batch[i]));
      int best = -1;
      double best_d = -1;
      for (int k = 0; k < a; ++k) {
        const Tensor fk = pooled_encoder(to_tensor(bank.stylize(k, batch[i])));
        double s = 0;
        for (std::size_t j = 0; j < f0.size(); ++j) s += std::abs(double(f0.data()[j]) - fk.data()[j]);
        s /= static_cast<double>(f0.size());
        EXPECT_NEAR(res[i].distances[k], s, 1e-12);
        if (s > best_d) {
          best_d = s;
          best = k;
        }
      }
      EXPECT_EQ(res[i].chosen_style, best);
      for (double d : res[i].distances) EXPECT_GE(res[i].distances[res[i].chosen_style], d);
    }
  }
}

TEST(Mining, DeterministicAcrossWorkerCounts) {
  Rng data(6);
  std::vector<float> gains;
  for (int k = 0; k < 7; ++k) gains.push_back(static_cast<float>(data.uniform(0.3, 1.7)));
  const StyleBank bank = gain_bank(gains);
  std::vector<Image> batch;
  for (int i = 0; i < 6; ++i) batch.push_back(testing::random_image(8, 8, data));
  for (auto policy : {MiningPolicy::kAdversarial, MiningPolicy::kRandom}) {
    Rng r1(9), r2(9);
    const auto a = mine_adversarial_styles(batch, bank, pooled_encoder, policy, r1, 1);
    const auto b = mine_adversarial_styles(batch, bank, pooled_encoder, policy, r2, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].chosen_style, b[i].chosen_style);
      EXPECT_EQ(a[i].distances, b[i].distances);
    }
  }
}

TEST(Mining, MonotoneInGainOnIdentityEncoder) {
  Rng data(7);
  Image img(6, 6);
  for (auto& v : img.data()) v = static_cast<float>(data.uniform(0.1, 0.5));
  const std::vector<float> gains{1.0f, 0.9f, 1.2f, 0.6f, 1.5f, 0.3f};
  const StyleBank bank = gain_bank(gains);
  Rng rng(1);
  const auto r = mine_adversarial_styles(std::span<const Image>(&img, 1), bank, identity_encoder,
                                         MiningPolicy::kAdversarial, rng)[0];
  for (std::size_t i = 0; i < gains.size(); ++i)
    for (std::size_t j = 0; j < gains.size(); ++j)
      if (std::abs(gains[i] - 1) < std::abs(gains[j] - 1)) EXPECT_LT(r.distances[i], r.distances[j]);
  EXPECT_EQ(r.distances[0], 0.0);
  EXPECT_EQ(r.chosen_style, 5);
}

TEST(Mining, FrozenEncoderIsNotMutated) {
  ModelConfig mc;
  mc.feature_dim = 16;
  mc.seed = 3;
  const SegModel model(mc);
  const auto before = model.state_hash();
  const StyleBank bank = gain_bank({0.5f, 1.3f, 0.8f});
  Rng data(8);
  std::vector<Image> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(testing::random_image(16, 16, data));
  const Encoder enc = [&model](const Tensor& x) { return model.encode_frozen(x); };
  Rng r1(2), r2(2);
  const auto a = mine_adversarial_styles(batch, bank, enc, MiningPolicy::kAdversarial, r1, 3);
  const auto b = mine_adversarial_styles(batch, bank, enc, MiningPolicy::kAdversarial, r2, 1);
  EXPECT_EQ(model.state_hash(), before);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].distances, b[i].distances);
}

TEST(Mining, RandomPolicyCoversBank) {
  const StyleBank bank = gain_bank({0.5f, 0.6f, 0.7f, 0.8f});
  std::vector<Image> batch(40, Image(2, 2, 0.5f));
  Rng rng(3);
  const auto res = mine_adversarial_styles(batch, bank, identity_encoder, MiningPolicy::kRandom, rng);
  std::vector<int> seen(4, 0);
  for (const auto& r : res) {
    EXPECT_EQ(r.policy, MiningPolicy::kRandom);
    ++seen.at(r.chosen_style);
  }
  for (int c : seen) EXPECT_GT(c, 0);
}

TEST(Mining, ProviderOverridesBank) {
  const StyleBank bank = gain_bank({1.0f, 1.0f});
  const std::vector<Image> batch{Image(2, 2, 0.5f)};
  Rng rng(1);
  const StylizedProvider provider = [](std::size_t, int style_id) { return Image(2, 2, style_id == 1 ? 0.0f : 0.4f); };
  const auto r = mine_adversarial_styles(batch, bank, identity_encoder, MiningPolicy::kAdversarial, rng, 1, provider);
  EXPECT_EQ(r[0].chosen_style, 1);
}

TEST(Mining, ReportHasOneRecordPerImage) {
  const StyleBank bank = offset_bank({0.1f, 0.5f});
  const std::vector<Image> batch{Image(2, 2, 0.8f), Image(2, 2, 0.6f)};
  Rng rng(1);
  const auto res = mine_adversarial_styles(batch, bank, identity_encoder, MiningPolicy::kAdversarial, rng);
  const std::vector<std::string> ids{"a", "b"};
  std::istringstream in(mining_report_jsonl(res, ids, bank));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("image"), ids[n]);
    EXPECT_EQ(j.at("chosen_style"), 1);
    EXPECT_EQ(j.at("distances").size(), 2u);
    EXPECT_EQ(j.at("policy"), "adversarial");
    ++n;
  }
  EXPECT_EQ(n, 2);
  EXPECT_EQ(parse_mining_policy("random"), MiningPolicy::kRandom);
  EXPECT_THROW(parse_mining_policy("greedy"), ConfigError);
}

}  // namespace
}  // namespace dgseg
