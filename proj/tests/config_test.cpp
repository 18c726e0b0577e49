#include <gtest/gtest.h>

#include <fstream>

#include "dgseg/config.hpp"
#include "dgseg/dataset.hpp"
#include "dgseg/error.hpp"
#include "test_util.hpp"

namespace dgseg {
namespace {

using nlohmann::json;

TEST(Config, DefaultsRoundTrip) {
  const RunConfig d;
  const json j = to_json(d);
  EXPECT_EQ(to_json(run_config_from_json(j)), j);
  EXPECT_DOUBLE_EQ(d.train.learning_rate, 1e-4);
  EXPECT_EQ(j.at("train").at("mining_policy"), "adversarial");
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    run_config_from_json(json::parse(R"({"train": {"iteratons": 5}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.iteratons"), std::string::npos);
  }
  EXPECT_THROW(run_config_from_json(json::parse(R"({"bogus": 1})")), ConfigError);
}

TEST(Config, WrongTypeIsNamed) {
  try {
    run_config_from_json(json::parse(R"({"model": {"feature_dim": "wide"}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.feature_dim"), std::string::npos);
  }
  EXPECT_THROW(run_config_from_json(json::parse(R"({"train": {"mining_policy": "greedy"}})")), ConfigError);
}

TEST(Config, OverridesParseJsonOrString) {
  json doc = json::object();
  apply_override(doc, "train.iterations=25");
  apply_override(doc, "dataset.root=/data/toy");
  apply_override(doc, "loss.cosine_absolute=true");
  apply_override(doc, "train.mining_policy=random");
  const RunConfig c = run_config_from_json(doc);
  EXPECT_EQ(c.train.iterations, 25);
  EXPECT_EQ(c.dataset.root, "/data/toy");
  EXPECT_TRUE(c.train.cosine.absolute);
  EXPECT_EQ(c.train.mining_policy, MiningPolicy::kRandom);
  EXPECT_THROW(apply_override(doc, "train.nope=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "train=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "no_equals"), ConfigError);
}

TEST(Config, LoadFileThenOverridesThenValidate) {
  testing::TempDir dir("cfg");
  std::ofstream(dir / "c.json") << R"({"train": {"iterations": 10, "learning_rate": 0.001}})";
  const RunConfig c = load_run_config(dir / "c.json", {"train.iterations=3"});
  EXPECT_EQ(c.train.iterations, 3);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-3);
  EXPECT_THROW(load_run_config(dir / "c.json", {"train.iterations=-1"}), ConfigError);
  EXPECT_THROW(load_run_config(dir / "missing.json", {}), ConfigError);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_run_config(dir / "bad.json", {}), ConfigError);
}

TEST(Config, SeedPropagatesToComponents) {
  RunConfig a, b;
  apply_seed(a, 7);
  apply_seed(b, 7);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(a.seed, 7u);
  EXPECT_NE(a.model.seed, a.train.seed);
  RunConfig c;
  apply_seed(c, 8);
  EXPECT_NE(c.model.seed, a.model.seed);
}

TEST(Config, ShippedConfigsLoad) {
  const std::filesystem::path dir = DGSEG_CONFIG_DIR;
  const RunConfig full = load_run_config(dir / "toy_full.json", {});
  EXPECT_DOUBLE_EQ(full.train.learning_rate, 1e-3);
  EXPECT_TRUE(full.train.use_stylization);
  const RunConfig base = load_run_config(dir / "toy_baseline.json", {});
  EXPECT_FALSE(base.train.use_stylization);
  EXPECT_EQ(base.train.weights.supcon, 0.0);
  EXPECT_EQ(base.train.weights.cosine, 0.0);
  EXPECT_EQ(load_run_config(dir / "gtav_to_cityscapes.json", {}).model.num_classes, 19);
  EXPECT_EQ(load_remap_table(dir / "cityscapes_34to19.json"), cityscapes_remap_table());
}

}  // namespace
}  // namespace dgseg
