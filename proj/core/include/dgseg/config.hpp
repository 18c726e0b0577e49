#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgseg/model.hpp"
#include "dgseg/style_bank.hpp"
#include "dgseg/toy.hpp"
#include "dgseg/train.hpp"

namespace dgseg {

struct DatasetConfig {
  std::filesystem::path root;
  std::string format = "toy";
  std::string split = "train";
  /// Held-out split for validation during training; empty disables it.
  std::string val_split;
  /// Evaluation set (defaults to root/split when empty).
  std::filesystem::path eval_root;
  std::string eval_split = "val";
  /// Cityscapes-like data: train classes after remap and the remap table file.
  int num_classes = 19;
  std::filesystem::path remap;
  std::optional<std::vector<int>> eval_subset;
};

struct StylesConfig {
  /// Directory with paintings/ and textures/ subdirectories.
  std::filesystem::path dir;
  /// Saved bank directory (written by build-bank, read by train/mine).
  std::filesystem::path bank_dir;
  /// Training images used as stylizer content.
  int content_images = 16;
  StyleBankConfig bank;
};

struct ToyGenConfig {
  ToySceneSpec spec;
  int count = 128;
  std::string split = "train";
  /// Style images generated alongside the dataset (0 disables).
  int style_paintings = 10;
  int style_textures = 10;
  int style_size = 64;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  DatasetConfig dataset;
  StylesConfig styles;
  ModelConfig model;
  TrainConfig train;
  ToyGenConfig toy;
  /// Checkpoint for mine/eval/augment-preview; empty uses a fresh model.
  std::filesystem::path checkpoint;
  /// Images processed by mine and augment-preview.
  int preview_count = 8;
};

/// Full configuration as JSON, including every accepted key.
nlohmann::json to_json(const RunConfig& cfg);

/// Overlays `patch` onto the defaults. Unknown keys and type mismatches throw
/// ConfigError naming the dotted key.
RunConfig run_config_from_json(const nlohmann::json& patch);

/// Parses "section.key=value"; the value is read as JSON when it parses,
/// otherwise as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Loads the file (if non-empty), applies overrides in order, validates.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Propagates the global seed to every component seed.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

void validate(const RunConfig& cfg);

}  // namespace dgseg
