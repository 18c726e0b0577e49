#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "dgseg/augment.hpp"
#include "dgseg/dataset.hpp"
#include "dgseg/losses.hpp"
#include "dgseg/metrics.hpp"
#include "dgseg/mining.hpp"
#include "dgseg/model.hpp"
#include "dgseg/style_bank.hpp"

namespace dgseg {

struct TrainConfig {
  int iterations = 2000;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;

  /// Produce a stylized counterpart of every source sample.
  bool use_stylization = true;
  MiningPolicy mining_policy = MiningPolicy::kAdversarial;
  /// Re-snapshot the encoder at each epoch (otherwise keep the initial one).
  bool refresh_snapshot = true;
  int mining_batch = 12;
  /// Side of the random square crop used for mining; larger images are cropped.
  int mining_crop = 512;

  bool style_mix = true;
  /// Stylized variants mixed per sample (the mined one plus random others).
  int style_pool = 3;
  bool flip_jitter = true;
  AugConfig aug;

  /// Loss streams. Disabling the stylized stream leaves source-only training.
  bool source_stream = true;
  bool stylized_stream = true;

  LossWeights weights;
  bool supcon_mean_of_logs = false;
  bool supcon_mean_reduction = false;
  CosineOptions cosine;
  int per_class_cap = 64;

  /// 0 keeps native resolution.
  int resize_height = 0;
  int resize_width = 0;

  std::uint64_t seed = 0;
  /// Checkpoint cadence in iterations; 0 writes only at the end.
  int checkpoint_every = 0;
  /// Validation cadence in iterations (when a validation set is given).
  int validate_every = 500;
  int workers = 1;
  /// Stylization cache capacity in images; the cache is cleared when full.
  std::size_t cache_limit = 8192;
};

void validate(const TrainConfig& cfg);

struct TrainOutputs {
  std::filesystem::path dir;
  const DatasetManifest* validation = nullptr;
  /// Continue from dir/train_state.bin and dir/last.ckpt when present.
  bool resume = false;
  /// Called after every iteration with (iteration, components, total).
  std::function<void(int, const LossTotal&)> on_iteration;
};

struct TrainResult {
  int iterations = 0;
  /// Mean classification loss over the first and last 50 iterations.
  double first_ce = 0.0;
  double last_ce = 0.0;
  std::optional<double> best_val_miou;
};

/// Memoizes stylized versions of the (possibly resized) training images. Safe for
/// concurrent use.
class StylizationCache {
 public:
  StylizationCache(const StyleBank& bank, std::size_t limit) : bank_(bank), limit_(limit) {}
  Image get(std::size_t index, int style_id, const Image& source);
  std::size_t size() const;

 private:
  const StyleBank& bank_;
  std::size_t limit_;
  mutable std::mutex mu_;
  std::map<std::pair<std::size_t, int>, Image> cache_;
};

/// Sample order for an epoch: a seeded permutation of [0, n).
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n);

/// Seed of a named per-iteration random stream.
std::uint64_t iteration_seed(std::uint64_t seed, int iteration, const char* stream);

/// Applies the configured resize rule (bilinear image, nearest label,
/// instances re-extracted from the resized label).
Sample prepare_sample(const Sample& s, const TrainConfig& cfg);

/// Runs the training loop. Files written under outputs.dir: metrics.tsv,
/// last.ckpt, train_state.bin and, with validation, best.ckpt.
TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest, const StyleBank* bank, SegModel& model,
                  const TrainOutputs& outputs);

}  // namespace dgseg
