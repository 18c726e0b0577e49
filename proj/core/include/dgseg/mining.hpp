#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dgseg/image.hpp"
#include "dgseg/nn/tensor.hpp"
#include "dgseg/rng.hpp"
#include "dgseg/style_bank.hpp"

namespace dgseg {

enum class MiningPolicy { kAdversarial, kRandom };

std::string to_string(MiningPolicy p);
MiningPolicy parse_mining_policy(const std::string& s);

/// Read-only feature extractor, N x 3 x H x W -> N x D x h x w. Must not
/// mutate any shared state; it is called from several workers at once.
using Encoder = std::function<nn::Tensor(const nn::Tensor&)>;

/// Supplies the stylization of image `index` by a style; lets callers cache them.
using StylizedProvider = std::function<Image(std::size_t index, int style_id)>;

struct MiningResult {
  int chosen_style = 0;
  /// One entry per bank style, in bank order.
  std::vector<double> distances;
  MiningPolicy policy = MiningPolicy::kAdversarial;
};

/// Mean absolute elementwise difference. Throws on shape mismatch.
double feature_distance(const nn::Tensor& a, const nn::Tensor& b);

/// Per image: encode the source and every stylization, record the L1 feature
/// distances and pick the argmax (ties to the lowest style id), or draw a
/// style uniformly from `rng` under the random policy.
std::vector<MiningResult> mine_adversarial_styles(std::span<const Image> batch, const StyleBank& bank,
                                                  const Encoder& encoder, MiningPolicy policy, Rng& rng,
                                                  int workers = 1, const StylizedProvider& provider = {});

/// One JSON object per line: image id, policy, chosen style, distance table.
std::string mining_report_jsonl(std::span<const MiningResult> results, std::span<const std::string> image_ids,
                                const StyleBank& bank);

}  // namespace dgseg
