#include "dgseg/mining.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "dgseg/error.hpp"
#include "dgseg/parallel.hpp"

namespace dgseg {

std::string to_string(MiningPolicy p) { return p == MiningPolicy::kAdversarial ? "adversarial" : "random"; }

MiningPolicy parse_mining_policy(const std::string& s) {
  if (s == "adversarial") return MiningPolicy::kAdversarial;
  if (s == "random") return MiningPolicy::kRandom;
  throw ConfigError("unknown mining policy '" + s + "' (expected adversarial or random)");
}

double feature_distance(const nn::Tensor& a, const nn::Tensor& b) {
  if (!a.same_shape(b))
    throw Error("feature_distance: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  if (a.size() == 0) throw Error("feature_distance: empty feature batch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
  return s / static_cast<double>(a.size());
}

std::vector<MiningResult> mine_adversarial_styles(std::span<const Image> batch, const StyleBank& bank,
                                                  const Encoder& encoder, MiningPolicy policy, Rng& rng,
                                                  int workers, const StylizedProvider& provider) {
  if (bank.size() == 0) throw Error("mining: style bank is empty");
  const auto& styles = bank.styles();
  const std::size_t a = styles.size();
  std::vector<MiningResult> out(batch.size());
  parallel_for(batch.size(), static_cast<std::size_t>(std::max(1, workers)), [&](std::size_t i) {
    const Image& src = batch[i];
    std::vector<nn::Tensor> inputs(a + 1);
    auto pack = [](const Image& img) {
      nn::Tensor t(1, 3, img.height(), img.width());
      std::copy(img.data().begin(), img.data().end(), t.data());
      return t;
    };
    inputs[0] = pack(src);
    for (std::size_t k = 0; k < a; ++k) {
      const Image sty = provider ? provider(i, styles[k].style_id) : bank.stylize(styles[k].style_id, src);
      if (sty.height() != src.height() || sty.width() != src.width())
        throw Error("mining: stylization changed image dimensions");
      inputs[k + 1] = pack(sty);
    }
    const nn::Tensor feats = encoder(nn::Tensor::stack(inputs));
    const nn::Tensor f0 = feats.slice_batch(0);
    MiningResult r;
    r.policy = policy;
    r.distances.resize(a);
    for (std::size_t k = 0; k < a; ++k) r.distances[k] = feature_distance(f0, feats.slice_batch(static_cast<int>(k + 1)));
    out[i] = std::move(r);
  });
  for (auto& r : out) {
    if (policy == MiningPolicy::kRandom) {
      // Draws happen serially in image order so the stream is schedule-free.
      r.chosen_style = styles[rng.uniform_int(a)].style_id;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < a; ++k) {
      const bool better = r.distances[k] > r.distances[best] ||
                          (r.distances[k] == r.distances[best] && styles[k].style_id < styles[best].style_id);
      if (better) best = k;
    }
    r.chosen_style = styles[best].style_id;
  }
  return out;
}

std::string mining_report_jsonl(std::span<const MiningResult> results, std::span<const std::string> image_ids,
                                const StyleBank& bank) {
  std::string out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    nlohmann::json dist = nlohmann::json::object();
    for (std::size_t k = 0; k < results[i].distances.size(); ++k)
      dist[std::to_string(bank.styles()[k].style_id)] = results[i].distances[k];
    nlohmann::json j{{"image", i < image_ids.size() ? image_ids[i] : std::to_string(i)},
                     {"policy", to_string(results[i].policy)},
                     {"chosen_style", results[i].chosen_style},
                     {"distances", dist}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace dgseg
