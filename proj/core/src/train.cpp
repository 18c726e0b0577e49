#include "dgseg/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dgseg/error.hpp"
#include "dgseg/nn/adam.hpp"
#include "dgseg/nn/binary_io.hpp"
#include "dgseg/rng.hpp"

namespace dgseg {

namespace fs = std::filesystem;
using nn::Tensor;

void validate(const TrainConfig& cfg) {
  if (cfg.iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (!(cfg.learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
  if (!cfg.source_stream && !(cfg.stylized_stream && cfg.use_stylization))
    throw ConfigError("train: no active loss stream (enable source_stream or the stylized stream)");
  if (cfg.mining_batch < 1) throw ConfigError("train.mining_batch must be >= 1");
  if (cfg.mining_crop < 1) throw ConfigError("train.mining_crop must be >= 1");
  if (cfg.style_pool < 1) throw ConfigError("train.style_pool must be >= 1");
  if (cfg.per_class_cap < 1) throw ConfigError("train.per_class_cap must be >= 1");
  if (cfg.resize_height < 0 || cfg.resize_width < 0 || (cfg.resize_height == 0) != (cfg.resize_width == 0))
    throw ConfigError("train.resize_height and train.resize_width must both be 0 or both positive");
  if (cfg.checkpoint_every < 0 || cfg.validate_every < 0) throw ConfigError("train cadences must be >= 0");
  if (cfg.workers < 1) throw ConfigError("train.workers must be >= 1");
  validate(cfg.aug);
  validate(cfg.weights);
}

Image StylizationCache::get(std::size_t index, int style_id, const Image& source) {
  const auto key = std::make_pair(index, style_id);
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  Image out = bank_.stylize(style_id, source);
  std::lock_guard lock(mu_);
  // Stylization is a pure function, so dropping entries never changes results.
  if (cache_.size() >= limit_) cache_.clear();
  cache_.emplace(key, out);
  return out;
}

std::size_t StylizationCache::size() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {hash_name("epoch-order"), static_cast<std::uint64_t>(epoch)}));
  shuffle(order, rng);
  return order;
}

std::uint64_t iteration_seed(std::uint64_t seed, int iteration, const char* stream) {
  return derive_seed(seed, {hash_name("iteration"), static_cast<std::uint64_t>(iteration), hash_name(stream)});
}

Sample prepare_sample(const Sample& s, const TrainConfig& cfg) {
  if (cfg.resize_height == 0 ||
      (s.image.height() == cfg.resize_height && s.image.width() == cfg.resize_width))
    return s;
  Sample out;
  out.domain_tag = s.domain_tag;
  out.image = resize_bilinear(s.image, cfg.resize_height, cfg.resize_width);
  out.label = LabelMap(cfg.resize_height, cfg.resize_width);
  for (int y = 0; y < cfg.resize_height; ++y) {
    const int sy = std::min(s.label.height() - 1, static_cast<int>((y + 0.5) * s.label.height() / cfg.resize_height));
    for (int x = 0; x < cfg.resize_width; ++x) {
      const int sx = std::min(s.label.width() - 1, static_cast<int>((x + 0.5) * s.label.width() / cfg.resize_width));
      out.label.at(y, x) = s.label.at(sy, sx);
    }
  }
  std::set<int> things;
  for (const auto& m : s.instances) things.insert(m.class_id);
  if (!things.empty()) out.instances = extract_instances(out.label, things);
  return out;
}

namespace {

constexpr char kStateMagic[8] = {'D', 'G', 'T', 'R', 'S', 'T', 'A', 'T'};
constexpr std::uint32_t kStateVersion = 1;

void atomic_write(const fs::path& path, const std::function<void(const fs::path&)>& writer) {
  const fs::path tmp = path.string() + ".tmp";
  writer(tmp);
  fs::rename(tmp, path);
}

struct LoopState {
  int iteration = 0;  // completed iterations
  int mined_epoch = -1;
  std::vector<int> assignments;
  std::optional<double> best_val;
};

void save_state(const fs::path& path, const LoopState& st, const nn::Adam& adam) {
  atomic_write(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    out.write(kStateMagic, sizeof kStateMagic);
    nn::write_pod<std::uint32_t>(out, kStateVersion);
    nn::write_pod<std::int32_t>(out, st.iteration);
    nn::write_pod<std::int32_t>(out, st.mined_epoch);
    nn::write_pod<std::uint64_t>(out, st.assignments.size());
    for (int a : st.assignments) nn::write_pod<std::int32_t>(out, a);
    nn::write_pod<std::uint8_t>(out, st.best_val ? 1 : 0);
    nn::write_pod<double>(out, st.best_val.value_or(0.0));
    adam.save(out);
    if (!out) throw DataError("failed writing train state " + tmp.string());
  });
}

LoopState load_state(const fs::path& path, nn::Adam& adam) {
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  if (!in || !in.read(magic, 8) || !std::equal(magic, magic + 8, kStateMagic))
    throw DataError("not a train state file: " + path.string());
  if (nn::read_pod<std::uint32_t>(in) != kStateVersion) throw DataError("unsupported train state version");
  LoopState st;
  st.iteration = nn::read_pod<std::int32_t>(in);
  st.mined_epoch = nn::read_pod<std::int32_t>(in);
  st.assignments.resize(nn::read_pod<std::uint64_t>(in));
  for (auto& a : st.assignments) a = nn::read_pod<std::int32_t>(in);
  const bool has_best = nn::read_pod<std::uint8_t>(in) != 0;
  const double best = nn::read_pod<double>(in);
  if (has_best) st.best_val = best;
  adam.load(in);
  return st;
}

void copy_state(SegModel& dst, const SegModel& src) {
  auto d = dst.state();
  auto s = src.state();
  if (d.size() != s.size()) throw DataError("checkpoint does not match the model architecture");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d[i]->same_shape(*s[i])) throw DataError("checkpoint does not match the model architecture");
    *d[i] = *s[i];
  }
}

std::string metric_line(int iteration, const char* name, double value) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d\t%s\t%.9g\n", iteration, name, value);
  return buf;
}

// Keeps only records up to and including `upto`.
void truncate_metrics(const fs::path& path, int upto) {
  std::ifstream in(path);
  if (!in) return;
  std::string kept, line;
  while (std::getline(in, line)) {
    const int it = std::atoi(line.c_str());
    if (it <= upto) kept += line + "\n";
  }
  in.close();
  std::ofstream(path, std::ios::trunc) << kept;
}

std::pair<double, double> ce_windows(const fs::path& path, int window) {
  std::ifstream in(path);
  std::vector<double> ce;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string it, name, value;
    std::getline(ss, it, '\t');
    std::getline(ss, name, '\t');
    std::getline(ss, value, '\t');
    if (name == "ce") ce.push_back(std::stod(value));
  }
  if (ce.empty()) return {0.0, 0.0};
  const std::size_t w = std::min<std::size_t>(window, ce.size());
  const double first = std::accumulate(ce.begin(), ce.begin() + w, 0.0) / w;
  const double last = std::accumulate(ce.end() - w, ce.end(), 0.0) / w;
  return {first, last};
}

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const DatasetManifest& manifest, const StyleBank* bank, SegModel& model,
          const TrainOutputs& out)
      : cfg_(cfg), manifest_(manifest), bank_(bank), model_(model), out_(out),
        adam_(model.parameters(), {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8}),
        samples_(manifest.size()) {
    if (bank_) cache_.emplace(*bank_, cfg.cache_limit);
  }

  TrainResult run();

 private:
  bool needs_stylization() const { return cfg_.use_stylization && cfg_.stylized_stream; }
  const Sample& sample(std::size_t i);
  void mine_epoch(int epoch);
  Sample stylized_sample(std::size_t idx, Rng& rng);
  LossTotal step(int iteration, std::size_t idx);
  void checkpoint(const LoopState& st);

  const TrainConfig& cfg_;
  const DatasetManifest& manifest_;
  const StyleBank* bank_;
  SegModel& model_;
  const TrainOutputs& out_;
  nn::Adam adam_;
  std::vector<std::optional<Sample>> samples_;
  std::optional<StylizationCache> cache_;
  std::optional<SegModel> fixed_snapshot_;
  LoopState st_;
};

const Sample& Trainer::sample(std::size_t i) {
  if (!samples_[i]) samples_[i] = prepare_sample(load_sample(manifest_, i), cfg_);
  return *samples_[i];
}

void Trainer::mine_epoch(int epoch) {
  const std::size_t n = manifest_.size();
  st_.assignments.assign(n, 0);
  st_.mined_epoch = epoch;
  const SegModel snapshot = cfg_.refresh_snapshot ? model_ : *fixed_snapshot_;
  const Encoder encoder = [&snapshot](const Tensor& x) { return snapshot.encode_frozen(x); };
  const int stride = model_.config().output_stride;

  Rng crop_rng(derive_seed(cfg_.seed, {hash_name("mining-crop"), static_cast<std::uint64_t>(epoch)}));
  Rng policy_rng(derive_seed(cfg_.seed, {hash_name("mining-policy"), static_cast<std::uint64_t>(epoch)}));
  struct Box {
    int y, x, h, w;
  };
  std::vector<Box> boxes(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Image& img = sample(i).image;
    const int h = std::min(cfg_.mining_crop, img.height()) / stride * stride;
    const int w = std::min(cfg_.mining_crop, img.width()) / stride * stride;
    if (h == 0 || w == 0) throw DataError("training image smaller than the output stride");
    boxes[i] = {crop_rng.uniform_int(0, img.height() - h), crop_rng.uniform_int(0, img.width() - w), h, w};
  }

  std::string report;
  for (std::size_t start = 0; start < n; start += cfg_.mining_batch) {
    const std::size_t end = std::min(n, start + cfg_.mining_batch);
    std::vector<Image> crops;
    std::vector<std::string> ids;
    for (std::size_t i = start; i < end; ++i) {
      const Box& b = boxes[i];
      crops.push_back(crop(sample(i).image, b.y, b.x, b.h, b.w));
      ids.push_back(manifest_.records[i].id);
    }
    const StylizedProvider provider = [&](std::size_t k, int style_id) {
      const std::size_t i = start + k;
      const Box& b = boxes[i];
      return crop(cache_->get(i, style_id, sample(i).image), b.y, b.x, b.h, b.w);
    };
    const auto results =
        mine_adversarial_styles(crops, *bank_, encoder, cfg_.mining_policy, policy_rng, cfg_.workers, provider);
    for (std::size_t k = 0; k < results.size(); ++k) st_.assignments[start + k] = results[k].chosen_style;
    report += mining_report_jsonl(results, ids, *bank_);
  }
  if (!out_.dir.empty()) {
    char name[40];
    std::snprintf(name, sizeof name, "epoch_%04d.jsonl", epoch);
    fs::create_directories(out_.dir / "mining");
    std::ofstream(out_.dir / "mining" / name) << report;
  }
}

Sample Trainer::stylized_sample(std::size_t idx, Rng& rng) {
  const Sample& src = sample(idx);
  const int mined = st_.assignments[idx];
  auto styled = [&](std::size_t i, int style_id) {
    Sample s = sample(i);
    s.image = cache_->get(i, style_id, s.image);
    s.domain_tag = "stylized";
    return s;
  };
  if (!cfg_.style_mix || cfg_.style_pool <= 1) return styled(idx, mined);

  std::vector<Sample> pool{styled(idx, mined)};
  if (cfg_.aug.cross_source) {
    const std::size_t n = manifest_.size();
    for (int k = 1; k < cfg_.style_pool && n > 1; ++k) {
      std::size_t j = rng.uniform_int(n - 1);
      if (j >= idx) ++j;
      if (sample(j).image.height() != src.image.height() || sample(j).image.width() != src.image.width()) continue;
      pool.push_back(styled(j, st_.assignments[j]));
    }
  } else {
    std::vector<int> others;
    for (const auto& r : bank_->styles())
      if (r.style_id != mined) others.push_back(r.style_id);
    shuffle(others, rng);
    for (int k = 0; k + 1 < cfg_.style_pool && k < static_cast<int>(others.size()); ++k)
      pool.push_back(styled(idx, others[k]));
  }
  return style_mix(pool, rng, cfg_.aug).sample;
}

LossTotal Trainer::step(int iteration, std::size_t idx) {
  std::vector<Image> images;
  std::vector<LabelMap> labels;
  AugConfig jitter = cfg_.aug;
  if (!cfg_.flip_jitter) jitter.flip_prob = jitter.brightness = jitter.contrast = jitter.saturation = 0.0;

  if (cfg_.source_stream) {
    Rng rng(iteration_seed(cfg_.seed, iteration, "aug-source"));
    Sample s = flip_and_jitter(sample(idx), rng, jitter);
    images.push_back(std::move(s.image));
    labels.push_back(std::move(s.label));
  }
  if (needs_stylization()) {
    Rng mix_rng(iteration_seed(cfg_.seed, iteration, "style-mix"));
    Rng rng(iteration_seed(cfg_.seed, iteration, "aug-stylized"));
    Sample s = flip_and_jitter(stylized_sample(idx, mix_rng), rng, jitter);
    images.push_back(std::move(s.image));
    labels.push_back(std::move(s.label));
  }
  for (const auto& im : images)
    if (im.height() != images[0].height() || im.width() != images[0].width())
      throw DataError("training streams differ in size");

  const ForwardResult fr = model_.forward(to_tensor(images), Mode::kTrain);
  const int b = fr.logits.n();

  LossComponents comp;
  Tensor dlogits(fr.logits.n(), fr.logits.c(), fr.logits.h(), fr.logits.w());
  for (int k = 0; k < b; ++k) {
    Tensor g;
    comp.ce += classification_loss(fr.logits.slice_batch(k), std::span<const LabelMap>(&labels[k], 1), &g);
    std::copy(g.data(), g.data() + g.size(), dlogits.item_ptr(k));
  }

  Rng feat_rng(iteration_seed(cfg_.seed, iteration, "features"));
  const PixelFeatureSet set = sample_pixel_features(fr.features, labels, cfg_.per_class_cap, feat_rng,
                                                    model_.config().num_classes);
  Tensor dfeatures;
  std::vector<double> dz;
  const bool want_supcon = cfg_.weights.supcon > 0;
  const bool want_cosine = cfg_.weights.cosine > 0;
  if (!set.empty() && (want_supcon || want_cosine))
    dfeatures = Tensor(fr.features.n(), fr.features.c(), fr.features.h(), fr.features.w());
  if (!set.empty()) {
    const SupConOptions so{cfg_.weights.temperature, cfg_.supcon_mean_of_logs, cfg_.supcon_mean_reduction};
    if (want_supcon) {
      comp.supcon = supcon_loss_grad(set, so, dz);
      accumulate_feature_grad(set, dz, cfg_.weights.supcon, dfeatures);
    } else {
      comp.supcon = supcon_loss(set, so);
    }
    if (want_cosine) {
      comp.cosine = cosine_separation_loss_grad(set, cfg_.cosine, dz);
      accumulate_feature_grad(set, dz, cfg_.weights.cosine, dfeatures);
    } else {
      comp.cosine = cosine_separation_loss(set, class_centroids(set, cfg_.cosine.centroid_norm), cfg_.cosine);
    }
  }
  const LossTotal total = total_loss(comp, cfg_.weights);

  if (cfg_.weights.ce != 1.0)
    for (auto& v : dlogits.span()) v *= static_cast<float>(cfg_.weights.ce);
  adam_.zero_grad();
  model_.backward(dfeatures, dlogits);
  adam_.step();
  return total;
}

void Trainer::checkpoint(const LoopState& st) {
  atomic_write(out_.dir / "last.ckpt", [&](const fs::path& tmp) { save_checkpoint(tmp, model_); });
  save_state(out_.dir / "train_state.bin", st, adam_);
}

TrainResult Trainer::run() {
  validate(cfg_);
  validate_manifest(manifest_);
  if (manifest_.size() == 0) throw DataError("training manifest is empty");
  if (model_.config().num_classes != manifest_.num_classes)
    throw ConfigError("model has " + std::to_string(model_.config().num_classes) + " classes but the dataset has " +
                      std::to_string(manifest_.num_classes));
  if (needs_stylization() && (!bank_ || bank_->size() == 0))
    throw ConfigError("stylization is enabled but no style bank was provided");
  fs::create_directories(out_.dir);
  const fs::path metrics_path = out_.dir / "metrics.tsv";
  const fs::path state_path = out_.dir / "train_state.bin";

  if (out_.resume && fs::exists(state_path)) {
    copy_state(model_, load_checkpoint(out_.dir / "last.ckpt"));
    st_ = load_state(state_path, adam_);
    truncate_metrics(metrics_path, st_.iteration);
  } else {
    std::ofstream(metrics_path, std::ios::trunc);
  }
  if (needs_stylization() && !cfg_.refresh_snapshot) {
    const fs::path snap = out_.dir / "snapshot.ckpt";
    if (st_.iteration == 0 || !fs::exists(snap)) save_checkpoint(snap, model_);
    fixed_snapshot_.emplace(load_checkpoint(snap));
  }

  std::ofstream metrics(metrics_path, std::ios::app);
  const std::size_t n = manifest_.size();
  std::vector<std::size_t> order;
  int order_epoch = -1;
  const fs::path best_path = out_.dir / "best.ckpt";

  for (int it = st_.iteration; it < cfg_.iterations; ++it) {
    const int epoch = static_cast<int>(it / n);
    if (epoch != order_epoch) {
      order = epoch_order(cfg_.seed, epoch, n);
      order_epoch = epoch;
    }
    if (needs_stylization() && st_.mined_epoch != epoch) mine_epoch(epoch);

    LossTotal lt;
    try {
      lt = step(it, order[it % n]);
    } catch (const DivergenceError& e) {
      metrics.flush();
      throw DivergenceError(std::string(e.what()) + " at iteration " + std::to_string(it + 1) +
                            "; last good checkpoint kept in " + out_.dir.string());
    }
    const int done = it + 1;
    metrics << metric_line(done, "ce", lt.components.ce) << metric_line(done, "supcon", lt.components.supcon)
            << metric_line(done, "cosine", lt.components.cosine) << metric_line(done, "total", lt.total);
    st_.iteration = done;
    if (out_.on_iteration) out_.on_iteration(done, lt);

    if (out_.validation && cfg_.validate_every > 0 && done % cfg_.validate_every == 0) {
      const EvalReport rep = evaluate(model_, *out_.validation, cfg_.workers);
      metrics << metric_line(done, "val_miou", rep.miou);
      if (!st_.best_val || rep.miou > *st_.best_val) {
        st_.best_val = rep.miou;
        atomic_write(best_path, [&](const fs::path& tmp) { save_checkpoint(tmp, model_); });
      }
    }
    if (cfg_.checkpoint_every > 0 && done % cfg_.checkpoint_every == 0 && done != cfg_.iterations) {
      metrics.flush();
      checkpoint(st_);
    }
  }
  metrics.close();
  checkpoint(st_);

  TrainResult r;
  r.iterations = st_.iteration;
  std::tie(r.first_ce, r.last_ce) = ce_windows(metrics_path, 50);
  r.best_val_miou = st_.best_val;
  return r;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest, const StyleBank* bank, SegModel& model,
                  const TrainOutputs& outputs) {
  if (outputs.dir.empty()) throw ConfigError("train: output directory is required");
  Trainer t(cfg, manifest, bank, model, outputs);
  return t.run();
}

}  // namespace dgseg
