#include "dgseg/config.hpp"

#include <fstream>

#include "dgseg/dataset.hpp"
#include "dgseg/error.hpp"

namespace dgseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Walks every RunConfig field once; in write mode it fills a JSON document,
// in read mode it pulls values out of one. Keeping one field list avoids the
// two directions drifting apart.
class Binder {
 public:
  Binder(json& doc, bool writing) : doc_(&doc), writing_(writing) {}

  template <class Fn>
  void section(const char* name, Fn&& fn) {
    json* saved = doc_;
    const std::string saved_path = path_;
    if (writing_) (*doc_)[name] = json::object();
    doc_ = &(*doc_)[name];
    path_ = path_.empty() ? name : path_ + "." + name;
    fn();
    doc_ = saved;
    path_ = saved_path;
  }

  template <class T>
  void operator()(const char* name, T& value) {
    if (writing_) {
      (*doc_)[name] = to_j(value);
      return;
    }
    const json& v = doc_->at(name);
    try {
      from_j(v, value);
    } catch (const json::exception&) {
      throw ConfigError("config key '" + key(name) + "' has the wrong type (" + v.dump() + ")");
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key(name) + "': " + e.what());
    }
  }

  template <class E>
  void enumeration(const char* name, E& value, std::string (*to_s)(E), E (*parse)(const std::string&)) {
    if (writing_) {
      (*doc_)[name] = to_s(value);
      return;
    }
    const json& v = doc_->at(name);
    if (!v.is_string()) throw ConfigError("config key '" + key(name) + "' must be a string");
    try {
      value = parse(v.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key(name) + "': " + e.what());
    }
  }

 private:
  std::string key(const char* name) const { return path_.empty() ? name : path_ + "." + name; }

  template <class T>
  static json to_j(const T& v) {
    if constexpr (std::is_same_v<T, fs::path>)
      return v.string();
    else if constexpr (std::is_same_v<T, std::optional<std::vector<int>>>)
      return v ? json(*v) : json(nullptr);
    else
      return v;
  }
  static void from_j(const json& j, fs::path& v) { v = j.get<std::string>(); }
  static void from_j(const json& j, std::string& v) { v = j.get<std::string>(); }
  static void from_j(const json& j, bool& v) {
    if (!j.is_boolean()) throw json::type_error::create(302, "expected boolean", &j);
    v = j.get<bool>();
  }
  static void from_j(const json& j, double& v) {
    if (!j.is_number()) throw json::type_error::create(302, "expected number", &j);
    v = j.get<double>();
  }
  static void from_j(const json& j, int& v) {
    if (!j.is_number_integer()) throw json::type_error::create(302, "expected integer", &j);
    v = j.get<int>();
  }
  static void from_j(const json& j, std::uint64_t& v) {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0))
      throw json::type_error::create(302, "expected non-negative integer", &j);
    v = j.get<std::uint64_t>();
  }
  static void from_j(const json& j, std::optional<std::vector<int>>& v) {
    if (j.is_null())
      v.reset();
    else
      v = j.get<std::vector<int>>();
  }

  json* doc_;
  bool writing_;
  std::string path_;
};

std::string policy_to_s(MiningPolicy p) { return to_string(p); }
std::string kind_to_s(StylizerKind k) { return to_string(k); }
std::string variant_to_s(ToyVariant v) { return to_string(v); }
std::string norm_to_s(CentroidNorm n) { return n == CentroidNorm::kL1 ? "l1" : "l2"; }
CentroidNorm parse_norm(const std::string& s) {
  if (s == "l1") return CentroidNorm::kL1;
  if (s == "l2") return CentroidNorm::kL2;
  throw ConfigError("unknown centroid normalization '" + s + "' (expected l1 or l2)");
}

void bind(Binder& b, RunConfig& c) {
  b("seed", c.seed);
  b("output_dir", c.output_dir);
  b("checkpoint", c.checkpoint);
  b("preview_count", c.preview_count);
  b.section("dataset", [&] {
    auto& d = c.dataset;
    b("root", d.root);
    b("format", d.format);
    b("split", d.split);
    b("val_split", d.val_split);
    b("eval_root", d.eval_root);
    b("eval_split", d.eval_split);
    b("num_classes", d.num_classes);
    b("remap", d.remap);
    b("eval_subset", d.eval_subset);
  });
  b.section("styles", [&] {
    auto& s = c.styles;
    b("dir", s.dir);
    b("bank_dir", s.bank_dir);
    b("content_images", s.content_images);
    b("size", s.bank.size);
    b("pool_size", s.bank.pool_size);
    b.enumeration("kind", s.bank.kind, kind_to_s, parse_stylizer_kind);
    b("beta", s.bank.frequency.beta);
    b("swap_phase", s.bank.frequency.swap_phase);
    b("train_steps", s.bank.train.steps);
    b("train_lr", s.bank.train.learning_rate);
    b("crop_size", s.bank.train.crop_size);
    b("content_weight", s.bank.train.content_weight);
    b("style_weight", s.bank.train.style_weight);
    b("stem_channels", s.bank.arch.stem_channels);
    b("mid_channels", s.bank.arch.mid_channels);
    b("body_channels", s.bank.arch.body_channels);
    b("residual_blocks", s.bank.arch.residual_blocks);
    b("workers", s.bank.workers);
  });
  b.section("model", [&] {
    auto& m = c.model;
    b("backbone", m.backbone);
    b("feature_dim", m.feature_dim);
    b("output_stride", m.output_stride);
    b("num_classes", m.num_classes);
    b("feature_stage", m.feature_stage);
  });
  b.section("train", [&] {
    auto& t = c.train;
    b("iterations", t.iterations);
    b("learning_rate", t.learning_rate);
    b("adam_beta1", t.adam_beta1);
    b("adam_beta2", t.adam_beta2);
    b("use_stylization", t.use_stylization);
    b.enumeration("mining_policy", t.mining_policy, policy_to_s, parse_mining_policy);
    b("refresh_snapshot", t.refresh_snapshot);
    b("mining_batch", t.mining_batch);
    b("mining_crop", t.mining_crop);
    b("style_mix", t.style_mix);
    b("style_pool", t.style_pool);
    b("flip_jitter", t.flip_jitter);
    b("source_stream", t.source_stream);
    b("stylized_stream", t.stylized_stream);
    b("resize_height", t.resize_height);
    b("resize_width", t.resize_width);
    b("checkpoint_every", t.checkpoint_every);
    b("validate_every", t.validate_every);
    b("workers", t.workers);
  });
  b.section("augment", [&] {
    auto& a = c.train.aug;
    b("cutmix_prob", a.cutmix_prob);
    b("copy_paste_prob", a.copy_paste_prob);
    b("flip_prob", a.flip_prob);
    b("brightness", a.brightness);
    b("contrast", a.contrast);
    b("saturation", a.saturation);
    b("box_alpha", a.box_alpha);
    b("min_instances", a.min_instances);
    b("max_instances", a.max_instances);
    b("cross_source", a.cross_source);
  });
  b.section("loss", [&] {
    auto& t = c.train;
    b("supcon", t.weights.supcon);
    b("cosine", t.weights.cosine);
    b("ce", t.weights.ce);
    b("temperature", t.weights.temperature);
    b("supcon_mean_of_logs", t.supcon_mean_of_logs);
    b("supcon_mean_reduction", t.supcon_mean_reduction);
    b("cosine_all_pairs", t.cosine.all_pairs);
    b("cosine_absolute", t.cosine.absolute);
    b.enumeration("centroid_norm", t.cosine.centroid_norm, norm_to_s, parse_norm);
    b("per_class_cap", t.per_class_cap);
  });
  b.section("toy", [&] {
    auto& t = c.toy;
    b("count", t.count);
    b("split", t.split);
    b("height", t.spec.height);
    b("width", t.spec.width);
    b("min_shapes", t.spec.min_shapes);
    b("max_shapes", t.spec.max_shapes);
    b("num_classes", t.spec.num_classes);
    b("texture_library_size", t.spec.texture_library_size);
    b.enumeration("variant", t.spec.variant, variant_to_s, parse_toy_variant);
    b("night_gain", t.spec.night_gain);
    b("night_noise", t.spec.night_noise);
    b("style_paintings", t.style_paintings);
    b("style_textures", t.style_textures);
    b("style_size", t.style_size);
  });
}

void merge_checked(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config section '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (const auto& [k, v] : patch.items()) {
    const std::string key = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) throw ConfigError("unknown config key '" + key + "'");
    if (base[k].is_object())
      merge_checked(base[k], v, key);
    else
      base[k] = v;
  }
}

}  // namespace

json to_json(const RunConfig& cfg) {
  json doc = json::object();
  RunConfig copy = cfg;
  Binder b(doc, true);
  bind(b, copy);
  return doc;
}

RunConfig run_config_from_json(const json& patch) {
  json doc = to_json(RunConfig{});
  merge_checked(doc, patch, "");
  RunConfig cfg;
  Binder b(doc, false);
  bind(b, cfg);
  return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must have the form section.key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  const json defaults = to_json(RunConfig{});
  const json* def = &defaults;
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!def->is_object() || !def->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    def = &(*def)[part];
    if (dot == std::string::npos) {
      if (def->is_object()) throw ConfigError("config key '" + key + "' names a section, not a value");
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig cfg = run_config_from_json(doc);
  validate(cfg);
  return cfg;
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.model.seed = derive_seed(seed, {hash_name("model")});
  cfg.train.seed = derive_seed(seed, {hash_name("train")});
  cfg.styles.bank.seed = derive_seed(seed, {hash_name("style-bank")});
}

void validate(const RunConfig& cfg) {
  validate(cfg.model);
  validate(cfg.train);
  validate(cfg.toy.spec);
  if (cfg.toy.count < 1) throw ConfigError("toy.count must be >= 1");
  if (cfg.preview_count < 1) throw ConfigError("preview_count must be >= 1");
  if (cfg.styles.content_images < 1) throw ConfigError("styles.content_images must be >= 1");
  parse_dataset_format(cfg.dataset.format);
}

}  // namespace dgseg
