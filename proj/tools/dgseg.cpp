#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dgseg/augment.hpp"
#include "dgseg/config.hpp"
#include "dgseg/dataset.hpp"
#include "dgseg/error.hpp"
#include "dgseg/metrics.hpp"
#include "dgseg/mining.hpp"
#include "dgseg/model.hpp"
#include "dgseg/png_io.hpp"
#include "dgseg/style_bank.hpp"
#include "dgseg/toy.hpp"
#include "dgseg/train.hpp"

namespace fs = std::filesystem;
using namespace dgseg;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

RunConfig resolve(const Globals& g, std::vector<std::string> extra = {}) {
  std::vector<std::string> ov = g.overrides;
  ov.insert(ov.end(), extra.begin(), extra.end());
  RunConfig cfg = load_run_config(g.config, ov);
  apply_seed(cfg, g.seed.value_or(cfg.seed));
  if (!g.out.empty()) cfg.output_dir = g.out;
  return cfg;
}

fs::path prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = dir / ".write_test";
  std::ofstream f(probe);
  if (ec || !f) throw ConfigError("output directory is not writable: " + dir.string());
  f.close();
  fs::remove(probe, ec);
  return dir;
}

void require_dir(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("config key '") + key + "' is required for this command");
  if (!fs::is_directory(p)) throw ConfigError(std::string("config key '") + key + "': directory not found: " + p.string());
}

DatasetManifest load_dataset(const RunConfig& c, const fs::path& root, const std::string& split) {
  LoadOptions opts;
  opts.split = split;
  opts.num_classes = c.dataset.num_classes;
  opts.eval_subset = c.dataset.eval_subset;
  const auto format = parse_dataset_format(c.dataset.format);
  if (format == DatasetFormat::kCityscapesLike) {
    opts.remap = c.dataset.remap.empty() ? cityscapes_remap_table() : load_remap_table(c.dataset.remap);
    if (c.dataset.num_classes == 19) opts.class_names = cityscapes_class_names();
  }
  return load_manifest(root, format, opts);
}

SegModel make_model(const RunConfig& c) {
  if (!c.checkpoint.empty()) {
    if (!fs::exists(c.checkpoint)) throw ConfigError("config key 'checkpoint': file not found: " + c.checkpoint.string());
    return load_checkpoint(c.checkpoint);
  }
  return SegModel(c.model);
}

std::vector<Image> content_images(const RunConfig& c, const DatasetManifest& m) {
  std::vector<Image> out;
  const std::size_t n = std::min<std::size_t>(m.size(), static_cast<std::size_t>(c.styles.content_images));
  for (std::size_t i = 0; i < n; ++i) out.push_back(load_sample(m, i).image);
  return out;
}

int cmd_toy_gen(const Globals& g, int count, const std::string& variant, const std::string& split, bool styles) {
  std::vector<std::string> extra;
  if (count != std::numeric_limits<int>::min()) {
    if (count < 1) throw ConfigError("--count must be >= 1");
    extra.push_back("toy.count=" + std::to_string(count));
  }
  if (!variant.empty()) extra.push_back("toy.variant=\"" + variant + "\"");
  if (!split.empty()) extra.push_back("toy.split=\"" + split + "\"");
  RunConfig c = resolve(g, extra);
  const fs::path out = prepare_output(c.output_dir);
  const DatasetManifest m = generate_toy_dataset(c.toy.spec, c.toy.count, c.seed);
  write_dataset(out, c.toy.split, m);
  if (styles && (c.toy.style_paintings > 0 || c.toy.style_textures > 0))
    generate_style_images(out / "styles", c.toy.style_paintings, c.toy.style_textures, c.toy.style_size,
                          derive_seed(c.seed, {hash_name("styles")}));
  std::printf("wrote %zu %s samples (%s) to %s\n", m.size(), c.toy.split.c_str(), to_string(c.toy.spec.variant).c_str(),
              out.string().c_str());
  return 0;
}

int cmd_build_bank(const Globals& g) {
  RunConfig c = resolve(g);
  require_dir(c.styles.dir, "styles.dir");
  std::vector<Image> content;
  if (c.styles.bank.kind == StylizerKind::kNeural) {
    require_dir(c.dataset.root, "dataset.root");
    content = content_images(c, load_dataset(c, c.dataset.root, c.dataset.split));
  }
  const fs::path out = prepare_output(c.styles.bank_dir.empty() ? c.output_dir / "bank" : c.styles.bank_dir);
  const StyleBank bank = build_style_bank(c.styles.dir, c.styles.bank, content);
  save_style_bank(out, bank);
  std::printf("style bank: %d %s styles -> %s\n", bank.size(), to_string(bank.kind()).c_str(), out.string().c_str());
  for (const auto& r : bank.styles())
    std::printf("  %3d  %-8s  %s\n", r.style_id, to_string(r.kind).c_str(), r.source.filename().string().c_str());
  return 0;
}

StyleBank load_bank(const RunConfig& c) {
  require_dir(c.styles.bank_dir, "styles.bank_dir");
  return load_style_bank(c.styles.bank_dir);
}

int cmd_mine(const Globals& g) {
  RunConfig c = resolve(g);
  require_dir(c.dataset.root, "dataset.root");
  const StyleBank bank = load_bank(c);
  const DatasetManifest m = load_dataset(c, c.dataset.root, c.dataset.split);
  const SegModel model = make_model(c);
  const fs::path out = prepare_output(c.output_dir);
  std::vector<Image> batch;
  std::vector<std::string> ids;
  const std::size_t n = std::min<std::size_t>(m.size(), static_cast<std::size_t>(c.preview_count));
  for (std::size_t i = 0; i < n; ++i) {
    batch.push_back(prepare_sample(load_sample(m, i), c.train).image);
    ids.push_back(m.records[i].id);
  }
  Rng rng(derive_seed(c.train.seed, {hash_name("mine-command")}));
  const Encoder enc = [&model](const nn::Tensor& x) { return model.encode_frozen(x); };
  const auto results = mine_adversarial_styles(batch, bank, enc, c.train.mining_policy, rng, c.train.workers);
  const std::string report = mining_report_jsonl(results, ids, bank);
  std::ofstream(out / "mining.jsonl") << report;
  std::fputs(report.c_str(), stdout);
  return 0;
}

int cmd_train(const Globals& g, int iterations, bool resume) {
  std::vector<std::string> extra;
  if (iterations != std::numeric_limits<int>::min()) {
    if (iterations < 0) throw ConfigError("--iterations must be >= 0");
    extra.push_back("train.iterations=" + std::to_string(iterations));
  }
  RunConfig c = resolve(g, extra);
  require_dir(c.dataset.root, "dataset.root");
  const DatasetManifest m = load_dataset(c, c.dataset.root, c.dataset.split);
  std::optional<StyleBank> bank;
  if (c.train.use_stylization && c.train.stylized_stream) bank = load_bank(c);
  std::optional<DatasetManifest> val;
  if (!c.dataset.val_split.empty()) val = load_dataset(c, c.dataset.root, c.dataset.val_split);
  SegModel model = make_model(c);
  const fs::path out = prepare_output(c.output_dir);
  std::ofstream(out / "config.json") << to_json(c).dump(2) << "\n";
  TrainOutputs to;
  to.dir = out;
  to.resume = resume;
  to.validation = val ? &*val : nullptr;
  const TrainResult r = train(c.train, m, bank ? &*bank : nullptr, model, to);
  std::printf("trained %d iterations; ce %.4f -> %.4f; checkpoint %s\n", r.iterations, r.first_ce, r.last_ce,
              (out / "last.ckpt").string().c_str());
  if (r.best_val_miou) std::printf("best validation mIoU %.4f\n", *r.best_val_miou);
  return 0;
}

int cmd_eval(const Globals& g) {
  RunConfig c = resolve(g);
  const fs::path root = c.dataset.eval_root.empty() ? c.dataset.root : c.dataset.eval_root;
  require_dir(root, c.dataset.eval_root.empty() ? "dataset.root" : "dataset.eval_root");
  const SegModel model = make_model(c);
  const DatasetManifest m = load_dataset(c, root, c.dataset.eval_split);
  const EvalReport rep = evaluate(model, m, c.train.workers);
  const fs::path out = prepare_output(c.output_dir);
  std::ofstream(out / "eval_report.json") << report_json(rep) << "\n";
  std::fputs(format_report(rep).c_str(), stdout);
  return 0;
}

std::vector<std::array<std::uint8_t, 3>> label_palette() {
  std::vector<std::array<std::uint8_t, 3>> p(256, {0, 0, 0});
  const std::array<std::array<std::uint8_t, 3>, 19> base{{{128, 64, 128}, {244, 35, 232}, {70, 70, 70},
                                                          {102, 102, 156}, {190, 153, 153}, {153, 153, 153},
                                                          {250, 170, 30}, {220, 220, 0}, {107, 142, 35},
                                                          {152, 251, 152}, {70, 130, 180}, {220, 20, 60},
                                                          {255, 0, 0}, {0, 0, 142}, {0, 0, 70},
                                                          {0, 60, 100}, {0, 80, 100}, {0, 0, 230},
                                                          {119, 11, 32}}};
  for (std::size_t i = 0; i < base.size(); ++i) p[i] = base[i];
  for (std::size_t i = base.size(); i < 255; ++i)
    p[i] = {static_cast<std::uint8_t>(37 * i), static_cast<std::uint8_t>(91 * i), static_cast<std::uint8_t>(151 * i)};
  p[kIgnore] = {255, 255, 255};
  return p;
}

int cmd_augment_preview(const Globals& g) {
  RunConfig c = resolve(g);
  require_dir(c.dataset.root, "dataset.root");
  const DatasetManifest m = load_dataset(c, c.dataset.root, c.dataset.split);
  const StyleBank bank = load_bank(c);
  const fs::path out = prepare_output(c.output_dir);
  const auto palette = label_palette();
  const std::size_t n = std::min<std::size_t>(m.size(), static_cast<std::size_t>(c.preview_count));
  const int pool_size = std::min(c.train.style_pool, bank.size());
  for (std::size_t i = 0; i < n; ++i) {
    const Sample src = prepare_sample(load_sample(m, i), c.train);
    Rng rng(derive_seed(c.train.seed, {hash_name("augment-preview"), i}));
    std::vector<int> ids;
    for (const auto& r : bank.styles()) ids.push_back(r.style_id);
    shuffle(ids, rng);
    std::vector<Sample> pool;
    for (int k = 0; k < pool_size; ++k) {
      Sample s = src;
      s.image = bank.stylize(ids[k], src.image);
      pool.push_back(std::move(s));
    }
    MixResult mix = style_mix(pool, rng, c.train.aug);
    const Sample final_sample = flip_and_jitter(mix.sample, rng, c.train.aug);
    LabelMap prov(src.label.height(), src.label.width());
    std::copy(mix.provenance.begin(), mix.provenance.end(), prov.data().begin());
    const std::string stem = m.records[i].id;
    write_png_rgb(out / (stem + "_source.png"), src.image);
    for (int k = 0; k < pool_size; ++k)
      write_png_rgb(out / (stem + "_pool" + std::to_string(k) + "_style" + std::to_string(ids[k]) + ".png"),
                    pool[k].image);
    write_png_rgb(out / (stem + "_mixed.png"), mix.sample.image);
    write_png_palette(out / (stem + "_mixed_label.png"), mix.sample.label, palette);
    write_png_gray(out / (stem + "_provenance.png"), prov);
    write_png_rgb(out / (stem + "_augmented.png"), final_sample.image);
    write_png_palette(out / (stem + "_augmented_label.png"), final_sample.label, palette);
  }
  std::printf("wrote previews for %zu samples to %s\n", n, out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-generalized semantic segmentation: toy data, style banks, mining, training, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config, "Run configuration file (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "Global seed; overrides the config value");
  app.add_option("--out", g.out, "Output directory; overrides output_dir");
  app.add_option("--set", g.overrides, "Config override section.key=value (repeatable)")->take_all();

  auto* toy = app.add_subcommand("toy-gen", "Generate a procedural toy dataset (and style images)");
  int count = std::numeric_limits<int>::min();
  std::string variant, split;
  bool no_styles = false;
  toy->add_option("--count", count, "Number of samples (toy.count)");
  toy->add_option("--variant", variant, "source, texture-shift or night (toy.variant)");
  toy->add_option("--split", split, "Split name (toy.split)");
  toy->add_flag("--no-styles", no_styles, "Do not write style images");

  auto* bank = app.add_subcommand("build-bank", "Select styles and train or cache their stylizers");
  auto* mine = app.add_subcommand("mine", "Report adversarial style choices for the first images");

  auto* tr = app.add_subcommand("train", "Train a segmentation model");
  int iterations = std::numeric_limits<int>::min();
  bool resume = false;
  tr->add_option("--iterations", iterations, "Training iterations (train.iterations)");
  tr->add_flag("--resume", resume, "Continue from the output directory's last checkpoint");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint: per-class IoU, mIoU, mIoU*");
  std::string ckpt;
  ev->add_option("--checkpoint", ckpt, "Checkpoint file (checkpoint)");
  auto* aug = app.add_subcommand("augment-preview", "Write style-mix and flip/jitter previews");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;
  if (!ckpt.empty()) g.overrides.push_back("checkpoint=\"" + ckpt + "\"");

  try {
    if (toy->parsed()) return cmd_toy_gen(g, count, variant, split, !no_styles);
    if (bank->parsed()) return cmd_build_bank(g);
    if (mine->parsed()) return cmd_mine(g);
    if (tr->parsed()) return cmd_train(g, iterations, resume);
    if (ev->parsed()) return cmd_eval(g);
    if (aug->parsed()) return cmd_augment_preview(g);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
