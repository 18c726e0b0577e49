#include "dgseg/style_bank.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dgseg/error.hpp"
#include "dgseg/nn/binary_io.hpp"
#include "dgseg/parallel.hpp"
#include "dgseg/png_io.hpp"
#include "dgseg/rng.hpp"

namespace dgseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(StyleKind k) { return k == StyleKind::kPainting ? "painting" : "texture"; }

std::string to_string(StylizerKind k) {
  switch (k) {
    case StylizerKind::kNeural: return "neural";
    case StylizerKind::kFrequencySwap: return "frequency-swap";
    case StylizerKind::kCustom: return "custom";
  }
  return "?";
}

StylizerKind parse_stylizer_kind(const std::string& s) {
  if (s == "neural") return StylizerKind::kNeural;
  if (s == "frequency-swap" || s == "fda") return StylizerKind::kFrequencySwap;
  throw ConfigError("unknown stylizer kind '" + s + "' (expected neural or frequency-swap)");
}

static StyleKind parse_style_kind(const std::string& s) {
  if (s == "painting") return StyleKind::kPainting;
  if (s == "texture") return StyleKind::kTexture;
  throw DataError("unknown style kind '" + s + "'");
}

void validate(const StyleBankConfig& cfg) {
  if (cfg.size < 1) throw ConfigError("style bank size must be >= 1");
  if (cfg.pool_size < cfg.size)
    throw ConfigError("style pool size (" + std::to_string(cfg.pool_size) + ") must be >= bank size (" +
                      std::to_string(cfg.size) + ")");
  if (cfg.kind == StylizerKind::kCustom) throw ConfigError("custom stylizers cannot be built from a directory");
  validate(cfg.frequency);
  if (cfg.train.steps < 0) throw ConfigError("stylizer training steps must be >= 0");
  if (!(cfg.train.learning_rate > 0)) throw ConfigError("stylizer learning rate must be > 0");
}

StyleBank StyleBank::frequency(std::vector<StyleRef> refs, std::vector<Image> images, const FrequencySwapConfig& cfg) {
  validate(cfg);
  if (refs.size() != images.size()) throw Error("style bank: refs and images differ in length");
  StyleBank b;
  b.kind_ = StylizerKind::kFrequencySwap;
  b.styles_ = std::move(refs);
  b.images_ = std::move(images);
  b.freq_ = cfg;
  return b;
}

StyleBank StyleBank::neural(std::vector<StyleRef> refs, std::vector<Image> images,
                            std::vector<NeuralStylizerParams> params) {
  if (refs.size() != params.size() || refs.size() != images.size())
    throw Error("style bank: refs, images and parameters differ in length");
  StyleBank b;
  b.kind_ = StylizerKind::kNeural;
  b.styles_ = std::move(refs);
  b.images_ = std::move(images);
  b.params_ = std::move(params);
  for (const auto& p : b.params_) b.nets_.push_back(std::make_shared<const NeuralStylizer>(p));
  return b;
}

StyleBank StyleBank::custom(std::vector<StyleRef> refs, std::vector<StyleFn> fns) {
  if (refs.size() != fns.size()) throw Error("style bank: refs and functions differ in length");
  StyleBank b;
  b.kind_ = StylizerKind::kCustom;
  b.styles_ = std::move(refs);
  b.fns_ = std::move(fns);
  return b;
}

std::size_t StyleBank::index_of(int style_id) const {
  for (std::size_t i = 0; i < styles_.size(); ++i)
    if (styles_[i].style_id == style_id) return i;
  throw Error("unknown style id " + std::to_string(style_id) + " (bank has " + std::to_string(styles_.size()) +
              " styles)");
}

const StyleRef& StyleBank::style(int style_id) const { return styles_[index_of(style_id)]; }

const Image& StyleBank::style_image(int style_id) const {
  const auto i = index_of(style_id);
  if (i >= images_.size()) throw Error("style " + std::to_string(style_id) + " has no stored image");
  return images_[i];
}

const NeuralStylizerParams& StyleBank::neural_params(int style_id) const {
  if (kind_ != StylizerKind::kNeural) throw Error("style bank is not neural");
  return params_[index_of(style_id)];
}

Image StyleBank::stylize(int style_id, const Image& source) const {
  const auto i = index_of(style_id);
  Image out;
  switch (kind_) {
    case StylizerKind::kFrequencySwap: out = stylize_frequency(source, images_[i], freq_); break;
    case StylizerKind::kNeural: out = nets_[i]->apply(source); break;
    case StylizerKind::kCustom: out = fns_[i](source); break;
  }
  if (out.height() != source.height() || out.width() != source.width())
    throw Error("stylizer changed image dimensions");
  out.clamp01();
  return out;
}

Image stylize(const StyleBank& bank, int style_id, const Image& source) { return bank.stylize(style_id, source); }

std::vector<StyleRef> discover_styles(const fs::path& style_dir) {
  if (!fs::is_directory(style_dir)) throw ConfigError("style directory not found: " + style_dir.string());
  std::vector<StyleRef> out;
  for (auto [sub, kind] : {std::pair{"paintings", StyleKind::kPainting}, std::pair{"textures", StyleKind::kTexture}}) {
    const fs::path dir = style_dir / sub;
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (auto& f : files) out.push_back({-1, kind, f});
  }
  return out;
}

std::vector<StyleRef> select_styles(const std::vector<StyleRef>& available, int size, int pool_size,
                                    std::uint64_t seed) {
  if (static_cast<int>(available.size()) < size)
    throw ConfigError("style bank needs " + std::to_string(size) + " style images but only " +
                      std::to_string(available.size()) + " were found");
  std::vector<StyleRef> paintings, textures;
  for (const auto& r : available) (r.kind == StyleKind::kPainting ? paintings : textures).push_back(r);

  // Takes `want_p` paintings and `total - want_p` textures, shifting the
  // shortfall of one kind onto the other.
  auto balanced = [](std::vector<StyleRef>& p, std::vector<StyleRef>& t, int total, Rng& rng) {
    shuffle(p, rng);
    shuffle(t, rng);
    int np = std::min<int>((total + 1) / 2, static_cast<int>(p.size()));
    int nt = std::min<int>(total - np, static_cast<int>(t.size()));
    np = std::min<int>(total - nt, static_cast<int>(p.size()));
    std::vector<StyleRef> out(p.begin(), p.begin() + np);
    out.insert(out.end(), t.begin(), t.begin() + nt);
    return out;
  };

  Rng rng(derive_seed(seed, {hash_name("style-selection")}));
  std::vector<StyleRef> pool = balanced(paintings, textures, std::min<int>(pool_size, available.size()), rng);
  paintings.clear();
  textures.clear();
  for (const auto& r : pool) (r.kind == StyleKind::kPainting ? paintings : textures).push_back(r);
  // Restore a canonical order before the second draw so the result depends
  // only on the seed and the candidate set.
  auto by_path = [](const StyleRef& a, const StyleRef& b) { return a.source < b.source; };
  std::sort(paintings.begin(), paintings.end(), by_path);
  std::sort(textures.begin(), textures.end(), by_path);
  std::vector<StyleRef> active = balanced(paintings, textures, size, rng);
  std::stable_sort(active.begin(), active.end(), [&](const StyleRef& a, const StyleRef& b) {
    if (a.kind != b.kind) return a.kind == StyleKind::kPainting;
    return a.source < b.source;
  });
  for (std::size_t i = 0; i < active.size(); ++i) active[i].style_id = static_cast<int>(i);
  return active;
}

StyleBank build_style_bank(const fs::path& style_dir, const StyleBankConfig& cfg, std::span<const Image> content) {
  validate(cfg);
  auto refs = select_styles(discover_styles(style_dir), cfg.size, cfg.pool_size, cfg.seed);
  std::vector<Image> images(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) images[i] = read_png_rgb(refs[i].source);
  if (cfg.kind == StylizerKind::kFrequencySwap) return StyleBank::frequency(refs, images, cfg.frequency);

  if (content.empty()) throw ConfigError("neural style bank needs content images for stylizer training");
  std::vector<NeuralStylizerParams> params(refs.size());
  parallel_for(refs.size(), static_cast<std::size_t>(cfg.workers), [&](std::size_t i) {
    StylizerTrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, {hash_name("stylizer-train"), static_cast<std::uint64_t>(refs[i].style_id)});
    params[i] = train_neural_stylizer(images[i], content, tc, cfg.arch);
  });
  return StyleBank::neural(refs, images, std::move(params));
}

namespace {

std::string style_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "style_%03d", id);
  return buf;
}

constexpr char kBlobMagic[8] = {'D', 'G', 'S', 'T', 'Y', 'L', 'E', '1'};

}  // namespace

void save_style_bank(const fs::path& dir, const StyleBank& bank) {
  if (bank.kind() == StylizerKind::kCustom) throw Error("custom style banks cannot be saved");
  fs::create_directories(dir);
  json j;
  j["version"] = kStyleBankVersion;
  j["stylizer_kind"] = to_string(bank.kind());
  j["size"] = bank.size();
  j["frequency"] = {{"beta", bank.frequency_config().beta}, {"swap_phase", bank.frequency_config().swap_phase}};
  json styles = json::array();
  for (const auto& r : bank.styles()) {
    const std::string stem = style_stem(r.style_id);
    write_png_rgb(dir / (stem + ".png"), bank.style_image(r.style_id));
    json s{{"style_id", r.style_id}, {"kind", to_string(r.kind)}, {"source", r.source.string()},
           {"image", stem + ".png"}};
    if (bank.kind() == StylizerKind::kNeural) {
      const auto& p = bank.neural_params(r.style_id);
      std::ofstream out(dir / (stem + ".bin"), std::ios::binary);
      out.write(kBlobMagic, sizeof kBlobMagic);
      nn::write_pod<std::int32_t>(out, p.arch.stem_channels);
      nn::write_pod<std::int32_t>(out, p.arch.mid_channels);
      nn::write_pod<std::int32_t>(out, p.arch.body_channels);
      nn::write_pod<std::int32_t>(out, p.arch.residual_blocks);
      nn::write_pod<std::uint64_t>(out, p.values.size());
      out.write(reinterpret_cast<const char*>(p.values.data()),
                static_cast<std::streamsize>(p.values.size() * sizeof(float)));
      if (!out) throw DataError("failed writing " + (dir / (stem + ".bin")).string());
      s["params"] = stem + ".bin";
      s["parameter_count"] = p.values.size();
    }
    styles.push_back(s);
  }
  j["styles"] = styles;
  std::ofstream(dir / "bank.json") << j.dump(2) << "\n";
}

StyleBank load_style_bank(const fs::path& dir) {
  std::ifstream in(dir / "bank.json");
  if (!in) throw DataError("style bank manifest not found: " + (dir / "bank.json").string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed style bank manifest: " + std::string(e.what()));
  }
  try {
    const int version = j.at("version").get<int>();
    if (version != kStyleBankVersion)
      throw DataError("style bank version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kStyleBankVersion) + ")");
    const auto kind = parse_stylizer_kind(j.at("stylizer_kind").get<std::string>());
    std::vector<StyleRef> refs;
    std::vector<Image> images;
    std::vector<NeuralStylizerParams> params;
    for (const auto& s : j.at("styles")) {
      refs.push_back({s.at("style_id").get<int>(), parse_style_kind(s.at("kind").get<std::string>()),
                      s.at("source").get<std::string>()});
      images.push_back(read_png_rgb(dir / s.at("image").get<std::string>()));
      if (kind == StylizerKind::kNeural) {
        const fs::path blob = dir / s.at("params").get<std::string>();
        std::ifstream b(blob, std::ios::binary);
        char magic[8];
        if (!b || !b.read(magic, 8) || !std::equal(magic, magic + 8, kBlobMagic))
          throw DataError("not a stylizer parameter blob: " + blob.string());
        NeuralStylizerParams p;
        p.arch.stem_channels = nn::read_pod<std::int32_t>(b);
        p.arch.mid_channels = nn::read_pod<std::int32_t>(b);
        p.arch.body_channels = nn::read_pod<std::int32_t>(b);
        p.arch.residual_blocks = nn::read_pod<std::int32_t>(b);
        const auto n = nn::read_pod<std::uint64_t>(b);
        if (n != stylizer_parameter_count(p.arch)) throw DataError("parameter count mismatch in " + blob.string());
        p.values.resize(n);
        if (!b.read(reinterpret_cast<char*>(p.values.data()), static_cast<std::streamsize>(n * sizeof(float))))
          throw DataError("truncated stylizer blob " + blob.string());
        params.push_back(std::move(p));
      }
    }
    if (static_cast<int>(refs.size()) != j.at("size").get<int>()) throw DataError("style bank size mismatch");
    if (refs.empty()) throw DataError("style bank is empty");
    if (kind == StylizerKind::kNeural) return StyleBank::neural(refs, images, std::move(params));
    FrequencySwapConfig fc;
    fc.beta = j.at("frequency").at("beta").get<double>();
    fc.swap_phase = j.at("frequency").at("swap_phase").get<bool>();
    return StyleBank::frequency(refs, images, fc);
  } catch (const json::exception& e) {
    throw DataError("malformed style bank manifest: " + std::string(e.what()));
  }
}

}  // namespace dgseg
