#include "dgseg/model.hpp"

#include <bit>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dgseg/error.hpp"
#include "dgseg/nn/binary_io.hpp"
#include "dgseg/rng.hpp"

namespace dgseg {

using nn::Tensor;
using nlohmann::json;

namespace {

constexpr int kStageWidths[3] = {32, 64, 128};
constexpr int kHeadWidth = 64;
constexpr char kCheckpointMagic[8] = {'D', 'G', 'S', 'E', 'G', 'C', 'K', 'P'};

int pool_count(int stride) { return std::countr_zero(static_cast<unsigned>(stride)); }

}  // namespace

void validate(const ModelConfig& cfg) {
  if (cfg.backbone != "tiny" && cfg.backbone.rfind("pretrained:", 0) != 0)
    throw ConfigError("unsupported backbone '" + cfg.backbone + "' (expected tiny or pretrained:<checkpoint>)");
  if (cfg.feature_dim < 8) throw ConfigError("model: feature_dim must be >= 8");
  if (cfg.output_stride != 4 && cfg.output_stride != 8 && cfg.output_stride != 16)
    throw ConfigError("model: output_stride must be 4, 8 or 16");
  if (cfg.num_classes < 2 || cfg.num_classes > 255) throw ConfigError("model: num_classes must be in [2, 255]");
  if (cfg.feature_stage < 0 || cfg.feature_stage > 3) throw ConfigError("model: feature_stage must be in [0, 3]");
}

SegModel::SegModel(const ModelConfig& cfg) : cfg_(cfg) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, {hash_name("segmodel")}));
  const int pools = pool_count(cfg.output_stride);
  int in_ch = 3;
  for (int s = 0; s < 4; ++s) {
    Stage st;
    const std::string p = "enc" + std::to_string(s);
    const int out_ch = s < 3 ? kStageWidths[s] : cfg.feature_dim;
    const int convs = s < 3 ? 1 : 2;
    for (int k = 0; k < convs; ++k) {
      st.convs.emplace_back(p + ".conv" + std::to_string(k), k == 0 ? in_ch : out_ch, out_ch, 3, 1, false, rng);
      st.norms.emplace_back(p + ".bn" + std::to_string(k), out_ch);
      st.relus.emplace_back();
    }
    st.pool = s < pools;
    stages_.push_back(std::move(st));
    in_ch = out_ch;
  }
  stages_.front().convs.front().set_input_grad(false);
  head_conv_ = nn::Conv2d("head.conv", cfg.feature_dim, kHeadWidth, 3, 1, false, rng);
  head_norm_ = nn::BatchNorm2d("head.bn", kHeadWidth);
  classifier_ = nn::Conv2d("classifier", kHeadWidth, cfg.num_classes, 1, 1, true, rng);
  // Small classifier weights keep the initial per-pixel distribution near uniform.
  std::vector<nn::Parameter*> cls;
  classifier_.parameters(cls);
  for (auto& v : cls[0]->value.span()) v *= 0.01f;

  if (cfg.backbone.rfind("pretrained:", 0) == 0) {
    const std::string path = cfg.backbone.substr(std::string("pretrained:").size());
    SegModel donor = load_checkpoint(path);
    ModelConfig a = donor.config(), b = cfg;
    a.backbone = b.backbone = "";
    a.seed = b.seed = 0;
    if (!(a == b)) throw ConfigError("pretrained checkpoint architecture does not match the model config: " + path);
    auto dst = state();
    auto src = static_cast<const SegModel&>(donor).state();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = *src[i];
  }
}

void SegModel::check_input(const Tensor& images) const {
  if (images.c() != 3) throw Error("model input must have 3 channels, got " + images.shape_string());
  const int s = cfg_.output_stride;
  if (images.h() % s != 0 || images.w() % s != 0) {
    const int ph = (s - images.h() % s) % s;
    const int pw = (s - images.w() % s) % s;
    throw Error("input " + std::to_string(images.h()) + "x" + std::to_string(images.w()) +
                " is not divisible by output stride " + std::to_string(s) + "; pad by " + std::to_string(ph) +
                " rows and " + std::to_string(pw) + " columns");
  }
}

Tensor SegModel::run_encoder(const Tensor& x, bool train, Tensor* tap) {
  if (!train) return static_cast<const SegModel&>(*this).run_encoder(x, tap);
  Tensor h = x;
  for (int s = 0; s < 4; ++s) {
    Stage& st = stages_[s];
    for (std::size_t k = 0; k < st.convs.size(); ++k)
      h = st.relus[k].forward(st.norms[k].forward(st.convs[k].forward(h)));
    if (st.pool) h = st.pooling.forward(h);
    if (s == cfg_.feature_stage && tap) *tap = h;
  }
  return h;
}

Tensor SegModel::run_encoder(const Tensor& x, Tensor* tap) const {
  Tensor h = x;
  for (int s = 0; s < 4; ++s) {
    const Stage& st = stages_[s];
    for (std::size_t k = 0; k < st.convs.size(); ++k)
      h = st.relus[k].infer(st.norms[k].infer(st.convs[k].infer(h)));
    if (st.pool) h = st.pooling.infer(h);
    if (s == cfg_.feature_stage && tap) *tap = h;
  }
  return h;
}

ForwardResult SegModel::forward(const Tensor& images, Mode mode) {
  if (mode == Mode::kInference) return infer(images);
  check_input(images);
  ForwardResult r;
  Tensor enc = run_encoder(images, true, &r.features);
  Tensor h = head_relu_.forward(head_norm_.forward(head_conv_.forward(enc)));
  upsample_.set_output(images.h(), images.w());
  r.logits = upsample_.forward(classifier_.forward(h));
  return r;
}

ForwardResult SegModel::infer(const Tensor& images) const {
  check_input(images);
  ForwardResult r;
  Tensor enc = run_encoder(images, &r.features);
  Tensor h = head_relu_.infer(head_norm_.infer(head_conv_.infer(enc)));
  nn::BilinearResize up(images.h(), images.w());
  r.logits = up.infer(classifier_.infer(h));
  return r;
}

FeatureBatch SegModel::encode_frozen(const Tensor& images) const {
  check_input(images);
  Tensor tap;
  Tensor enc = run_encoder(images, &tap);
  return cfg_.feature_stage == 3 ? enc : tap;
}

void SegModel::backward(const Tensor& dfeatures, const Tensor& dlogits) {
  Tensor g = head_conv_.backward(head_norm_.backward(head_relu_.backward(classifier_.backward(upsample_.backward(dlogits)))));
  for (int s = 3; s >= 0; --s) {
    Stage& st = stages_[s];
    if (s == cfg_.feature_stage && !dfeatures.empty()) g.add_(dfeatures);
    if (st.pool) g = st.pooling.backward(g);
    for (int k = static_cast<int>(st.convs.size()) - 1; k >= 0; --k)
      g = st.convs[k].backward(st.norms[k].backward(st.relus[k].backward(g)));
  }
}

std::vector<nn::Parameter*> SegModel::parameters() {
  std::vector<nn::Parameter*> p;
  for (auto& st : stages_)
    for (std::size_t k = 0; k < st.convs.size(); ++k) {
      st.convs[k].parameters(p);
      st.norms[k].parameters(p);
    }
  head_conv_.parameters(p);
  head_norm_.parameters(p);
  classifier_.parameters(p);
  return p;
}

std::vector<Tensor*> SegModel::state() {
  std::vector<Tensor*> out;
  for (auto* p : parameters()) out.push_back(&p->value);
  std::vector<Tensor*> buffers;
  for (auto& st : stages_)
    for (auto& n : st.norms) n.buffers(buffers);
  head_norm_.buffers(buffers);
  out.insert(out.end(), buffers.begin(), buffers.end());
  return out;
}

std::vector<const Tensor*> SegModel::state() const {
  auto mut = const_cast<SegModel*>(this)->state();
  return {mut.begin(), mut.end()};
}

std::size_t SegModel::parameter_count() const {
  return nn::count_parameters(const_cast<SegModel*>(this)->parameters());
}

std::uint64_t SegModel::state_hash() const { return nn::hash_tensors(state()); }

Tensor to_tensor(std::span<const Image> images) {
  if (images.empty()) return {};
  const int h = images[0].height(), w = images[0].width();
  Tensor t(static_cast<int>(images.size()), 3, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height() != h || images[i].width() != w) throw Error("to_tensor: images differ in size");
    std::copy(images[i].data().begin(), images[i].data().end(), t.item_ptr(static_cast<int>(i)));
  }
  return t;
}

Tensor to_tensor(const Image& image) { return to_tensor(std::span<const Image>(&image, 1)); }

std::string model_config_json(const ModelConfig& cfg) {
  json j{{"backbone", cfg.backbone},         {"feature_dim", cfg.feature_dim},
         {"output_stride", cfg.output_stride}, {"num_classes", cfg.num_classes},
         {"feature_stage", cfg.feature_stage}, {"seed", cfg.seed}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    json j = json::parse(text);
    ModelConfig c;
    c.backbone = j.at("backbone").get<std::string>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.output_stride = j.at("output_stride").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.feature_stage = j.at("feature_stage").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid model config header: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const SegModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  nn::write_pod<std::uint32_t>(out, kCheckpointVersion);
  // A pretrained backbone is resolved at construction; the stored weights
  // stand on their own.
  ModelConfig cfg = model.config();
  if (cfg.backbone != "tiny") cfg.backbone = "tiny";
  nn::write_string(out, model_config_json(cfg));
  nn::write_pod<std::uint64_t>(out, model.parameter_count());
  const auto st = model.state();
  nn::write_pod<std::uint64_t>(out, st.size());
  for (const auto* t : st) nn::write_tensor_data(out, *t);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

SegModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kCheckpointMagic))
    throw DataError("not a dgseg checkpoint: " + path.string());
  const auto version = nn::read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                    "; this build reads version " + std::to_string(kCheckpointVersion));
  SegModel model(model_config_from_json(nn::read_string(in)));
  const auto count = nn::read_pod<std::uint64_t>(in);
  if (count != model.parameter_count())
    throw DataError("checkpoint parameter count " + std::to_string(count) + " does not match architecture (" +
                    std::to_string(model.parameter_count()) + ")");
  auto st = model.state();
  if (nn::read_pod<std::uint64_t>(in) != st.size()) throw DataError("checkpoint tensor count mismatch");
  for (auto* t : st) nn::read_tensor_data(in, *t);
  return model;
}

}  // namespace dgseg
