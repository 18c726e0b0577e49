#include "dgseg/stylizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "dgseg/error.hpp"
#include "dgseg/nn/adam.hpp"
#include "dgseg/rng.hpp"

namespace dgseg {

using nn::Tensor;

std::size_t stylizer_parameter_count(const StylizerArch& a) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; };
  auto norm = [](std::size_t c) { return 2 * c; };
  std::size_t n = 0;
  n += conv(3, a.stem_channels, 9) + norm(a.stem_channels);
  n += conv(a.stem_channels, a.mid_channels, 3) + norm(a.mid_channels);
  n += conv(a.mid_channels, a.body_channels, 3) + norm(a.body_channels);
  n += a.residual_blocks * 2 * (conv(a.body_channels, a.body_channels, 3) + norm(a.body_channels));
  n += conv(a.body_channels, a.stem_channels, 3) + norm(a.stem_channels);
  n += conv(a.stem_channels, 3, 9);
  return n;
}

NeuralStylizer::NeuralStylizer(const StylizerArch& arch, std::uint64_t seed) : arch_(arch) {
  Rng rng(derive_seed(seed, {hash_name("stylizer")}));
  const int s = arch.stem_channels, m = arch.mid_channels, b = arch.body_channels;
  stem_ = nn::Conv2d("stem", 3, s, 9, 1, true, rng);
  stem_.set_input_grad(false);
  stem_norm_ = nn::InstanceNorm2d("stem_norm", s);
  down1_ = nn::Conv2d("down1", s, m, 3, 2, true, rng);
  down1_norm_ = nn::InstanceNorm2d("down1_norm", m);
  down2_ = nn::Conv2d("down2", m, b, 3, 2, true, rng);
  down2_norm_ = nn::InstanceNorm2d("down2_norm", b);
  for (int i = 0; i < arch.residual_blocks; ++i) {
    const std::string p = "res" + std::to_string(i);
    blocks_.push_back({nn::Conv2d(p + ".a", b, b, 3, 1, true, rng), nn::Conv2d(p + ".b", b, b, 3, 1, true, rng),
                       nn::InstanceNorm2d(p + ".norm_a", b), nn::InstanceNorm2d(p + ".norm_b", b), {}});
  }
  up1_ = nn::Conv2d("up1", b, s, 3, 1, true, rng);
  up1_norm_ = nn::InstanceNorm2d("up1_norm", s);
  head_ = nn::Conv2d("head", s, 3, 9, 1, true, rng);
}

NeuralStylizer::NeuralStylizer(const NeuralStylizerParams& params) : NeuralStylizer(params.arch, 0) {
  import_params(params);
}

Tensor NeuralStylizer::forward(const Tensor& x) {
  if (x.h() % 4 != 0 || x.w() % 4 != 0) throw Error("stylizer: input dimensions must be divisible by 4");
  Tensor h = stem_relu_.forward(stem_norm_.forward(stem_.forward(x)));
  h = down1_relu_.forward(down1_norm_.forward(down1_.forward(h)));
  h = down2_relu_.forward(down2_norm_.forward(down2_.forward(h)));
  for (auto& blk : blocks_) {
    Tensor r = blk.relu.forward(blk.norm_a.forward(blk.conv_a.forward(h)));
    r = blk.norm_b.forward(blk.conv_b.forward(r));
    r.add_(h);
    h = std::move(r);
  }
  h = up1_relu_.forward(up1_norm_.forward(up1_.forward(upsample_.forward(h))));
  return out_.forward(head_.forward(upsample_.forward(h)));
}

Tensor NeuralStylizer::infer(const Tensor& x) const {
  if (x.h() % 4 != 0 || x.w() % 4 != 0) throw Error("stylizer: input dimensions must be divisible by 4");
  Tensor h = stem_relu_.infer(stem_norm_.infer(stem_.infer(x)));
  h = down1_relu_.infer(down1_norm_.infer(down1_.infer(h)));
  h = down2_relu_.infer(down2_norm_.infer(down2_.infer(h)));
  for (const auto& blk : blocks_) {
    Tensor r = blk.relu.infer(blk.norm_a.infer(blk.conv_a.infer(h)));
    r = blk.norm_b.infer(blk.conv_b.infer(r));
    r.add_(h);
    h = std::move(r);
  }
  h = up1_relu_.infer(up1_norm_.infer(up1_.infer(upsample_.infer(h))));
  return out_.infer(head_.infer(upsample_.infer(h)));
}

void NeuralStylizer::backward(const Tensor& dy) {
  Tensor g = upsample_.backward(head_.backward(out_.backward(dy)));
  g = upsample_.backward(up1_.backward(up1_norm_.backward(up1_relu_.backward(g))));
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    Tensor r = it->conv_b.backward(it->norm_b.backward(g));
    r = it->conv_a.backward(it->norm_a.backward(it->relu.backward(r)));
    g.add_(r);
  }
  g = down2_.backward(down2_norm_.backward(down2_relu_.backward(g)));
  g = down1_.backward(down1_norm_.backward(down1_relu_.backward(g)));
  stem_.backward(stem_norm_.backward(stem_relu_.backward(g)));
}

Image NeuralStylizer::apply(const Image& img) const {
  const int h = img.height(), w = img.width();
  const int ph = (h + 3) / 4 * 4, pw = (w + 3) / 4 * 4;
  Tensor x(1, 3, ph, pw);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < ph; ++y)
      for (int xx = 0; xx < pw; ++xx) x.at(0, c, y, xx) = img.at(c, std::min(y, h - 1), std::min(xx, w - 1));
  const Tensor y = infer(x);
  Image out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) out.at(c, yy, xx) = y.at(0, c, yy, xx);
  out.clamp01();
  return out;
}

std::vector<nn::Parameter*> NeuralStylizer::parameters() {
  std::vector<nn::Parameter*> p;
  stem_.parameters(p);
  stem_norm_.parameters(p);
  down1_.parameters(p);
  down1_norm_.parameters(p);
  down2_.parameters(p);
  down2_norm_.parameters(p);
  for (auto& blk : blocks_) {
    blk.conv_a.parameters(p);
    blk.norm_a.parameters(p);
    blk.conv_b.parameters(p);
    blk.norm_b.parameters(p);
  }
  up1_.parameters(p);
  up1_norm_.parameters(p);
  head_.parameters(p);
  return p;
}

NeuralStylizerParams NeuralStylizer::export_params() const {
  NeuralStylizerParams out{arch_, {}};
  for (auto* p : const_cast<NeuralStylizer*>(this)->parameters())
    out.values.insert(out.values.end(), p->value.span().begin(), p->value.span().end());
  return out;
}

void NeuralStylizer::import_params(const NeuralStylizerParams& params) {
  if (!(params.arch == arch_)) throw DataError("stylizer parameters were produced for a different architecture");
  auto ps = parameters();
  if (params.values.size() != nn::count_parameters(ps))
    throw DataError("stylizer parameter blob has " + std::to_string(params.values.size()) + " values, expected " +
                    std::to_string(nn::count_parameters(ps)));
  std::size_t off = 0;
  for (auto* p : ps) {
    std::copy_n(params.values.begin() + static_cast<std::ptrdiff_t>(off), p->value.size(), p->value.data());
    off += p->value.size();
  }
}

// ------------------------------------------------------------- training

namespace {

/// Fixed random feature extractor used only to measure stylization losses.
class LossNetwork {
 public:
  static constexpr int kLayers = 3;
  static constexpr int kContentLayer = 1;

  explicit LossNetwork(std::uint64_t seed) {
    Rng rng(derive_seed(seed, {hash_name("loss-network")}));
    const int widths[kLayers + 1] = {3, 16, 32, 64};
    for (int i = 0; i < kLayers; ++i) {
      convs_[i] = nn::Conv2d("loss" + std::to_string(i), widths[i], widths[i + 1], 3, i == 0 ? 1 : 2, true, rng);
      convs_[i].set_frozen(true);
    }
  }

  std::array<Tensor, kLayers> forward(const Tensor& x) {
    std::array<Tensor, kLayers> feats;
    Tensor h = x;
    for (int i = 0; i < kLayers; ++i) {
      h = relus_[i].forward(convs_[i].forward(h));
      feats[i] = h;
    }
    return feats;
  }

  std::array<Tensor, kLayers> infer(const Tensor& x) const {
    std::array<Tensor, kLayers> feats;
    Tensor h = x;
    for (int i = 0; i < kLayers; ++i) {
      h = relus_[i].infer(convs_[i].infer(h));
      feats[i] = h;
    }
    return feats;
  }

  /// `grads[i]` is dL/d(output of layer i); returns dL/dx.
  Tensor backward(std::array<Tensor, kLayers>& grads) {
    Tensor g = grads[kLayers - 1];
    for (int i = kLayers - 1; i >= 0; --i) {
      if (i < kLayers - 1) g.add_(grads[i]);
      g = convs_[i].backward(relus_[i].backward(g));
    }
    return g;
  }

 private:
  std::array<nn::Conv2d, kLayers> convs_;
  std::array<nn::ReLU, kLayers> relus_;
};

struct ChannelStats {
  std::vector<double> mean, std;
};

constexpr double kStatEps = 1e-5;

ChannelStats channel_stats(const Tensor& f) {
  ChannelStats s{std::vector<double>(f.c()), std::vector<double>(f.c())};
  const double count = static_cast<double>(f.n()) * f.plane();
  for (int c = 0; c < f.c(); ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < f.n(); ++n) {
      const float* p = f.plane_ptr(n, c);
      for (std::size_t i = 0; i < f.plane(); ++i) sum += p[i];
    }
    const double mu = sum / count;
    for (int n = 0; n < f.n(); ++n) {
      const float* p = f.plane_ptr(n, c);
      for (std::size_t i = 0; i < f.plane(); ++i) sq += (p[i] - mu) * (p[i] - mu);
    }
    s.mean[c] = mu;
    s.std[c] = std::sqrt(sq / count + kStatEps);
  }
  return s;
}

/// Style term for one layer, (1/C) sum_c (mu - mu_t)^2 + (sigma - sigma_t)^2,
/// and its gradient w.r.t. the features.
double style_term(const Tensor& f, const ChannelStats& target, Tensor& grad, double weight) {
  const ChannelStats s = channel_stats(f);
  const double count = static_cast<double>(f.n()) * f.plane();
  const double inv_c = 1.0 / f.c();
  double loss = 0.0;
  grad = Tensor(f.n(), f.c(), f.h(), f.w());
  for (int c = 0; c < f.c(); ++c) {
    const double dm = s.mean[c] - target.mean[c];
    const double ds = s.std[c] - target.std[c];
    loss += inv_c * (dm * dm + ds * ds);
    const double gm = weight * inv_c * 2.0 * dm / count;
    const double gs = weight * inv_c * 2.0 * ds / (count * s.std[c]);
    for (int n = 0; n < f.n(); ++n) {
      const float* p = f.plane_ptr(n, c);
      float* g = grad.plane_ptr(n, c);
      for (std::size_t i = 0; i < f.plane(); ++i) g[i] = static_cast<float>(gm + gs * (p[i] - s.mean[c]));
    }
  }
  return loss;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t(1, 3, img.height(), img.width());
  std::copy(img.data().begin(), img.data().end(), t.data());
  return t;
}

}  // namespace

NeuralStylizerParams train_neural_stylizer(const Image& style, std::span<const Image> content_images,
                                           const StylizerTrainConfig& cfg, const StylizerArch& arch,
                                           StylizerTrainReport* report) {
  if (content_images.empty()) throw ConfigError("stylizer training needs at least one content image");
  if (cfg.steps < 0) throw ConfigError("stylizer training: steps must be >= 0");
  if (cfg.crop_size < 8 || cfg.crop_size % 4 != 0) throw ConfigError("stylizer training: crop_size must be a multiple of 4, >= 8");

  NeuralStylizer net(arch, cfg.seed);
  if (cfg.steps == 0) return net.export_params();

  LossNetwork loss_net(cfg.seed);
  const int crop_size = cfg.crop_size;
  const Image style_resized = resize_bilinear(style, crop_size, crop_size);
  const auto style_feats = loss_net.infer(image_to_tensor(style_resized));
  std::array<ChannelStats, LossNetwork::kLayers> targets;
  for (int i = 0; i < LossNetwork::kLayers; ++i) targets[i] = channel_stats(style_feats[i]);

  nn::Adam opt(net.parameters(), {.lr = cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, {hash_name("stylizer-crops")}));
  for (int step = 0; step < cfg.steps; ++step) {
    const Image& src = content_images[rng.uniform_int(content_images.size())];
    Image patch;
    if (src.height() >= crop_size && src.width() >= crop_size) {
      const int y0 = rng.uniform_int(0, src.height() - crop_size);
      const int x0 = rng.uniform_int(0, src.width() - crop_size);
      patch = crop(src, y0, x0, crop_size, crop_size);
    } else {
      patch = resize_bilinear(src, crop_size, crop_size);
    }
    const Tensor x = image_to_tensor(patch);
    const auto content_feats = loss_net.infer(x);

    opt.zero_grad();
    const Tensor y = net.forward(x);
    auto feats = loss_net.forward(y);
    std::array<Tensor, LossNetwork::kLayers> grads;
    double loss = 0.0;
    for (int i = 0; i < LossNetwork::kLayers; ++i)
      loss += cfg.style_weight * style_term(feats[i], targets[i], grads[i], cfg.style_weight);
    {
      const Tensor& f = feats[LossNetwork::kContentLayer];
      const Tensor& t = content_feats[LossNetwork::kContentLayer];
      const double inv = 1.0 / static_cast<double>(f.size());
      Tensor& g = grads[LossNetwork::kContentLayer];
      double content = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double d = f.data()[i] - t.data()[i];
        content += d * d * inv;
        g.data()[i] += static_cast<float>(cfg.content_weight * 2.0 * d * inv);
      }
      loss += cfg.content_weight * content;
    }
    if (!std::isfinite(loss))
      throw DivergenceError("stylizer training diverged at step " + std::to_string(step) + " (loss " +
                            std::to_string(loss) + ")");
    if (report) {
      if (step == 0) report->initial_loss = loss;
      report->final_loss = loss;
    }
    net.backward(loss_net.backward(grads));
    opt.step();
  }
  return net.export_params();
}

}  // namespace dgseg
