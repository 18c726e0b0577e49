#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dgseg/image.hpp"
#include "dgseg/nn/layers.hpp"

namespace dgseg {

/// Widths of the feed-forward stylizer. The defaults give 63,747 parameters.
struct StylizerArch {
  int stem_channels = 16;
  int mid_channels = 32;
  int body_channels = 32;
  int residual_blocks = 2;

  friend bool operator==(const StylizerArch&, const StylizerArch&) = default;
};

/// Parameter count implied by `arch`, without building the network.
std::size_t stylizer_parameter_count(const StylizerArch& arch);

/// Flat parameter vector of one trained stylizer.
struct NeuralStylizerParams {
  StylizerArch arch;
  std::vector<float> values;

  std::size_t parameter_count() const noexcept { return values.size(); }
  friend bool operator==(const NeuralStylizerParams&, const NeuralStylizerParams&) = default;
};

/// Image-to-image network: 9x9 stem, two stride-2 downsampling convs,
/// residual body, nearest-upsample decoder, sigmoid output. Instance
/// normalization throughout.
class NeuralStylizer {
 public:
  NeuralStylizer(const StylizerArch& arch, std::uint64_t seed);
  explicit NeuralStylizer(const NeuralStylizerParams& params);

  /// Input and output are N x 3 x H x W with H, W divisible by 4.
  nn::Tensor forward(const nn::Tensor& x);
  nn::Tensor infer(const nn::Tensor& x) const;
  void backward(const nn::Tensor& dy);

  /// Any H x W: edges are replicated to the next multiple of 4 and cropped back.
  Image apply(const Image& img) const;

  std::vector<nn::Parameter*> parameters();
  NeuralStylizerParams export_params() const;
  void import_params(const NeuralStylizerParams& p);
  const StylizerArch& arch() const noexcept { return arch_; }

 private:
  struct ResBlock {
    nn::Conv2d conv_a, conv_b;
    nn::InstanceNorm2d norm_a, norm_b;
    nn::ReLU relu;
  };

  StylizerArch arch_;
  nn::Conv2d stem_, down1_, down2_, up1_, head_;
  nn::InstanceNorm2d stem_norm_, down1_norm_, down2_norm_, up1_norm_;
  nn::ReLU stem_relu_, down1_relu_, down2_relu_, up1_relu_;
  std::vector<ResBlock> blocks_;
  nn::Upsample2 upsample_;
  nn::Sigmoid out_;
};

struct StylizerTrainConfig {
  int steps = 600;
  double learning_rate = 3e-3;
  int crop_size = 32;
  double content_weight = 5.0;
  double style_weight = 5.0;
  std::uint64_t seed = 0;
};

struct StylizerTrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Trains a stylizer for one style image with a content term (feature MSE)
/// and a style term (per-channel mean/std matching) measured by a fixed,
/// seeded random convolutional feature extractor. Throws DivergenceError if
/// the loss becomes non-finite.
NeuralStylizerParams train_neural_stylizer(const Image& style, std::span<const Image> content_images,
                                           const StylizerTrainConfig& cfg, const StylizerArch& arch = {},
                                           StylizerTrainReport* report = nullptr);

}  // namespace dgseg
