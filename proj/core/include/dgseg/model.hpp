#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dgseg/image.hpp"
#include "dgseg/nn/layers.hpp"

namespace dgseg {

/// Encoder feature map, B x D x h x w.
using FeatureBatch = nn::Tensor;

struct ModelConfig {
  /// "tiny", or "pretrained:<checkpoint>" to start the tiny architecture
  /// from stored weights.
  std::string backbone = "tiny";
  int feature_dim = 64;
  int output_stride = 8;
  int num_classes = 6;
  /// Encoder stage (0..3) whose output is exposed as the feature map.
  int feature_stage = 3;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void validate(const ModelConfig& cfg);

enum class Mode { kTrain, kInference };

struct ForwardResult {
  FeatureBatch features;
  nn::Tensor logits;  // B x C x H x W
};

/// Encoder-decoder segmentation network. Four conv/BN/ReLU encoder stages
/// with 2x2 max pooling until the configured output stride is reached; the
/// decoder is a 3x3 conv block and a 1x1 classifier, bilinearly upsampled to
/// the input size.
class SegModel {
 public:
  explicit SegModel(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }

  /// kTrain uses batch statistics and caches activations for backward().
  ForwardResult forward(const nn::Tensor& images, Mode mode = Mode::kTrain);
  ForwardResult infer(const nn::Tensor& images) const;

  /// Encoder features with inference-mode normalization. Never mutates the
  /// model, so a shared snapshot may be encoded from many threads at once.
  FeatureBatch encode_frozen(const nn::Tensor& images) const;

  /// Accumulates gradients. `dfeatures` may be empty.
  void backward(const nn::Tensor& dfeatures, const nn::Tensor& dlogits);

  std::vector<nn::Parameter*> parameters();
  /// Parameters followed by normalization running statistics.
  std::vector<nn::Tensor*> state();
  std::vector<const nn::Tensor*> state() const;
  std::size_t parameter_count() const;
  std::uint64_t state_hash() const;

  /// Throws with a padding hint unless H and W are multiples of the stride.
  void check_input(const nn::Tensor& images) const;

 private:
  struct Stage {
    std::vector<nn::Conv2d> convs;
    std::vector<nn::BatchNorm2d> norms;
    std::vector<nn::ReLU> relus;
    bool pool = false;
    nn::MaxPool2 pooling;
  };

  nn::Tensor run_encoder(const nn::Tensor& x, bool train, nn::Tensor* tap);
  nn::Tensor run_encoder(const nn::Tensor& x, nn::Tensor* tap) const;

  ModelConfig cfg_;
  std::vector<Stage> stages_;
  nn::Conv2d head_conv_;
  nn::BatchNorm2d head_norm_;
  nn::ReLU head_relu_;
  nn::Conv2d classifier_;
  nn::BilinearResize upsample_;
};

/// Converts a batch of images into an N x 3 x H x W tensor.
nn::Tensor to_tensor(std::span<const Image> images);
nn::Tensor to_tensor(const Image& image);

/// Binary checkpoint: magic, format version, JSON-encoded ModelConfig and
/// parameter count, then the raw float payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const SegModel& model);
SegModel load_checkpoint(const std::filesystem::path& path);

std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace dgseg
