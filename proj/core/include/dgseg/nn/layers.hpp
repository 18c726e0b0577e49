#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgseg/nn/tensor.hpp"
#include "dgseg/rng.hpp"

namespace dgseg::nn {

// Every layer follows the same protocol:
//   forward(x)   training pass; caches whatever backward needs
//   infer(x)     const pass with no side effects (inference mode)
//   backward(dy) returns dL/dx and accumulates parameter gradients
// Persistent tensors are exposed through parameters() (trainable) and
// buffers() (running statistics).

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, bool bias, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy);

  /// Skip computing dL/dx (first layer of a network).
  void set_input_grad(bool on) { input_grad_ = on; }
  /// Skip accumulating parameter gradients (fixed feature extractors).
  void set_frozen(bool on) { frozen_ = on; }

  void parameters(std::vector<Parameter*>& out);
  std::size_t parameter_count() const;
  int out_channels() const { return out_ch_; }

 private:
  Tensor run(const Tensor& x, std::vector<FloatBuffer>* cols) const;

  int in_ch_ = 0, out_ch_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
  bool has_bias_ = true;
  bool input_grad_ = true;
  bool frozen_ = false;
  Parameter weight_;  // out x (in*k*k)
  Parameter bias_;    // 1 x out
  std::vector<FloatBuffer> cols_;
  int in_h_ = 0, in_w_ = 0, in_n_ = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);

  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy);

  void parameters(std::vector<Parameter*>& out);
  void buffers(std::vector<Tensor*>& out);
  std::size_t parameter_count() const { return 2 * static_cast<std::size_t>(channels_); }

 private:
  int channels_ = 0;
  float momentum_ = 0.1f, eps_ = 1e-5f;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

/// Per-sample, per-channel normalization with a learned affine transform.
class InstanceNorm2d {
 public:
  InstanceNorm2d() = default;
  InstanceNorm2d(std::string name, int channels, float eps = 1e-5f);

  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy);

  void parameters(std::vector<Parameter*>& out);
  std::size_t parameter_count() const { return 2 * static_cast<std::size_t>(channels_); }

 private:
  Tensor run(const Tensor& x, Tensor* xhat, std::vector<float>* inv_std) const;

  int channels_ = 0;
  float eps_ = 1e-5f;
  Parameter gamma_, beta_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor out_;
};

class Sigmoid {
 public:
  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor out_;
};

/// 2x2 max pooling with stride 2. Ties resolve to the first element in raster order.
class MaxPool2 {
 public:
  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor run(const Tensor& x, std::vector<std::uint32_t>* argmax) const;
  std::vector<std::uint32_t> argmax_;
  int in_h_ = 0, in_w_ = 0;
};

/// Nearest-neighbour 2x upsampling.
class Upsample2 {
 public:
  Tensor forward(const Tensor& x) const { return infer(x); }
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy) const;
};

/// Bilinear resize to a fixed output size (half-pixel centres).
class BilinearResize {
 public:
  BilinearResize() = default;
  BilinearResize(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}

  void set_output(int out_h, int out_w) { out_h_ = out_h; out_w_ = out_w; }
  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy) const;

 private:
  int out_h_ = 0, out_w_ = 0;
  int in_h_ = 0, in_w_ = 0;
};

void zero_grad(const std::vector<Parameter*>& params);
std::size_t count_parameters(const std::vector<Parameter*>& params);

/// 64-bit FNV-1a over the raw bytes of every tensor, in order.
std::uint64_t hash_tensors(const std::vector<const Tensor*>& tensors);

}  // namespace dgseg::nn
