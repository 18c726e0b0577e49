#include "dgseg/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dgseg/error.hpp"

namespace dgseg::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void im2col(const float* in, int ch, int h, int w, int k, int stride, int pad, int oh, int ow, float* col) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < ch; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * cols;
        const float* plane = in + static_cast<std::size_t>(c) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          float* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int lo = std::min(ow, std::max(0, pad - kx));
            const int hi = std::max(lo, std::min(ow, w + pad - kx));
            std::fill(dst, dst + lo, 0.0f);
            if (hi > lo) std::memcpy(dst + lo, src + lo - pad + kx, sizeof(float) * (hi - lo));
            std::fill(dst + hi, dst + ow, 0.0f);
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
            }
          }
        }
      }
}

void col2im(const float* col, int ch, int h, int w, int k, int stride, int pad, int oh, int ow, float* out) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < ch; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * cols;
        float* plane = out + static_cast<std::size_t>(c) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const float* src = row + static_cast<std::size_t>(oy) * ow;
          float* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, bool bias, Rng& rng)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(kernel / 2), has_bias_(bias) {
  const int fan_in = in_ch * kernel * kernel;
  weight_ = {name + ".weight", Tensor(1, 1, out_ch, fan_in), Tensor(1, 1, out_ch, fan_in)};
  const double std_dev = std::sqrt(2.0 / fan_in);
  for (auto& v : weight_.value.span()) v = static_cast<float>(std_dev * rng.normal());
  if (has_bias_) bias_ = {name + ".bias", Tensor(1, 1, 1, out_ch), Tensor(1, 1, 1, out_ch)};
}

Tensor Conv2d::run(const Tensor& x, std::vector<FloatBuffer>* cols) const {
  if (x.c() != in_ch_)
    throw Error("Conv2d(" + weight_.name + "): expected " + std::to_string(in_ch_) + " channels, got " + x.shape_string());
  const int oh = (x.h() + 2 * pad_ - kernel_) / stride_ + 1;
  const int ow = (x.w() + 2 * pad_ - kernel_) / stride_ + 1;
  const int rows = in_ch_ * kernel_ * kernel_;
  const std::size_t ncol = static_cast<std::size_t>(oh) * ow;
  Tensor y(x.n(), out_ch_, oh, ow);
  ConstMapMat W(weight_.value.data(), out_ch_, rows);
  FloatBuffer scratch;
  if (cols) cols->assign(x.n(), {});
  for (int n = 0; n < x.n(); ++n) {
    FloatBuffer& col = cols ? (*cols)[n] : scratch;
    col.resize(static_cast<std::size_t>(rows) * ncol);
    im2col(x.item_ptr(n), in_ch_, x.h(), x.w(), kernel_, stride_, pad_, oh, ow, col.data());
    MapMat Y(y.item_ptr(n), out_ch_, static_cast<Eigen::Index>(ncol));
    Y.noalias() = W * ConstMapMat(col.data(), rows, static_cast<Eigen::Index>(ncol));
    if (has_bias_)
      for (int o = 0; o < out_ch_; ++o) Y.row(o).array() += bias_.value.data()[o];
  }
  return y;
}

Tensor Conv2d::forward(const Tensor& x) {
  in_n_ = x.n();
  in_h_ = x.h();
  in_w_ = x.w();
  return run(x, &cols_);
}

Tensor Conv2d::infer(const Tensor& x) const { return run(x, nullptr); }

Tensor Conv2d::backward(const Tensor& dy) {
  const int oh = dy.h();
  const int ow = dy.w();
  const int rows = in_ch_ * kernel_ * kernel_;
  const auto ncol = static_cast<Eigen::Index>(oh) * ow;
  if (dy.n() != in_n_ || static_cast<int>(cols_.size()) != in_n_) throw Error("Conv2d::backward without forward");
  Tensor dx;
  if (input_grad_) dx = Tensor(in_n_, in_ch_, in_h_, in_w_);
  ConstMapMat W(weight_.value.data(), out_ch_, rows);
  MapMat dW(weight_.grad.data(), out_ch_, rows);
  FloatBuffer dcol;
  for (int n = 0; n < in_n_; ++n) {
    ConstMapMat DY(dy.item_ptr(n), out_ch_, ncol);
    ConstMapMat col(cols_[n].data(), rows, ncol);
    if (!frozen_) {
      dW.noalias() += DY * col.transpose();
      if (has_bias_)
        for (int o = 0; o < out_ch_; ++o) bias_.grad.data()[o] += DY.row(o).sum();
    }
    if (input_grad_) {
      dcol.resize(static_cast<std::size_t>(rows) * ncol);
      MapMat DC(dcol.data(), rows, ncol);
      DC.noalias() = W.transpose() * DY;
      col2im(dcol.data(), in_ch_, in_h_, in_w_, kernel_, stride_, pad_, oh, ow, dx.item_ptr(n));
    }
  }
  return dx;
}

void Conv2d::parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

std::size_t Conv2d::parameter_count() const {
  return weight_.value.size() + (has_bias_ ? bias_.value.size() : 0);
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels, float momentum, float eps)
    : channels_(channels), momentum_(momentum), eps_(eps),
      gamma_{name + ".gamma", Tensor(1, 1, 1, channels, 1.0f), Tensor(1, 1, 1, channels)},
      beta_{name + ".beta", Tensor(1, 1, 1, channels), Tensor(1, 1, 1, channels)},
      running_mean_(1, 1, 1, channels, 0.0f),
      running_var_(1, 1, 1, channels, 1.0f) {}

Tensor BatchNorm2d::forward(const Tensor& x) {
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(x.n()) * plane;
  Tensor y(x.n(), x.c(), x.h(), x.w());
  xhat_ = Tensor(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(channels_, 0.0f);
  for (int c = 0; c < channels_; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const float* p = x.plane_ptr(n, c);
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    }
    const double mean = sum / count;
    for (int n = 0; n < x.n(); ++n) {
      const float* p = x.plane_ptr(n, c);
      for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    const double var = sq / count;
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = static_cast<float>(inv);
    const float g = gamma_.value.data()[c];
    const float b = beta_.value.data()[c];
    for (int n = 0; n < x.n(); ++n) {
      const float* p = x.plane_ptr(n, c);
      float* xh = xhat_.plane_ptr(n, c);
      float* out = y.plane_ptr(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = static_cast<float>((p[i] - mean) * inv);
        out[i] = g * xh[i] + b;
      }
    }
    const double unbiased = count > 1 ? sq / (count - 1) : var;
    running_mean_.data()[c] = static_cast<float>((1 - momentum_) * running_mean_.data()[c] + momentum_ * mean);
    running_var_.data()[c] = static_cast<float>((1 - momentum_) * running_var_.data()[c] + momentum_ * unbiased);
  }
  return y;
}

Tensor BatchNorm2d::infer(const Tensor& x) const {
  Tensor y(x.n(), x.c(), x.h(), x.w());
  const std::size_t plane = x.plane();
  for (int c = 0; c < channels_; ++c) {
    const float inv = 1.0f / std::sqrt(running_var_.data()[c] + eps_);
    const float scale = gamma_.value.data()[c] * inv;
    const float shift = beta_.value.data()[c] - running_mean_.data()[c] * scale;
    for (int n = 0; n < x.n(); ++n) {
      const float* p = x.plane_ptr(n, c);
      float* out = y.plane_ptr(n, c);
      for (std::size_t i = 0; i < plane; ++i) out[i] = p[i] * scale + shift;
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const std::size_t plane = dy.plane();
  const double count = static_cast<double>(dy.n()) * plane;
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const float* g = dy.plane_ptr(n, c);
      const float* xh = xhat_.plane_ptr(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xh += g[i] * xh[i];
      }
    }
    gamma_.grad.data()[c] += static_cast<float>(sum_dy_xh);
    beta_.grad.data()[c] += static_cast<float>(sum_dy);
    const double k = gamma_.value.data()[c] * inv_std_[c] / count;
    for (int n = 0; n < dy.n(); ++n) {
      const float* g = dy.plane_ptr(n, c);
      const float* xh = xhat_.plane_ptr(n, c);
      float* out = dx.plane_ptr(n, c);
      for (std::size_t i = 0; i < plane; ++i)
        out[i] = static_cast<float>(k * (count * g[i] - sum_dy - xh[i] * sum_dy_xh));
    }
  }
  return dx;
}

void BatchNorm2d::parameters(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm2d::buffers(std::vector<Tensor*>& out) {
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// --------------------------------------------------------- InstanceNorm2d

InstanceNorm2d::InstanceNorm2d(std::string name, int channels, float eps)
    : channels_(channels), eps_(eps),
      gamma_{name + ".gamma", Tensor(1, 1, 1, channels, 1.0f), Tensor(1, 1, 1, channels)},
      beta_{name + ".beta", Tensor(1, 1, 1, channels), Tensor(1, 1, 1, channels)} {}

Tensor InstanceNorm2d::run(const Tensor& x, Tensor* xhat, std::vector<float>* inv_std) const {
  const std::size_t plane = x.plane();
  Tensor y(x.n(), x.c(), x.h(), x.w());
  if (xhat) *xhat = Tensor(x.n(), x.c(), x.h(), x.w());
  if (inv_std) inv_std->assign(static_cast<std::size_t>(x.n()) * channels_, 0.0f);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < channels_; ++c) {
      const float* p = x.plane_ptr(n, c);
      double sum = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      const double mean = sum / plane;
      for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
      const double inv = 1.0 / std::sqrt(sq / plane + eps_);
      if (inv_std) (*inv_std)[static_cast<std::size_t>(n) * channels_ + c] = static_cast<float>(inv);
      const float g = gamma_.value.data()[c];
      const float b = beta_.value.data()[c];
      float* out = y.plane_ptr(n, c);
      float* xh = xhat ? xhat->plane_ptr(n, c) : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const float v = static_cast<float>((p[i] - mean) * inv);
        if (xh) xh[i] = v;
        out[i] = g * v + b;
      }
    }
  return y;
}

Tensor InstanceNorm2d::forward(const Tensor& x) { return run(x, &xhat_, &inv_std_); }
Tensor InstanceNorm2d::infer(const Tensor& x) const { return run(x, nullptr, nullptr); }

Tensor InstanceNorm2d::backward(const Tensor& dy) {
  const std::size_t plane = dy.plane();
  const double count = static_cast<double>(plane);
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < channels_; ++c) {
      const float* g = dy.plane_ptr(n, c);
      const float* xh = xhat_.plane_ptr(n, c);
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xh += g[i] * xh[i];
      }
      gamma_.grad.data()[c] += static_cast<float>(sum_dy_xh);
      beta_.grad.data()[c] += static_cast<float>(sum_dy);
      const double k = gamma_.value.data()[c] * inv_std_[static_cast<std::size_t>(n) * channels_ + c] / count;
      float* out = dx.plane_ptr(n, c);
      for (std::size_t i = 0; i < plane; ++i)
        out[i] = static_cast<float>(k * (count * g[i] - sum_dy - xh[i] * sum_dy_xh));
    }
  return dx;
}

void InstanceNorm2d::parameters(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ------------------------------------------------------------ activations

Tensor ReLU::infer(const Tensor& x) const {
  Tensor y = x;
  for (auto& v : y.span()) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor ReLU::forward(const Tensor& x) {
  out_ = infer(x);
  return out_;
}

Tensor ReLU::backward(const Tensor& dy) const {
  Tensor dx = dy;
  const float* o = out_.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (o[i] <= 0.0f) d[i] = 0.0f;
  return dx;
}

Tensor Sigmoid::infer(const Tensor& x) const {
  Tensor y = x;
  for (auto& v : y.span()) v = 1.0f / (1.0f + std::exp(-v));
  return y;
}

Tensor Sigmoid::forward(const Tensor& x) {
  out_ = infer(x);
  return out_;
}

Tensor Sigmoid::backward(const Tensor& dy) const {
  Tensor dx = dy;
  const float* o = out_.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) d[i] *= o[i] * (1.0f - o[i]);
  return dx;
}

// --------------------------------------------------------------- pooling

Tensor MaxPool2::run(const Tensor& x, std::vector<std::uint32_t>* argmax) const {
  const int oh = x.h() / 2;
  const int ow = x.w() / 2;
  Tensor y(x.n(), x.c(), oh, ow);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t idx = 0;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const float* p = x.plane_ptr(n, c);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox, ++idx) {
          std::uint32_t best = static_cast<std::uint32_t>(2 * oy * x.w() + 2 * ox);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const auto cand = static_cast<std::uint32_t>((2 * oy + dy) * x.w() + 2 * ox + dx);
              if (p[cand] > p[best]) best = cand;
            }
          y.data()[idx] = p[best];
          if (argmax) (*argmax)[idx] = best;
        }
    }
  return y;
}

Tensor MaxPool2::forward(const Tensor& x) {
  in_h_ = x.h();
  in_w_ = x.w();
  return run(x, &argmax_);
}

Tensor MaxPool2::infer(const Tensor& x) const { return run(x, nullptr); }

Tensor MaxPool2::backward(const Tensor& dy) const {
  Tensor dx(dy.n(), dy.c(), in_h_, in_w_);
  std::size_t idx = 0;
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      float* p = dx.plane_ptr(n, c);
      for (std::size_t i = 0; i < dy.plane(); ++i, ++idx) p[argmax_[idx]] += dy.data()[idx];
    }
  return dx;
}

Tensor Upsample2::infer(const Tensor& x) const {
  Tensor y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const float* p = x.plane_ptr(n, c);
      float* o = y.plane_ptr(n, c);
      for (int yy = 0; yy < y.h(); ++yy)
        for (int xx = 0; xx < y.w(); ++xx) o[yy * y.w() + xx] = p[(yy / 2) * x.w() + xx / 2];
    }
  return y;
}

Tensor Upsample2::backward(const Tensor& dy) const {
  Tensor dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      const float* g = dy.plane_ptr(n, c);
      float* o = dx.plane_ptr(n, c);
      for (int yy = 0; yy < dy.h(); ++yy)
        for (int xx = 0; xx < dy.w(); ++xx) o[(yy / 2) * dx.w() + xx / 2] += g[yy * dy.w() + xx];
    }
  return dx;
}

// ---------------------------------------------------------- bilinear resize

namespace {

struct Tap {
  int i0, i1;
  float w0, w1;
};

std::vector<Tap> make_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double f = std::max(0.0, (o + 0.5) * scale - 0.5);
    int i0 = std::min(static_cast<int>(f), in - 1);
    int i1 = std::min(i0 + 1, in - 1);
    float w1 = static_cast<float>(f - i0);
    taps[o] = {i0, i1, 1.0f - w1, w1};
  }
  return taps;
}

}  // namespace

Tensor BilinearResize::infer(const Tensor& x) const {
  const auto ty = make_taps(x.h(), out_h_);
  const auto tx = make_taps(x.w(), out_w_);
  Tensor y(x.n(), x.c(), out_h_, out_w_);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const float* p = x.plane_ptr(n, c);
      float* o = y.plane_ptr(n, c);
      for (int yy = 0; yy < out_h_; ++yy) {
        const Tap& a = ty[yy];
        const float* r0 = p + static_cast<std::size_t>(a.i0) * x.w();
        const float* r1 = p + static_cast<std::size_t>(a.i1) * x.w();
        for (int xx = 0; xx < out_w_; ++xx) {
          const Tap& b = tx[xx];
          o[yy * out_w_ + xx] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
        }
      }
    }
  return y;
}

Tensor BilinearResize::forward(const Tensor& x) {
  in_h_ = x.h();
  in_w_ = x.w();
  return infer(x);
}

Tensor BilinearResize::backward(const Tensor& dy) const {
  const auto ty = make_taps(in_h_, out_h_);
  const auto tx = make_taps(in_w_, out_w_);
  Tensor dx(dy.n(), dy.c(), in_h_, in_w_);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      const float* g = dy.plane_ptr(n, c);
      float* o = dx.plane_ptr(n, c);
      for (int yy = 0; yy < out_h_; ++yy) {
        const Tap& a = ty[yy];
        float* r0 = o + static_cast<std::size_t>(a.i0) * in_w_;
        float* r1 = o + static_cast<std::size_t>(a.i1) * in_w_;
        for (int xx = 0; xx < out_w_; ++xx) {
          const Tap& b = tx[xx];
          const float v = g[yy * out_w_ + xx];
          r0[b.i0] += a.w0 * b.w0 * v;
          r0[b.i1] += a.w0 * b.w1 * v;
          r1[b.i0] += a.w1 * b.w0 * v;
          r1[b.i1] += a.w1 * b.w1 * v;
        }
      }
    }
  return dx;
}

// ------------------------------------------------------------------ misc

void zero_grad(const std::vector<Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
}

std::size_t count_parameters(const std::vector<Parameter*>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += p->value.size();
  return n;
}

std::uint64_t hash_tensors(const std::vector<const Tensor*>& tensors) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto* t : tensors) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t->data());
    for (std::size_t i = 0; i < t->size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

}  // namespace dgseg::nn
