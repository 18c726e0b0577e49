#include "dgseg/nn/tensor.hpp"

#include <algorithm>

#include "dgseg/error.hpp"

namespace dgseg::nn {

std::string Tensor::shape_string() const {
  return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& o) {
  if (!same_shape(o)) throw Error("Tensor::add_: shape mismatch " + shape_string() + " vs " + o.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) return {};
  const Tensor& f = items.front();
  int n = 0;
  for (const auto& t : items) {
    if (t.c_ != f.c_ || t.h_ != f.h_ || t.w_ != f.w_) throw Error("Tensor::stack: shape mismatch");
    n += t.n_;
  }
  Tensor out(n, f.c_, f.h_, f.w_);
  auto it = out.data_.begin();
  for (const auto& t : items) it = std::copy(t.data_.begin(), t.data_.end(), it);
  return out;
}

Tensor Tensor::slice_batch(int n) const {
  Tensor out(1, c_, h_, w_);
  std::copy(item_ptr(n), item_ptr(n) + out.size(), out.data_.begin());
  return out;
}

}  // namespace dgseg::nn
