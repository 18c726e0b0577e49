#include "dgseg/nn/adam.hpp"

#include <cmath>

#include "dgseg/nn/binary_io.hpp"

namespace dgseg::nn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.n(), p->value.c(), p->value.h(), p->value.w());
    v_.emplace_back(p->value.n(), p->value.c(), p->value.h(), p->value.w());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(cfg_.beta1);
  const auto b2 = static_cast<float>(cfg_.beta2);
  const auto step = static_cast<float>(cfg_.lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(cfg_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    float* w = params_[k]->value.data();
    const float* g = params_[k]->grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (std::size_t i = 0; i < m_[k].size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::save(std::ostream& out) const {
  write_pod<std::int64_t>(out, t_);
  write_pod<std::uint64_t>(out, m_.size());
  for (std::size_t k = 0; k < m_.size(); ++k) {
    write_tensor_data(out, m_[k]);
    write_tensor_data(out, v_[k]);
  }
}

void Adam::load(std::istream& in) {
  t_ = read_pod<std::int64_t>(in);
  if (read_pod<std::uint64_t>(in) != m_.size()) throw DataError("optimizer state parameter count mismatch");
  for (std::size_t k = 0; k < m_.size(); ++k) {
    read_tensor_data(in, m_[k]);
    read_tensor_data(in, v_[k]);
  }
}

}  // namespace dgseg::nn
