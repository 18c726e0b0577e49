#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dgseg/nn/tensor.hpp"

namespace dgseg::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Holds first/second moment estimates for a fixed
/// list of parameters; the list must not change between steps.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step();
  void zero_grad();
  std::int64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace dgseg::nn
