#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssit/params.hpp"

namespace ssit {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of a single array. `t` is the 1-based step
// count after the update being applied.
void adam_step(std::span<float> param, std::span<const float> grad,
               std::span<float> m, std::span<float> v, uint64_t t,
               const AdamConfig& cfg);

// Adam over a fixed slice of the parameter store. The moment buffers live in
// the store so checkpoints capture optimizer state; only the step counter is
// held here.
class Adam {
 public:
  Adam(AdamConfig cfg, std::vector<size_t> param_ids)
      : cfg_(cfg), ids_(std::move(param_ids)) {}

  void step(ParamStore& store);
  uint64_t step_count() const { return t_; }
  void set_step_count(uint64_t t) { t_ = t; }
  const std::vector<size_t>& param_ids() const { return ids_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<size_t> ids_;
  uint64_t t_ = 0;
};

}  // namespace ssit
