#pragma once

#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssit/tensor.hpp"

namespace ssit {

// One learnable array plus its gradient accumulator and Adam moments. Value
// and grad buffers are shared with graph leaves, so a backward pass writes
// straight into `grad`.
struct Param {
  std::string name;
  Shape shape;
  std::shared_ptr<std::vector<float>> value;
  std::shared_ptr<std::vector<float>> grad;
  std::shared_ptr<std::vector<float>> adam_m;
  std::shared_ptr<std::vector<float>> adam_v;
  int64_t numel = 0;
  bool discriminator = false;  // min/max partition of the objective
};

class ParamStore {
 public:
  size_t add(std::string name, Shape shape);
  Param& operator[](size_t i) { return params_[i]; }
  const Param& operator[](size_t i) const { return params_[i]; }
  size_t size() const { return params_.size(); }
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  void zero_grads(std::span<const size_t> ids);
  int64_t total_parameters() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, size_t> by_name_;
};

}  // namespace ssit
