#include "ssit/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace ssit {

size_t ParamStore::add(std::string name, Shape shape) {
  if (by_name_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  Param p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  p.numel = shape_numel(p.shape);
  p.value = std::make_shared<std::vector<float>>(p.numel, 0.0f);
  p.grad = std::make_shared<std::vector<float>>(p.numel, 0.0f);
  p.adam_m = std::make_shared<std::vector<float>>(p.numel, 0.0f);
  p.adam_v = std::make_shared<std::vector<float>>(p.numel, 0.0f);
  by_name_[p.name] = params_.size();
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

Param& ParamStore::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return params_[it->second];
}

void ParamStore::zero_grads(std::span<const size_t> ids) {
  for (size_t i : ids) std::fill(params_[i].grad->begin(), params_[i].grad->end(), 0.0f);
}

int64_t ParamStore::total_parameters() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.numel;
  return n;
}

void adam_step(std::span<float> param, std::span<const float> grad,
               std::span<float> m, std::span<float> v, uint64_t t,
               const AdamConfig& cfg) {
  const float b1 = static_cast<float>(cfg.beta1);
  const float b2 = static_cast<float>(cfg.beta2);
  const float corr1 = 1.0f - static_cast<float>(std::pow(cfg.beta1, static_cast<double>(t)));
  const float corr2 = 1.0f - static_cast<float>(std::pow(cfg.beta2, static_cast<double>(t)));
  const float lr = static_cast<float>(cfg.lr);
  const float eps = static_cast<float>(cfg.eps);
  for (size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    m[i] = b1 * m[i] + (1.0f - b1) * g;
    v[i] = b2 * v[i] + (1.0f - b2) * g * g;
    const float mhat = m[i] / corr1;
    const float vhat = v[i] / corr2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void Adam::step(ParamStore& store) {
  ++t_;
  for (size_t i : ids_) {
    Param& p = store[i];
    adam_step({p.value->data(), p.value->size()}, {p.grad->data(), p.grad->size()},
              {p.adam_m->data(), p.adam_m->size()}, {p.adam_v->data(), p.adam_v->size()},
              t_, cfg_);
  }
}

}  // namespace ssit
