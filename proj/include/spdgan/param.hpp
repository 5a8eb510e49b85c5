#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "spdgan/tensor.hpp"

namespace spdgan {

/// Trainable value with its gradient accumulator and Adam moments.
/// Non-trainable buffers (running statistics, power-iteration vectors) use the
/// same record so they travel through checkpoints uniformly.
template <typename Scalar>
struct Param {
  std::string name;
  Tensor4<Scalar> value;
  Tensor4<Scalar> grad;
  Tensor4<Scalar> adam_m;
  Tensor4<Scalar> adam_v;
  std::int64_t adam_step = 0;
  bool trainable = true;

  Param(std::string name_, Tensor4<Scalar> init, bool trainable_)
      : name(std::move(name_)),
        value(std::move(init)),
        grad(value.shape()),
        trainable(trainable_) {}

  const Shape4& shape() const { return value.shape(); }
  void zero_grad() { grad.array().setZero(); }
};

/// Owns a named, ordered collection of Params. Addresses are stable.
template <typename Scalar>
class ParamStore {
 public:
  using ParamT = Param<Scalar>;

  ParamT& add(std::string name, Tensor4<Scalar> init, bool trainable = true) {
    if (find(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<ParamT>(std::move(name), std::move(init), trainable));
    return *params_.back();
  }

  ParamT* find(std::string_view name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const ParamT* find(std::string_view name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  ParamT& at(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter: " + std::string(name));
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p->value.size();
    return total;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<ParamT>> params_;
};

}  // namespace spdgan
