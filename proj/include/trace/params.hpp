#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "trace/tensor.hpp"

namespace trace {

// Named learnable tensors with gradient buffers of identical shape.
template <class Real>
class ModelParams {
 public:
  std::size_t add(const std::string& name, Tensor<Real> init) {
    require(!index_.contains(name), ErrorCategory::kInvalidArgument, "duplicate parameter name: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    grads_.emplace_back(init.rows(), init.cols());
    values_.push_back(std::move(init));
    return names_.size() - 1;
  }

  std::size_t count() const { return names_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorCategory::kInvalidArgument, "unknown parameter: " + name);
    return it->second;
  }

  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  Tensor<Real>& value(std::size_t i) { return values_[i]; }
  const Tensor<Real>& value(std::size_t i) const { return values_[i]; }
  Tensor<Real>& value(const std::string& n) { return values_[index(n)]; }
  const Tensor<Real>& value(const std::string& n) const { return values_[index(n)]; }
  Tensor<Real>& grad(std::size_t i) { return grads_[i]; }
  const Tensor<Real>& grad(std::size_t i) const { return grads_[i]; }
  Tensor<Real>& grad(const std::string& n) { return grads_[index(n)]; }

  void zero_grads() {
    for (auto& g : grads_) g.fill(Real(0));
  }
  bool all_finite() const {
    for (const auto& v : values_) {
      if (!v.all_finite()) return false;
    }
    return true;
  }

  template <class Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], values_[i].template cast<Other>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<Real>> values_;
  std::vector<Tensor<Real>> grads_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace trace
