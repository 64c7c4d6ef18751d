#pragma once

#include <map>
#include <string>
#include <vector>

#include "vnp/tensor.hpp"

namespace vnp {

/// Named parameter arrays. Ordered by name so iteration (and therefore
/// checkpoints and optimizer updates) is deterministic.
template <class S>
class ParamStore {
 public:
  void set(const std::string& name, Tensor<S> value) { params_[name] = std::move(value); }
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor<S>& get(const std::string& name) const;
  Tensor<S>& get_mut(const std::string& name);

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;
  std::vector<std::string> names() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  template <class T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (const auto& [name, t] : params_) out.set(name, t.template cast<T>());
    return out;
  }

  bool operator==(const ParamStore& other) const = default;

 private:
  std::map<std::string, Tensor<S>> params_;
};

/// Gradients keyed like the ParamStore they were taken against.
template <class S>
using Gradients = std::map<std::string, Tensor<S>>;

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace vnp
