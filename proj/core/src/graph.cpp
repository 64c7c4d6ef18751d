#include "vnp/graph.hpp"

#include "vnp/error.hpp"

namespace vnp {

template <class S>
const Tensor<S>& ParamStore<S>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("parameter not found: " + name);
  return it->second;
}

template <class S>
Tensor<S>& ParamStore<S>::get_mut(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("parameter not found: " + name);
  return it->second;
}

template <class S>
std::size_t ParamStore<S>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

template <class S>
std::vector<std::string> ParamStore<S>::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;

template <class S>
Var<S> Graph<S>::constant(Tensor<S> value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <class S>
Var<S> Graph<S>::variable(const std::string& name, Tensor<S> value) {
  Node n;
  n.value = std::move(value);
  n.op = "variable";
  n.name = name;
  n.requires_grad = grad_enabled_;
  n.named_leaf = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <class S>
Var<S> Graph<S>::param(const ParamStore<S>& store, const std::string& name) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return {this, it->second};
  Var<S> v = variable(name, store.get(name));
  param_ids_.emplace(name, v.id);
  return v;
}

template <class S>
Var<S> Graph<S>::record_impl(std::string_view op, Tensor<S> value, const Var<S>* first, const Var<S>* last,
                             BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite output of shape " + to_string(value.shape()));
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (grad_enabled_) {
    for (const Var<S>* in = first; in != last; ++in) {
      if (in->graph != this) throw Error(std::string(op) + ": input belongs to a different graph");
      if (nodes_[in->id].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <class S>
Tensor<S>& Graph<S>::grad_buffer(int id) {
  auto& node = nodes_[id];
  if (!node.grad) node.grad = Tensor<S>::zeros(node.value.shape());
  return *node.grad;
}

template <class S>
Gradients<S> Graph<S>::backward(Var<S> loss) {
  if (!grad_enabled_) throw Error("backward: graph was built with gradients disabled");
  if (backward_done_) throw Error("backward: already called on this graph");
  const auto& lv = nodes_[loss.id].value;
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got shape " + to_string(lv.shape()));
  if (!nodes_[loss.id].requires_grad) throw Error("backward: loss is detached from every leaf");

  backward_done_ = true;
  grad_buffer(loss.id).fill(S{1});
  for (int id = loss.id; id >= 0; --id) {
    auto& node = nodes_[id];
    if (!node.backward || !node.grad) continue;
    node.backward(*this, node.value, *node.grad);
  }

  Gradients<S> out;
  for (const auto& node : nodes_) {
    if (!node.named_leaf) continue;
    out[node.name] = node.grad ? *node.grad : Tensor<S>::zeros(node.value.shape());
  }
  return out;
}

template <class S>
Tensor<S> Graph<S>::grad(Var<S> v) const {
  const auto& node = nodes_[v.id];
  return node.grad ? *node.grad : Tensor<S>::zeros(node.value.shape());
}

template class Graph<float>;
template class Graph<double>;

}  // namespace vnp
