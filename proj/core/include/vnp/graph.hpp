#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vnp/params.hpp"
#include "vnp/tensor.hpp"

namespace vnp {

template <class S>
class Graph;

/// Handle to a node on a Graph. Cheap to copy; valid while the graph lives.
template <class S>
struct Var {
  Graph<S>* graph = nullptr;
  int id = -1;

  const Tensor<S>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const noexcept { return graph != nullptr && id >= 0; }
};

/// Gradient tape. Nodes are appended in execution order; backward walks them
/// in reverse exactly once, accumulating into lazily allocated buffers.
template <class S>
class Graph {
 public:
  /// Receives the node's own output value and its accumulated gradient.
  using BackwardFn = std::function<void(Graph&, const Tensor<S>& out_value, const Tensor<S>& out_grad)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  /// Data input; never receives a gradient.
  Var<S> constant(Tensor<S> value);
  /// Named leaf that receives a gradient.
  Var<S> variable(const std::string& name, Tensor<S> value);
  /// Parameter leaf, created once per name and reused afterwards.
  Var<S> param(const ParamStore<S>& store, const std::string& name);

  const Tensor<S>& value(Var<S> v) const { return nodes_[v.id].value; }
  bool requires_grad(Var<S> v) const { return nodes_[v.id].requires_grad; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Appends an op output. Throws NumericError if the value is not finite.
  Var<S> record(std::string_view op, Tensor<S> value, std::initializer_list<Var<S>> inputs, BackwardFn backward) {
    return record_impl(op, std::move(value), inputs.begin(), inputs.end(), std::move(backward));
  }
  Var<S> record(std::string_view op, Tensor<S> value, const std::vector<Var<S>>& inputs, BackwardFn backward) {
    return record_impl(op, std::move(value), inputs.data(), inputs.data() + inputs.size(), std::move(backward));
  }

  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor<S>& grad_buffer(int id);
  bool needs_grad(Var<S> v) const { return nodes_[v.id].requires_grad; }

  /// Runs reverse accumulation from a scalar loss and returns gradients for
  /// every named leaf (zeros for leaves the loss does not depend on).
  Gradients<S> backward(Var<S> loss);

  /// Gradient of a node after backward(); zeros if nothing flowed into it.
  Tensor<S> grad(Var<S> v) const;

  /// Smallest |input| seen by any relu so far.
  double relu_margin() const noexcept { return relu_margin_; }
  /// Hash of every relu activation pattern so far. Two evaluations of the
  /// same loss with equal signatures lie on the same linear piece.
  std::uint64_t relu_signature() const noexcept { return relu_signature_; }
  void note_relu(double margin, std::uint64_t pattern) noexcept {
    if (margin < relu_margin_) relu_margin_ = margin;
    relu_signature_ = (relu_signature_ ^ pattern) * 0x100000001b3ull;
  }

 private:
  struct Node {
    Tensor<S> value;
    std::optional<Tensor<S>> grad;
    BackwardFn backward;
    std::string_view op;
    std::string name;
    bool requires_grad = false;
    bool named_leaf = false;
  };

  Var<S> record_impl(std::string_view op, Tensor<S> value, const Var<S>* first, const Var<S>* last,
                     BackwardFn backward);

  std::vector<Node> nodes_;
  std::map<std::string, int> param_ids_;
  bool grad_enabled_;
  bool backward_done_ = false;
  double relu_margin_ = std::numeric_limits<double>::infinity();
  std::uint64_t relu_signature_ = 0xcbf29ce484222325ull;
};

template <class S>
const Tensor<S>& Var<S>::value() const {
  return graph->value(*this);
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace vnp
