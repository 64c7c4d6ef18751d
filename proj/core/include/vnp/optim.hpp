#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "vnp/params.hpp"

namespace vnp {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global-norm gradient clipping; off unless set.
  std::optional<double> clip_norm;
};

template <class S>
struct AdamState {
  std::map<std::string, Tensor<S>> m;
  std::map<std::string, Tensor<S>> v;
  std::int64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update at step t (t >= 1), in place. Moments are
/// created as zeros on first sight of a parameter. Throws ConfigError when the
/// gradient keys do not match the parameter names exactly.
template <class S>
void adam_step(ParamStore<S>& params, const Gradients<S>& grads, AdamState<S>& state, const AdamConfig& cfg,
               std::int64_t t);

/// L2 norm over every gradient entry, accumulated in name order.
template <class S>
double global_grad_norm(const Gradients<S>& grads);

extern template void adam_step(ParamStore<float>&, const Gradients<float>&, AdamState<float>&, const AdamConfig&,
                               std::int64_t);
extern template void adam_step(ParamStore<double>&, const Gradients<double>&, AdamState<double>&,
                               const AdamConfig&, std::int64_t);

}  // namespace vnp
