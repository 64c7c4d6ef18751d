#include "vnp/optim.hpp"

#include <cmath>

#include "vnp/error.hpp"

namespace vnp {

template <class S>
double global_grad_norm(const Gradients<S>& grads) {
  double total = 0.0;
  for (const auto& [_, g] : grads)
    for (S v : g.data()) total += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(total);
}

template <class S>
void adam_step(ParamStore<S>& params, const Gradients<S>& grads, AdamState<S>& state, const AdamConfig& cfg,
               std::int64_t t) {
  if (t < 1) throw ConfigError("adam_step: step counter must be >= 1, got " + std::to_string(t));
  if (grads.size() != params.size()) {
    throw ConfigError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                      std::to_string(params.size()) + " parameters");
  }
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ConfigError("adam_step: no gradient for parameter " + name);
    if (it->second.shape() != p.shape()) {
      throw ConfigError("adam_step: gradient shape " + to_string(it->second.shape()) + " does not match " + name +
                        " " + to_string(p.shape()));
    }
  }

  double clip_scale = 1.0;
  if (cfg.clip_norm) {
    const double norm = global_grad_norm(grads);
    if (norm > *cfg.clip_norm) clip_scale = *cfg.clip_norm / norm;
  }

  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S bc1 = static_cast<S>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const S bc2 = static_cast<S>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  const S lr = static_cast<S>(cfg.lr), eps = static_cast<S>(cfg.eps), cs = static_cast<S>(clip_scale);

  for (auto& [name, p] : params) {
    const auto& g = grads.at(name);
    auto& m = state.m.try_emplace(name, Tensor<S>::zeros(p.shape())).first->second;
    auto& v = state.v.try_emplace(name, Tensor<S>::zeros(p.shape())).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const S gi = g[i] * cs;
      m[i] = b1 * m[i] + (S{1} - b1) * gi;
      v[i] = b2 * v[i] + (S{1} - b2) * gi * gi;
      const S mhat = m[i] / bc1;
      const S vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  state.step = t;
}

template double global_grad_norm(const Gradients<float>&);
template double global_grad_norm(const Gradients<double>&);
template void adam_step(ParamStore<float>&, const Gradients<float>&, AdamState<float>&, const AdamConfig&,
                        std::int64_t);
template void adam_step(ParamStore<double>&, const Gradients<double>&, AdamState<double>&, const AdamConfig&,
                        std::int64_t);

}  // namespace vnp
