#include "vnp/layers.hpp"

#include <cmath>

#include "vnp/error.hpp"

namespace vnp {

void ModelDims::validate() const {
  if (d == 0 || d_z == 0 || m == 0 || heads == 0) throw ConfigError("model dims: d, d_z, m and heads must be positive");
  if (d % heads != 0) throw ConfigError("model dims: d=" + std::to_string(d) + " is not divisible by heads=" +
                                        std::to_string(heads));
  if (L_c == 0) throw ConfigError("model dims: at least one cross-attention block is required");
  if (!(domain.hi > domain.lo)) throw ConfigError("model dims: empty domain");
}

template <class S>
void init_linear(ParamStore<S>& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                 double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor<S> w(Shape{in, out});
  for (auto& v : w.data()) v = static_cast<S>(u(rng));
  store.set(prefix + ".w", std::move(w));
  store.set(prefix + ".b", Tensor<S>(Shape{out}));
}

template <class S>
void init_layer_norm(ParamStore<S>& store, const std::string& prefix, std::size_t d) {
  store.set(prefix + ".g", Tensor<S>::full(Shape{d}, S{1}));
  store.set(prefix + ".b", Tensor<S>(Shape{d}));
}

template <class S>
Var<S> dense(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x) {
  return linear(x, g.param(store, prefix + ".w"), g.param(store, prefix + ".b"));
}

template <class S>
Var<S> mlp2(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x) {
  return dense(g, store, prefix + ".l2", relu(dense(g, store, prefix + ".l1", x)));
}

template <class S>
Var<S> norm(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x) {
  return layer_norm(x, g.param(store, prefix + ".g"), g.param(store, prefix + ".b"));
}

template <class S>
void init_attention_block(ParamStore<S>& store, const std::string& prefix, std::size_t d, bool cross, Rng& rng) {
  init_layer_norm(store, prefix + ".ln1", d);
  if (cross) init_layer_norm(store, prefix + ".ln_kv", d);
  for (const char* p : {".q", ".k", ".v", ".o"}) init_linear(store, prefix + p, d, d, rng);
  init_layer_norm(store, prefix + ".ln2", d);
  init_linear(store, prefix + ".ff1", d, 2 * d, rng);
  init_linear(store, prefix + ".ff2", 2 * d, d, rng);
}

namespace {

template <class S>
Var<S> attend_and_ffn(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x, Var<S> hq,
                      Var<S> hkv, std::size_t heads, const Segments& q_seg, const Segments& kv_seg) {
  Var<S> q = dense(g, store, prefix + ".q", hq);
  Var<S> k = dense(g, store, prefix + ".k", hkv);
  Var<S> v = dense(g, store, prefix + ".v", hkv);
  Var<S> a = multihead_attention(q, k, v, heads, q_seg, kv_seg);
  x = add(x, dense(g, store, prefix + ".o", a));
  Var<S> h = norm(g, store, prefix + ".ln2", x);
  return add(x, dense(g, store, prefix + ".ff2", relu(dense(g, store, prefix + ".ff1", h))));
}

}  // namespace

template <class S>
Var<S> self_attention_block(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x,
                            std::size_t heads, const Segments& seg) {
  Var<S> h = norm(g, store, prefix + ".ln1", x);
  return attend_and_ffn(g, store, prefix, x, h, h, heads, seg, seg);
}

template <class S>
Var<S> cross_attention_block(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x,
                             Var<S> kv, std::size_t heads, const Segments& q_seg, const Segments& kv_seg) {
  Var<S> hq = norm(g, store, prefix + ".ln1", x);
  Var<S> hkv = norm(g, store, prefix + ".ln_kv", kv);
  return attend_and_ffn(g, store, prefix, x, hq, hkv, heads, q_seg, kv_seg);
}

#define VNP_INSTANTIATE_LAYERS(S)                                                                               \
  template void init_linear(ParamStore<S>&, const std::string&, std::size_t, std::size_t, Rng&, double);        \
  template void init_layer_norm(ParamStore<S>&, const std::string&, std::size_t);                               \
  template Var<S> dense(Graph<S>&, const ParamStore<S>&, const std::string&, Var<S>);                           \
  template Var<S> mlp2(Graph<S>&, const ParamStore<S>&, const std::string&, Var<S>);                            \
  template Var<S> norm(Graph<S>&, const ParamStore<S>&, const std::string&, Var<S>);                            \
  template void init_attention_block(ParamStore<S>&, const std::string&, std::size_t, bool, Rng&);              \
  template Var<S> self_attention_block(Graph<S>&, const ParamStore<S>&, const std::string&, Var<S>, std::size_t, \
                                       const Segments&);                                                        \
  template Var<S> cross_attention_block(Graph<S>&, const ParamStore<S>&, const std::string&, Var<S>, Var<S>,     \
                                        std::size_t, const Segments&, const Segments&);

VNP_INSTANTIATE_LAYERS(float)
VNP_INSTANTIATE_LAYERS(double)

#undef VNP_INSTANTIATE_LAYERS

}  // namespace vnp
