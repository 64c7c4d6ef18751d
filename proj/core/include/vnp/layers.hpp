#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "vnp/gp.hpp"
#include "vnp/ops.hpp"

namespace vnp {

using Rng = std::mt19937_64;

/// Architecture sizes shared by the encoder and decoder.
struct ModelDims {
  std::size_t d = 64;
  std::size_t d_z = 16;
  std::size_t L_s = 2;
  std::size_t L_c = 1;
  std::size_t L_K = 4;
  std::size_t m = 32;
  std::size_t heads = 4;
  gp::Interval domain{};

  /// Throws ConfigError on zero sizes or d not divisible by heads.
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

/// prefix.w ~ U(-1/sqrt(in), 1/sqrt(in)) scaled by `gain`, prefix.b = 0.
template <class S>
void init_linear(ParamStore<S>& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                 double gain = 1.0);
template <class S>
void init_layer_norm(ParamStore<S>& store, const std::string& prefix, std::size_t d);

template <class S>
Var<S> dense(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x);
/// dense -> relu -> dense.
template <class S>
Var<S> mlp2(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x);
template <class S>
Var<S> norm(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x);

/// Pre-norm attention block: x + O(MHA(LN x, LN kv)), then x + FFN(LN x).
/// The FFN hidden width is 2d.
template <class S>
void init_attention_block(ParamStore<S>& store, const std::string& prefix, std::size_t d, bool cross, Rng& rng);
template <class S>
Var<S> self_attention_block(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x,
                            std::size_t heads, const Segments& seg);
template <class S>
Var<S> cross_attention_block(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> x,
                             Var<S> kv, std::size_t heads, const Segments& q_seg, const Segments& kv_seg);

}  // namespace vnp
