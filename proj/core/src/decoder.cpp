#include "vnp/decoder.hpp"

#include "vnp/error.hpp"

namespace vnp {

namespace {

std::string level_name(const char* kind, std::size_t level) { return std::string("dec.") + kind + std::to_string(level); }

template <class S>
void init_latent_head(ParamStore<S>& store, const std::string& prefix, std::size_t in, const ModelDims& dims,
                      Rng& rng) {
  init_linear(store, prefix + ".pt.l1", in, dims.d, rng);
  init_linear(store, prefix + ".pt.l2", dims.d, dims.d, rng);
  init_linear(store, prefix + ".out.l1", dims.d, dims.d, rng);
  init_linear(store, prefix + ".out.l2", dims.d, 2 * dims.d_z, rng);
}

template <class S>
void init_style(ParamStore<S>& store, const std::string& prefix, const ModelDims& dims, Rng& rng) {
  init_linear(store, prefix + ".l1", dims.d_z, dims.d, rng);
  init_linear(store, prefix + ".l2", dims.d, dims.d, rng, 0.1);
  store.set(prefix + ".l2.b", Tensor<S>::full(Shape{dims.d}, S{1}));
}

template <class S>
GaussianHead<S> latent_head(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, std::size_t d_z,
                            Var<S> input, const Segments& seg) {
  Var<S> pooled = segment_mean(mlp2(g, store, prefix + ".pt", input), seg);
  Var<S> out = mlp2(g, store, prefix + ".out", pooled);
  Var<S> sigma = add_scalar(softplus(slice_cols(out, d_z, 2 * d_z)), kLatentSigmaFloor);
  return {slice_cols(out, 0, d_z), sigma};
}

}  // namespace

template <class S>
void init_decoder_params(ParamStore<S>& store, const ModelDims& dims, Rng& rng) {
  const std::size_t d = dims.d;
  init_linear(store, "dec.qemb.l1", 1, d, rng);
  init_linear(store, "dec.qemb.l2", d, d, rng);
  for (std::size_t i = 0; i < dims.L_c; ++i) init_attention_block(store, "dec.ca" + std::to_string(i), d, true, rng);
  for (std::size_t k = 1; k <= dims.L_K; ++k) {
    init_latent_head(store, level_name("prior", k), d, dims, rng);
    init_latent_head(store, level_name("post", k), d + 1, dims, rng);
    const std::string blk = level_name("blk", k);
    for (const char* mod : {".mod1", ".mod2"}) {
      init_style(store, blk + mod + ".style", dims, rng);
      init_linear(store, blk + mod, d, d, rng);
    }
    init_linear(store, blk + ".fc1", d, d, rng);
    store.set(blk + ".fc2.w", Tensor<S>(Shape{d, d}));
    store.set(blk + ".fc2.b", Tensor<S>(Shape{d}));
  }
  init_linear(store, "dec.head.l1", d, d, rng);
  init_linear(store, "dec.head.l2", d, 2, rng);
}

template <class S>
Var<S> cross_attend(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, Var<S> x_target,
                    const Segments& target_seg, const TokenGrid<S>& grid) {
  if (target_seg.count() != grid.seg.count())
    throw ShapeError("cross_attend: " + std::to_string(target_seg.count()) + " target sets but " +
                     std::to_string(grid.seg.count()) + " token sets");
  Var<S> h = mlp2(g, store, "dec.qemb", x_target);
  for (std::size_t i = 0; i < dims.L_c; ++i)
    h = cross_attention_block(g, store, "dec.ca" + std::to_string(i), h, grid.tokens, dims.heads, target_seg, grid.seg);
  return h;
}

template <class S>
GaussianHead<S> latent_prior(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, std::size_t level,
                             Var<S> features, const Segments& seg) {
  return latent_head(g, store, level_name("prior", level), dims.d_z, features, seg);
}

template <class S>
GaussianHead<S> latent_posterior(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, std::size_t level,
                                 Var<S> features, Var<S> y, const Segments& seg) {
  if (!y.valid()) throw ConfigError("latent_posterior: target values are required");
  return latent_head(g, store, level_name("post", level), dims.d_z, concat<S>({features, y}, 1), seg);
}

template <class S>
Var<S> style(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> z) {
  return mlp2(g, store, prefix, z);
}

template <class S>
Var<S> modulated_block(Graph<S>& g, const ParamStore<S>& store, std::size_t level, Var<S> features, Var<S> z,
                       const Segments& seg) {
  const std::string blk = level_name("blk", level);
  Var<S> h = features;
  for (const char* mod : {".mod1", ".mod2"}) {
    const std::string p = blk + mod;
    Var<S> s = style(g, store, p + ".style", z);
    h = relu(add(modfc(h, s, g.param(store, p + ".w"), seg, kDemodEps), g.param(store, p + ".b")));
  }
  h = relu(dense(g, store, blk + ".fc1", h));
  h = dense(g, store, blk + ".fc2", h);
  return add(features, h);
}

template <class S>
GaussianHead<S> output_head(Graph<S>& g, const ParamStore<S>& store, Var<S> features) {
  Var<S> out = mlp2(g, store, "dec.head", features);
  return {slice_cols(out, 0, 1), add_scalar(softplus(slice_cols(out, 1, 2)), kOutputSigmaFloor)};
}

template <class S>
DecoderOutput<S> decode(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, Var<S> features, Var<S> y,
                        const Segments& seg, DecodeMode mode, const LatentNoise<S>& noise,
                        std::size_t first_inferred) {
  if (mode == DecodeMode::Posterior && !y.valid()) throw ConfigError("decode: posterior mode needs target values");
  if (noise.levels.size() < dims.L_K)
    throw ConfigError("decode: " + std::to_string(noise.levels.size()) + " noise levels for " +
                      std::to_string(dims.L_K) + " latent levels");
  DecoderOutput<S> out;
  for (std::size_t k = 1; k <= dims.L_K; ++k) {
    LatentLevel<S> lv;
    lv.prior = latent_prior(g, store, dims, k, features, seg);
    if (mode == DecodeMode::Posterior && k < first_inferred) {
      lv.posterior = lv.prior;
      lv.z = gaussian_sample(lv.prior.mu, lv.prior.sigma, noise.levels[k - 1]);
    } else if (mode == DecodeMode::Posterior) {
      lv.posterior = latent_posterior(g, store, dims, k, features, y, seg);
      lv.z = gaussian_sample(lv.posterior.mu, lv.posterior.sigma, noise.levels[k - 1]);
    } else {
      lv.z = gaussian_sample(lv.prior.mu, lv.prior.sigma, noise.levels[k - 1]);
    }
    features = modulated_block(g, store, k, features, lv.z, seg);
    out.levels.push_back(lv);
  }
  out.predictive = output_head(g, store, features);
  return out;
}

#define VNP_INSTANTIATE_DECODER(S)                                                                              \
  template void init_decoder_params(ParamStore<S>&, const ModelDims&, Rng&);                                    \
  template Var<S> cross_attend(Graph<S>&, const ParamStore<S>&, const ModelDims&, Var<S>, const Segments&,       \
                               const TokenGrid<S>&);                                                            \
  template GaussianHead<S> latent_prior(Graph<S>&, const ParamStore<S>&, const ModelDims&, std::size_t, Var<S>,  \
                                        const Segments&);                                                       \
  template GaussianHead<S> latent_posterior(Graph<S>&, const ParamStore<S>&, const ModelDims&, std::size_t,      \
                                            Var<S>, Var<S>, const Segments&);                                   \
  template Var<S> style(Graph<S>&, const ParamStore<S>&, const std::string&, Var<S>);                           \
  template Var<S> modulated_block(Graph<S>&, const ParamStore<S>&, std::size_t, Var<S>, Var<S>, const Segments&); \
  template GaussianHead<S> output_head(Graph<S>&, const ParamStore<S>&, Var<S>);                                \
  template DecoderOutput<S> decode(Graph<S>&, const ParamStore<S>&, const ModelDims&, Var<S>, Var<S>,            \
                                   const Segments&, DecodeMode, const LatentNoise<S>&, std::size_t);

VNP_INSTANTIATE_DECODER(float)
VNP_INSTANTIATE_DECODER(double)

#undef VNP_INSTANTIATE_DECODER

}  // namespace vnp
