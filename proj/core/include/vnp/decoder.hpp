#pragma once

#include <vector>

#include "vnp/batch.hpp"
#include "vnp/encoder.hpp"

namespace vnp {

inline constexpr double kLatentSigmaFloor = 1e-4;
inline constexpr double kOutputSigmaFloor = 1e-3;
inline constexpr double kDemodEps = 1e-8;

enum class DecodeMode { Prior, Posterior };

template <class S>
struct GaussianHead {
  Var<S> mu;
  Var<S> sigma;
};

/// One level of the latent hierarchy. `posterior` is only set in posterior
/// mode; `z` is drawn from the posterior there and from the prior otherwise.
template <class S>
struct LatentLevel {
  GaussianHead<S> prior;
  GaussianHead<S> posterior;
  Var<S> z;

  bool has_posterior() const noexcept { return posterior.mu.valid(); }
};

template <class S>
struct DecoderOutput {
  GaussianHead<S> predictive;  // [rows x 1] each
  std::vector<LatentLevel<S>> levels;
};

/// Coordinate MLP, cross-attention, latent heads, modulated blocks and the
/// output head. Level indices run 1..L_K.
template <class S>
void init_decoder_params(ParamStore<S>& store, const ModelDims& dims, Rng& rng);

/// Embeds target coordinates and attends to the context tokens. Rows never
/// attend to each other.
template <class S>
Var<S> cross_attend(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, Var<S> x_target,
                    const Segments& target_seg, const TokenGrid<S>& grid);

/// p(z_k | Y_{k-1}): per-point MLP, mean over each set, MLP to (mu, sigma).
template <class S>
GaussianHead<S> latent_prior(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, std::size_t level,
                             Var<S> features, const Segments& seg);

/// q(z_k | Y_{k-1}, y): as latent_prior on [Y_{k-1} | y] with its own weights.
template <class S>
GaussianHead<S> latent_posterior(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, std::size_t level,
                                 Var<S> features, Var<S> y, const Segments& seg);

/// Style vector for one ModFC layer, [sets x d].
template <class S>
Var<S> style(Graph<S>& g, const ParamStore<S>& store, const std::string& prefix, Var<S> z);

/// ModFC -> ReLU -> ModFC -> ReLU -> FC -> ReLU -> FC plus the input.
template <class S>
Var<S> modulated_block(Graph<S>& g, const ParamStore<S>& store, std::size_t level, Var<S> features, Var<S> z,
                       const Segments& seg);

template <class S>
GaussianHead<S> output_head(Graph<S>& g, const ParamStore<S>& store, Var<S> features);

/// Runs the latent hierarchy from the level-0 features. In posterior mode `y`
/// must be valid; prior mode never touches it. Levels below `first_inferred`
/// are drawn from the prior in both modes, and their posterior is the prior.
template <class S>
DecoderOutput<S> decode(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, Var<S> features, Var<S> y,
                        const Segments& seg, DecodeMode mode, const LatentNoise<S>& noise,
                        std::size_t first_inferred = 1);

}  // namespace vnp
