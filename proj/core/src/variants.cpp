#include "vnp/variants.hpp"

#include "vnp/error.hpp"

namespace vnp {

std::string to_string(KlMode mode) {
  switch (mode) {
    case KlMode::Hierarchical:
      return "hierarchical";
    case KlMode::SingleFinal:
      return "single_final";
    case KlMode::None:
      return "none";
  }
  return "unknown";
}

std::string to_string(EncoderKind kind) { return kind == EncoderKind::Bottleneck ? "bottleneck" : "mean_aggregate"; }

void VariantSpec::validate() const {
  if (kl_mode == KlMode::None && L_K != 0)
    throw ConfigError("variant " + name + ": kl_mode none requires L_K = 0, got " + std::to_string(L_K));
  if (kl_mode != KlMode::None && L_K == 0) throw ConfigError("variant " + name + ": a KL mode needs L_K >= 1");
  if (encoder == EncoderKind::MeanAggregate && (L_K != 0 || kl_mode != KlMode::None))
    throw ConfigError("variant " + name + ": the mean-aggregate encoder is deterministic only");
}

VariantSpec VariantSpec::vnp(std::size_t levels) {
  return {"vnp-" + std::to_string(levels), levels, levels == 0 ? KlMode::None : KlMode::Hierarchical,
          EncoderKind::Bottleneck};
}

VariantSpec VariantSpec::single_z(std::size_t levels) {
  return {"single-z-" + std::to_string(levels), levels, KlMode::SingleFinal, EncoderKind::Bottleneck};
}

VariantSpec VariantSpec::cnp() { return {"cnp", 0, KlMode::None, EncoderKind::MeanAggregate}; }

VariantSpec parse_variant(std::string_view kind, std::size_t L_K) {
  VariantSpec v;
  if (kind == "vnp") {
    v = VariantSpec::vnp(L_K);
  } else if (kind == "single_z" || kind == "single-z") {
    v = VariantSpec::single_z(L_K);
  } else if (kind == "cnp") {
    v = VariantSpec::cnp();
  } else {
    throw ConfigError("unknown model.variant '" + std::string(kind) + "' (expected vnp, single_z or cnp)");
  }
  v.validate();
  return v;
}

std::string variant_kind(const VariantSpec& spec) {
  if (spec.encoder == EncoderKind::MeanAggregate) return "cnp";
  return spec.kl_mode == KlMode::SingleFinal ? "single_z" : "vnp";
}

std::vector<VariantSpec> desk_ladder() {
  return {VariantSpec::vnp(0), VariantSpec::vnp(2), VariantSpec::vnp(4), VariantSpec::single_z(4), VariantSpec::cnp()};
}

Model build_variant(const VariantSpec& spec, ModelDims dims) {
  spec.validate();
  dims.L_K = spec.L_K;
  dims.validate();
  return {spec, dims};
}

template <class S>
ParamStore<S> init_params(const Model& model, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<S> store;
  const std::size_t d = model.dims.d;
  if (model.variant.encoder == EncoderKind::MeanAggregate) {
    init_linear(store, "cnp.enc.l1", 2, d, rng);
    init_linear(store, "cnp.enc.l2", d, d, rng);
    init_linear(store, "cnp.dec.l1", d + 1, d, rng);
    init_linear(store, "cnp.dec.l2", d, d, rng);
    init_linear(store, "cnp.dec.l3", d, 2, rng);
    return store;
  }
  init_encoder_params(store, model.dims, rng);
  init_decoder_params(store, model.dims, rng);
  return store;
}

namespace {

/// Row index that repeats every segment `replicas` times, segment-major.
std::vector<std::size_t> replicate_index(const Segments& seg, std::size_t replicas, std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> index;
  for (std::size_t b = 0; b < seg.count(); ++b)
    for (std::size_t r = 0; r < replicas; ++r) {
      sizes.push_back(seg.size(b));
      for (std::size_t i = seg.begin(b); i < seg.end(b); ++i) index.push_back(i);
    }
  return index;
}

template <class S>
Var<S> cnp_features(Graph<S>& g, const ParamStore<S>& store, const TaskBatch<S>& batch) {
  std::vector<std::size_t> sizes;
  std::vector<S> xy;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch.x_context[b].empty()) throw ConfigError("cnp: empty context set");
    sizes.push_back(batch.x_context[b].size());
    for (std::size_t i = 0; i < batch.x_context[b].size(); ++i) {
      xy.push_back(static_cast<S>(batch.x_context[b][i]));
      xy.push_back(static_cast<S>(batch.y_context[b][i]));
    }
  }
  const std::size_t n = xy.size() / 2;
  Var<S> h = mlp2(g, store, "cnp.enc", g.constant(Tensor<S>(Shape{n, 2}, std::move(xy))));
  Var<S> r = segment_mean(h, Segments::from_sizes(sizes));
  const auto owner = batch.target_seg.row_owner();
  Var<S> x = g.constant(batch.x_target);
  return concat<S>({gather_rows(r, owner), x}, 1);
}

}  // namespace

template <class S>
ModelOutput<S> forward(Graph<S>& g, const ParamStore<S>& store, const Model& model, const TaskBatch<S>& batch,
                       DecodeMode mode, const LatentNoise<S>& noise, std::size_t replicas) {
  if (replicas == 0) throw ConfigError("forward: replicas must be positive");
  ModelOutput<S> out;
  std::vector<std::size_t> sizes;
  const auto index = replicate_index(batch.target_seg, replicas, sizes);
  out.seg = Segments::from_sizes(sizes);
  Var<S> y = g.constant(batch.y_target);
  if (replicas > 1) y = gather_rows(y, index);
  out.y = y;

  if (model.variant.encoder == EncoderKind::MeanAggregate) {
    Var<S> h = cnp_features(g, store, batch);
    h = relu(dense(g, store, "cnp.dec.l1", h));
    h = relu(dense(g, store, "cnp.dec.l2", h));
    Var<S> o = dense(g, store, "cnp.dec.l3", h);
    out.predictive = {slice_cols(o, 0, 1), add_scalar(softplus(slice_cols(o, 1, 2)), kOutputSigmaFloor)};
    if (replicas > 1) {
      out.predictive.mu = gather_rows(out.predictive.mu, index);
      out.predictive.sigma = gather_rows(out.predictive.sigma, index);
    }
    return out;
  }

  TokenGrid<S> grid = encode(g, store, model.dims, tokenize(g, store, model.dims, batch));
  Var<S> features = cross_attend(g, store, model.dims, g.constant(batch.x_target), batch.target_seg, grid);
  if (replicas > 1) features = gather_rows(features, index);
  DecoderOutput<S> dec = decode(g, store, model.dims, features, mode == DecodeMode::Posterior ? y : Var<S>{}, out.seg,
                                mode, noise, model.variant.kl_mode == KlMode::SingleFinal ? model.dims.L_K : 1);
  out.predictive = dec.predictive;
  out.levels = std::move(dec.levels);
  return out;
}

#define VNP_INSTANTIATE_VARIANTS(S)                                                                             \
  template ParamStore<S> init_params(const Model&, std::uint64_t);                                              \
  template ModelOutput<S> forward(Graph<S>&, const ParamStore<S>&, const Model&, const TaskBatch<S>&, DecodeMode, \
                                  const LatentNoise<S>&, std::size_t);

VNP_INSTANTIATE_VARIANTS(float)
VNP_INSTANTIATE_VARIANTS(double)

#undef VNP_INSTANTIATE_VARIANTS

}  // namespace vnp
