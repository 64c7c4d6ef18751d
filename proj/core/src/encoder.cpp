#include "vnp/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vnp/error.hpp"

namespace vnp {

std::size_t TokenizerSpec::cell_index(double x) const {
  if (!domain.contains(x)) {
    throw ConfigError("tokenizer: point " + std::to_string(x) + " outside domain [" + std::to_string(domain.lo) + ", " +
                      std::to_string(domain.hi) + "]");
  }
  const auto c = static_cast<std::size_t>(std::floor((x - domain.lo) / cell_width()));
  return std::min(c, m - 1);
}

void TokenizerSpec::validate() const {
  if (m == 0) throw ConfigError("tokenizer: m must be positive");
  if (d == 0) throw ConfigError("tokenizer: d must be positive");
  if (!(domain.hi > domain.lo)) throw ConfigError("tokenizer: empty domain");
}

CellFeatures cell_features(std::span<const double> x_context, std::span<const double> y_context,
                           const TokenizerSpec& spec) {
  spec.validate();
  if (x_context.size() != y_context.size()) throw ConfigError("tokenizer: context x/y length mismatch");
  std::vector<std::size_t> order(x_context.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x_context[a] != x_context[b] ? x_context[a] < x_context[b] : y_context[a] < y_context[b];
  });

  CellFeatures f{Tensor<double>(Shape{spec.m, 3}), std::vector<std::size_t>(spec.m, 0)};
  for (std::size_t i : order) {
    const std::size_t c = spec.cell_index(x_context[i]);
    f.occupancy[c] += 1;
    f.raw.at(c, 1) += y_context[i];
    f.raw.at(c, 2) += x_context[i] - spec.cell_center(c);
  }
  for (std::size_t c = 0; c < spec.m; ++c) {
    const auto n = static_cast<double>(f.occupancy[c]);
    f.raw.at(c, 0) = n;
    if (n > 0) {
      f.raw.at(c, 1) /= n;
      f.raw.at(c, 2) /= n;
    }
  }
  return f;
}

template <class S>
void init_encoder_params(ParamStore<S>& store, const ModelDims& dims, Rng& rng) {
  const std::size_t d = dims.d;
  init_linear(store, "enc.tok.l1", 3, d, rng);
  init_linear(store, "enc.tok.l2", d, d, rng);
  std::normal_distribution<double> normal(0.0, 0.1);
  Tensor<S> empty(Shape{1, d}), pos(Shape{dims.m, d});
  for (auto& v : empty.data()) v = static_cast<S>(normal(rng));
  for (auto& v : pos.data()) v = static_cast<S>(normal(rng));
  store.set("enc.empty", std::move(empty));
  store.set("enc.pos", std::move(pos));
  for (std::size_t i = 0; i < dims.L_s; ++i) init_attention_block(store, "enc.sa" + std::to_string(i), d, false, rng);
}

template <class S>
TokenGrid<S> tokenize(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, const TaskBatch<S>& batch) {
  const TokenizerSpec spec{dims.domain, dims.m, dims.d};
  const std::size_t sets = batch.size(), m = dims.m;
  Tensor<S> raw(Shape{sets * m, 3}), mask(Shape{sets * m, 1}), empty_mask(Shape{sets * m, 1});
  TokenGrid<S> grid;
  grid.seg = Segments::uniform(sets, m);
  for (std::size_t c = 0; c < m; ++c) grid.cell_centers.push_back(spec.cell_center(c));
  std::vector<std::size_t> pos_index(sets * m);
  for (std::size_t b = 0; b < sets; ++b) {
    const CellFeatures f = cell_features(batch.x_context[b], batch.y_context[b], spec);
    for (std::size_t c = 0; c < m; ++c) {
      const std::size_t row = b * m + c;
      for (std::size_t j = 0; j < 3; ++j) raw.at(row, j) = static_cast<S>(f.raw.at(c, j));
      const bool occupied = f.occupancy[c] > 0;
      mask[row] = occupied ? S{1} : S{0};
      empty_mask[row] = occupied ? S{0} : S{1};
      pos_index[row] = c;
      grid.occupancy.push_back(f.occupancy[c]);
    }
  }
  Var<S> h = mlp2(g, store, "enc.tok", g.constant(std::move(raw)));
  Var<S> filled = mul(h, g.constant(std::move(mask)));
  Var<S> empty = mul(g.param(store, "enc.empty"), g.constant(std::move(empty_mask)));
  Var<S> pos = gather_rows(g.param(store, "enc.pos"), std::move(pos_index));
  grid.tokens = add(add(filled, empty), pos);
  return grid;
}

template <class S>
TokenGrid<S> encode(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, TokenGrid<S> grid) {
  for (std::size_t i = 0; i < dims.L_s; ++i)
    grid.tokens = self_attention_block(g, store, "enc.sa" + std::to_string(i), grid.tokens, dims.heads, grid.seg);
  return grid;
}

double attention_flops(double n_context, double n_target, double m, double L_s, double L_c, double d,
                       AttentionMode mode) {
  const double keys = mode == AttentionMode::Vnp ? m : n_context;
  return L_s * keys * keys * d + L_c * keys * n_target * d;
}

#define VNP_INSTANTIATE_ENCODER(S)                                                                              \
  template void init_encoder_params(ParamStore<S>&, const ModelDims&, Rng&);                                    \
  template TokenGrid<S> tokenize(Graph<S>&, const ParamStore<S>&, const ModelDims&, const TaskBatch<S>&);       \
  template TokenGrid<S> encode(Graph<S>&, const ParamStore<S>&, const ModelDims&, TokenGrid<S>);

VNP_INSTANTIATE_ENCODER(float)
VNP_INSTANTIATE_ENCODER(double)

#undef VNP_INSTANTIATE_ENCODER

}  // namespace vnp
