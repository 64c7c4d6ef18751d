#pragma once

#include <span>
#include <vector>

#include "vnp/batch.hpp"
#include "vnp/layers.hpp"

namespace vnp {

/// Splits the domain into m equal cells; one token per cell.
struct TokenizerSpec {
  gp::Interval domain{};
  std::size_t m = 32;
  std::size_t d = 64;

  double cell_width() const noexcept { return domain.width() / static_cast<double>(m); }
  double cell_center(std::size_t c) const noexcept { return domain.lo + (static_cast<double>(c) + 0.5) * cell_width(); }
  /// Cell containing x; the upper domain edge belongs to the last cell.
  /// Throws ConfigError outside the domain.
  std::size_t cell_index(double x) const;
  void validate() const;
};

/// Per-cell raw features [count, mean y, mean (x - center)] plus occupancy.
/// Points are sorted before accumulation, so the result does not depend on
/// the order of the context set.
struct CellFeatures {
  Tensor<double> raw;  // [m x 3]
  std::vector<std::size_t> occupancy;
};

CellFeatures cell_features(std::span<const double> x_context, std::span<const double> y_context,
                           const TokenizerSpec& spec);

template <class S>
struct TokenGrid {
  Var<S> tokens;  // [sets * m x d]
  std::vector<double> cell_centers;
  std::vector<std::size_t> occupancy;  // [sets * m]
  Segments seg;
};

template <class S>
void init_encoder_params(ParamStore<S>& store, const ModelDims& dims, Rng& rng);

/// Occupied cells get MLP(raw features), empty cells the learned empty
/// embedding; both receive the learned positional embedding of their cell.
template <class S>
TokenGrid<S> tokenize(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, const TaskBatch<S>& batch);

/// L_s pre-norm self-attention blocks over each set's m tokens.
template <class S>
TokenGrid<S> encode(Graph<S>& g, const ParamStore<S>& store, const ModelDims& dims, TokenGrid<S> grid);

enum class AttentionMode { Vnp, Anp };

/// Attention multiply-accumulate estimate:
///   vnp: L_s m^2 d + L_c m N_T d
///   anp: L_s N_C^2 d + L_c N_C N_T d
double attention_flops(double n_context, double n_target, double m, double L_s, double L_c, double d,
                       AttentionMode mode);

}  // namespace vnp
