#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vnp/graph.hpp"

namespace vnp {

/// Contiguous row ranges [offsets[i], offsets[i+1]) of a batched matrix, one
/// per task. Used to keep per-task attention, pooling and modulation separate
/// while the dense algebra runs on the stacked rows.
class Segments {
 public:
  Segments() = default;
  explicit Segments(std::vector<std::size_t> offsets);
  static Segments uniform(std::size_t count, std::size_t rows_each);
  static Segments from_sizes(std::span<const std::size_t> sizes);

  std::size_t count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t rows() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t begin(std::size_t i) const { return offsets_[i]; }
  std::size_t end(std::size_t i) const { return offsets_[i + 1]; }
  std::size_t size(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }
  const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
  /// Segment index of every row.
  std::vector<std::size_t> row_owner() const;

  bool operator==(const Segments&) const = default;

 private:
  std::vector<std::size_t> offsets_{0};
};

// Elementwise binary ops broadcast rank-2 operands along size-1 dimensions.
template <class S> Var<S> add(Var<S> a, Var<S> b);
template <class S> Var<S> sub(Var<S> a, Var<S> b);
template <class S> Var<S> mul(Var<S> a, Var<S> b);

template <class S> Var<S> scale(Var<S> x, double c);
template <class S> Var<S> add_scalar(Var<S> x, double c);

template <class S> Var<S> relu(Var<S> x);
template <class S> Var<S> softplus(Var<S> x);
template <class S> Var<S> sigmoid(Var<S> x);
template <class S> Var<S> exp(Var<S> x);
template <class S> Var<S> log(Var<S> x);
template <class S> Var<S> square(Var<S> x);

template <class S> Var<S> matmul(Var<S> a, Var<S> b);
/// x [R x in] * W [in x out] + b [out].
template <class S> Var<S> linear(Var<S> x, Var<S> w, Var<S> b);

/// Softmax along axis 0 (columns) or 1 (rows).
template <class S> Var<S> softmax(Var<S> x, int axis);

template <class S> Var<S> sum(Var<S> x);
template <class S> Var<S> mean(Var<S> x);
/// Mean over axis 0 -> [1 x C], axis 1 -> [R x 1].
template <class S> Var<S> mean_pool(Var<S> x, int axis);
/// Sum over axis 1 -> [R x 1].
template <class S> Var<S> sum_cols(Var<S> x);

template <class S> Var<S> segment_sum(Var<S> x, const Segments& seg);
template <class S> Var<S> segment_mean(Var<S> x, const Segments& seg);
/// out[i] = x[index[i]]; backward scatter-adds in row order.
template <class S> Var<S> gather_rows(Var<S> x, std::vector<std::size_t> index);

template <class S> Var<S> concat(const std::vector<Var<S>>& parts, int axis);
template <class S> Var<S> slice_cols(Var<S> x, std::size_t begin, std::size_t end);

template <class S> Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, double eps = 1e-5);

/// softmax(Q K^T / sqrt(d)) V for a single head and a single set.
template <class S> Var<S> scaled_dot_product_attention(Var<S> q, Var<S> k, Var<S> v);
/// Multi-head attention core (no projections). Row block i of q attends only
/// to row block i of k/v.
template <class S>
Var<S> multihead_attention(Var<S> q, Var<S> k, Var<S> v, std::size_t heads, const Segments& q_seg,
                           const Segments& kv_seg);

/// mu + sigma * noise. Caller owns the noise.
template <class S> Var<S> gaussian_sample(Var<S> mu, Var<S> sigma, const Tensor<S>& noise);

/// Modulated fully-connected product. Row block i of x is multiplied by the
/// demodulated weight built from style row i:
///   w'_jk = s_ij w_jk,  w''_jk = w'_jk / sqrt(sum_j w'^2_jk + eps).
template <class S> Var<S> modfc(Var<S> x, Var<S> style, Var<S> w, const Segments& seg, double eps = 1e-8);

/// Elementwise log N(y; mu, sigma^2).
template <class S> Var<S> gaussian_log_density(Var<S> y, Var<S> mu, Var<S> sigma);
/// Elementwise KL(N(mq, sq^2) || N(mp, sp^2)).
template <class S> Var<S> kl_diag_gaussian(Var<S> mq, Var<S> sq, Var<S> mp, Var<S> sp);

/// The demodulated weight w'' for one style vector (plain math, no tape).
template <class S> Tensor<S> modulated_weight(const Tensor<S>& w, const Tensor<S>& style, double eps = 1e-8);

}  // namespace vnp
