#pragma once

#include <span>
#include <vector>

#include "vnp/gp.hpp"
#include "vnp/layers.hpp"
#include "vnp/tensor.hpp"

namespace vnp {

/// Several tasks stacked for one forward pass. Target rows of task i occupy
/// target_seg block i; the context stays per task because the tokenizer and
/// the CNP encoder aggregate it separately.
template <class S>
struct TaskBatch {
  std::vector<std::vector<double>> x_context;
  std::vector<std::vector<double>> y_context;
  Tensor<S> x_target;  // [sum T x 1]
  Tensor<S> y_target;  // [sum T x 1]
  Segments target_seg;

  std::size_t size() const noexcept { return x_context.size(); }
};

/// Scores each task's target set. Use Task::context_as_target() to score the
/// context set instead.
template <class S>
TaskBatch<S> make_batch(std::span<const gp::Task> tasks);

/// Inputs only: prior-mode decoding at arbitrary query points. y_target is zero and
/// must not be scored.
template <class S>
TaskBatch<S> make_query_batch(std::span<const double> x_context, std::span<const double> y_context,
                              std::span<const double> x_query);

/// Standard normal draws for every latent level, one [rows x d_z] block each.
template <class S>
struct LatentNoise {
  std::vector<Tensor<S>> levels;
};

template <class S>
LatentNoise<S> draw_noise(std::size_t levels, std::size_t rows, std::size_t d_z, Rng& rng);
template <class S>
LatentNoise<S> zero_noise(std::size_t levels, std::size_t rows, std::size_t d_z);

}  // namespace vnp
