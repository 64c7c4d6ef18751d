#include "vnp/batch.hpp"

#include <limits>

#include "vnp/error.hpp"

namespace vnp {

template <class S>
TaskBatch<S> make_batch(std::span<const gp::Task> tasks) {
  if (tasks.empty()) throw ConfigError("make_batch: no tasks");
  TaskBatch<S> b;
  std::vector<std::size_t> sizes;
  std::vector<S> xt, yt;
  for (const auto& t : tasks) {
    if (t.x_target.empty()) throw ConfigError("make_batch: task without target points");
    if (t.x_target.size() != t.y_target.size() || t.x_context.size() != t.y_context.size())
      throw ConfigError("make_batch: x/y length mismatch");
    b.x_context.push_back(t.x_context);
    b.y_context.push_back(t.y_context);
    sizes.push_back(t.x_target.size());
    for (double x : t.x_target) xt.push_back(static_cast<S>(x));
    for (double y : t.y_target) yt.push_back(static_cast<S>(y));
  }
  b.x_target = Tensor<S>::column(std::move(xt));
  b.y_target = Tensor<S>::column(std::move(yt));
  b.target_seg = Segments::from_sizes(sizes);
  return b;
}

template <class S>
TaskBatch<S> make_query_batch(std::span<const double> x_context, std::span<const double> y_context,
                              std::span<const double> x_query) {
  if (x_query.empty()) throw ConfigError("make_query_batch: no query points");
  if (x_context.size() != y_context.size()) throw ConfigError("make_query_batch: context x/y length mismatch");
  TaskBatch<S> b;
  b.x_context.emplace_back(x_context.begin(), x_context.end());
  b.y_context.emplace_back(y_context.begin(), y_context.end());
  std::vector<S> xq(x_query.size());
  for (std::size_t i = 0; i < xq.size(); ++i) xq[i] = static_cast<S>(x_query[i]);
  b.x_target = Tensor<S>::column(std::move(xq));
  b.y_target = Tensor<S>::zeros(Shape{x_query.size(), 1});
  b.target_seg = Segments::uniform(1, x_query.size());
  return b;
}

template <class S>
LatentNoise<S> draw_noise(std::size_t levels, std::size_t rows, std::size_t d_z, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentNoise<S> n;
  for (std::size_t k = 0; k < levels; ++k) {
    Tensor<S> t(Shape{rows, d_z});
    for (auto& v : t.data()) v = static_cast<S>(normal(rng));
    n.levels.push_back(std::move(t));
  }
  return n;
}

template <class S>
LatentNoise<S> zero_noise(std::size_t levels, std::size_t rows, std::size_t d_z) {
  LatentNoise<S> n;
  for (std::size_t k = 0; k < levels; ++k) n.levels.emplace_back(Shape{rows, d_z});
  return n;
}

#define VNP_INSTANTIATE_BATCH(S)                                                                                \
  template TaskBatch<S> make_batch(std::span<const gp::Task>);                                                  \
  template TaskBatch<S> make_query_batch(std::span<const double>, std::span<const double>, std::span<const double>); \
  template LatentNoise<S> draw_noise(std::size_t, std::size_t, std::size_t, Rng&);                              \
  template LatentNoise<S> zero_noise(std::size_t, std::size_t, std::size_t);

VNP_INSTANTIATE_BATCH(float)
VNP_INSTANTIATE_BATCH(double)

#undef VNP_INSTANTIATE_BATCH

}  // namespace vnp
