#include "vnp/curves.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vnp/error.hpp"

namespace vnp {

CurveData sample_curves(const ParamStore<float>& store, const Model& model, const gp::Task& task,
                        const CurveOptions& opts) {
  if (opts.num_samples == 0) throw ConfigError("curves: num_samples must be positive");
  if (opts.grid < 2) throw ConfigError("curves: grid needs at least two points");
  const auto& dom = model.dims.domain;
  CurveData c;
  for (std::size_t i = 0; i < opts.grid; ++i)
    c.x.push_back(dom.lo + dom.width() * static_cast<double>(i) / static_cast<double>(opts.grid - 1));

  const auto batch = make_query_batch<float>(task.x_context, task.y_context, c.x);
  Rng rng(opts.seed);
  const auto noise = draw_noise<float>(model.dims.L_K, opts.num_samples, model.dims.d_z, rng);
  Graph<float> g(false);
  const auto out = forward(g, store, model, batch, DecodeMode::Prior, noise, opts.num_samples);
  const auto& mu = out.predictive.mu.value();
  const auto& sd = out.predictive.sigma.value();

  const std::size_t n = opts.grid;
  c.sample_means.assign(opts.num_samples, std::vector<double>(n));
  c.mean.assign(n, 0.0);
  c.sigma.assign(n, 0.0);
  for (std::size_t s = 0; s < opts.num_samples; ++s)
    for (std::size_t i = 0; i < n; ++i) c.sample_means[s][i] = mu[s * n + i];
  const auto ns = static_cast<double>(opts.num_samples);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0, second = 0.0;
    for (std::size_t s = 0; s < opts.num_samples; ++s) {
      const double mi = mu[s * n + i], si = sd[s * n + i];
      m += mi;
      second += si * si + mi * mi;
    }
    m /= ns;
    c.mean[i] = m;
    c.sigma[i] = std::sqrt(std::max(second / ns - m * m, 0.0));
  }
  return c;
}

void write_curves_csv(const std::filesystem::path& path, const CurveData& curves) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "x";
  for (std::size_t s = 0; s < curves.sample_means.size(); ++s) out << ",sample_" << s + 1;
  out << ",mean,sigma\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    out << buf;
  };
  for (std::size_t i = 0; i < curves.x.size(); ++i) {
    put(curves.x[i]);
    for (const auto& s : curves.sample_means) {
      out << ',';
      put(s[i]);
    }
    out << ',';
    put(curves.mean[i]);
    out << ',';
    put(curves.sigma[i]);
    out << '\n';
  }
}

void write_points_csv(const std::filesystem::path& path, const gp::Task& task) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "split,x,y\n";
  char buf[64];
  for (std::size_t i = 0; i < task.x_context.size(); ++i) {
    std::snprintf(buf, sizeof buf, "context,%.17g,%.17g\n", task.x_context[i], task.y_context[i]);
    out << buf;
  }
  for (std::size_t i = 0; i < task.x_target.size(); ++i) {
    std::snprintf(buf, sizeof buf, "target,%.17g,%.17g\n", task.x_target[i], task.y_target[i]);
    out << buf;
  }
}

}  // namespace vnp
