#include "vnp/objective.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numbers>

#include "vnp/error.hpp"

namespace vnp {

double gaussian_loglik(std::span<const double> y, std::span<const double> mu, std::span<const double> sigma,
                       double sigma_floor) {
  if (y.size() != mu.size() || y.size() != sigma.size()) throw ShapeError("gaussian_loglik: length mismatch");
  if (y.empty()) throw ShapeError("gaussian_loglik: no points");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(sigma[i] >= sigma_floor)) throw NumericError("gaussian_loglik: sigma below floor");
    const double z = (y[i] - mu[i]) / sigma[i];
    total += -half_log_2pi - std::log(sigma[i]) - 0.5 * z * z;
  }
  return total / static_cast<double>(y.size());
}

double kl_gaussians(std::span<const double> mq, std::span<const double> sq, std::span<const double> mp,
                    std::span<const double> sp) {
  const std::size_t n = mq.size();
  if (sq.size() != n || mp.size() != n || sp.size() != n) throw ShapeError("kl_gaussians: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sq[i] > 0) || !(sp[i] > 0)) throw NumericError("kl_gaussians: sigma must be positive");
    const double dm = mq[i] - mp[i];
    total += std::log(sp[i] / sq[i]) + (sq[i] * sq[i] + dm * dm) / (2.0 * sp[i] * sp[i]) - 0.5;
  }
  return total;
}

double log_mean_exp(std::span<const double> v) {
  if (v.empty()) throw ShapeError("log_mean_exp: empty input");
  const double hi = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(hi)) throw NumericError("log_mean_exp: non-finite log weight");
  double total = 0.0;
  for (double x : v) total += std::exp(x - hi);
  return hi + std::log(total / static_cast<double>(v.size()));
}

namespace {

template <class S>
Tensor<S> inverse_sizes(const Segments& seg) {
  Tensor<S> t(Shape{seg.count(), 1});
  for (std::size_t i = 0; i < seg.count(); ++i) t[i] = S{1} / static_cast<S>(seg.size(i));
  return t;
}

/// Per-set log q(z) - log p(z), [sets x 1].
template <class S>
Var<S> log_ratio(const LatentLevel<S>& lv) {
  Var<S> lq = gaussian_log_density(lv.z, lv.posterior.mu, lv.posterior.sigma);
  Var<S> lp = gaussian_log_density(lv.z, lv.prior.mu, lv.prior.sigma);
  return sum_cols(sub(lq, lp));
}

bool level_penalized(KlMode mode, std::size_t level, std::size_t levels) {
  switch (mode) {
    case KlMode::Hierarchical:
      return true;
    case KlMode::SingleFinal:
      return level + 1 == levels;
    case KlMode::None:
      return false;
  }
  return false;
}

}  // namespace

template <class S>
Loss<S> elbo_loss(Graph<S>& g, const ParamStore<S>& store, const Model& model, const TaskBatch<S>& batch, double beta,
                  const LatentNoise<S>& noise, KlEstimator estimator) {
  if (beta < 0) throw ConfigError("elbo_loss: beta must be non-negative");
  ModelOutput<S> out = forward(g, store, model, batch, DecodeMode::Posterior, noise);
  if (out.levels.size() != model.dims.L_K)
    throw Error("elbo_loss: decoder returned " + std::to_string(out.levels.size()) + " levels, expected " +
                std::to_string(model.dims.L_K));

  Var<S> logp = gaussian_log_density(out.y, out.predictive.mu, out.predictive.sigma);
  Var<S> nll = scale(mean(segment_mean(logp, out.seg)), -1.0);
  Var<S> inv_t = g.constant(inverse_sizes<S>(out.seg));

  Loss<S> loss;
  loss.breakdown.beta = beta;
  loss.breakdown.nll = static_cast<double>(nll.value().item());
  Var<S> total = nll;
  for (std::size_t k = 0; k < out.levels.size(); ++k) {
    const auto& lv = out.levels[k];
    Var<S> per_set = estimator == KlEstimator::Analytic
                         ? sum_cols(kl_diag_gaussian(lv.posterior.mu, lv.posterior.sigma, lv.prior.mu, lv.prior.sigma))
                         : log_ratio(lv);
    Var<S> kl = mean(mul(per_set, inv_t));
    const bool pen = level_penalized(model.variant.kl_mode, k, out.levels.size());
    loss.breakdown.kl_per_level.push_back(static_cast<double>(kl.value().item()));
    loss.breakdown.penalized.push_back(pen);
    if (pen && beta != 0.0) total = add(total, scale(kl, beta));
  }
  loss.total = total;
  loss.breakdown.total = static_cast<double>(total.value().item());
  return loss;
}

template <class S>
std::vector<double> iw_loglik(const ParamStore<S>& store, const Model& model, const TaskBatch<S>& batch,
                              std::size_t samples, const LatentNoise<S>& noise) {
  if (samples < 1) throw ConfigError("iw_loglik: need at least one sample");
  Graph<S> g(false);
  ModelOutput<S> out = forward(g, store, model, batch, DecodeMode::Posterior, noise, samples);
  Var<S> logp = gaussian_log_density(out.y, out.predictive.mu, out.predictive.sigma);
  const Tensor<S>& lp = logp.value();
  const std::size_t sets = out.seg.count();
  std::vector<double> log_w(sets, 0.0);
  for (std::size_t s = 0; s < sets; ++s)
    for (std::size_t i = out.seg.begin(s); i < out.seg.end(s); ++i) log_w[s] += static_cast<double>(lp[i]);
  for (const auto& lv : out.levels) {
    const Tensor<S>& r = log_ratio(lv).value();
    for (std::size_t s = 0; s < sets; ++s) log_w[s] -= static_cast<double>(r[s]);
  }
  std::vector<double> scores;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::span<const double> w(log_w.data() + b * samples, samples);
    scores.push_back(log_mean_exp(w) / static_cast<double>(batch.target_seg.size(b)));
  }
  return scores;
}

template <class S>
double iw_loglik(const ParamStore<S>& store, const Model& model, const gp::Task& task, std::size_t samples, Rng& rng) {
  const auto batch = make_batch<S>(std::span<const gp::Task>(&task, 1));
  const auto noise = draw_noise<S>(model.dims.L_K, samples, model.dims.d_z, rng);
  return iw_loglik(store, model, batch, samples, noise).front();
}

SplitScore summarize(std::vector<double> per_task) {
  SplitScore s;
  s.count = per_task.size();
  if (s.count == 0) throw ConfigError("summarize: no scores");
  double total = 0.0;
  for (double v : per_task) total += v;
  s.mean = total / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : per_task) ss += (v - s.mean) * (v - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(s.count - 1) / static_cast<double>(s.count));
  }
  s.per_task = std::move(per_task);
  return s;
}

template <class S>
std::vector<double> score_split(const ParamStore<S>& store, const Model& model, std::span<const gp::Task> tasks,
                                const EvalConfig& cfg, bool context) {
  if (tasks.empty()) throw ConfigError("evaluate: empty task set");
  if (cfg.iw_samples < 1) throw ConfigError("evaluate: iw_samples must be >= 1");
  const std::size_t chunk = std::max<std::size_t>(cfg.chunk, 1), dz = model.dims.d_z, L = model.dims.L_K;
  std::vector<double> scores;
  scores.reserve(tasks.size());
  for (std::size_t start = 0; start < tasks.size(); start += chunk) {
    const std::size_t n = std::min(chunk, tasks.size() - start);
    std::vector<gp::Task> part;
    LatentNoise<S> noise;
    noise.levels.assign(L, Tensor<S>(Shape{n * cfg.iw_samples, dz}));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t index = start + i;
      part.push_back(context ? tasks[index].context_as_target() : tasks[index]);
      Rng rng(gp::task_seed(cfg.seed, 2 * index + (context ? 1 : 0)));
      const auto own = draw_noise<S>(L, cfg.iw_samples, dz, rng);
      for (std::size_t k = 0; k < L; ++k)
        std::copy(own.levels[k].data().begin(), own.levels[k].data().end(),
                  noise.levels[k].ptr() + i * cfg.iw_samples * dz);
    }
    const auto batch = make_batch<S>(part);
    const auto s = iw_loglik(store, model, batch, cfg.iw_samples, noise);
    scores.insert(scores.end(), s.begin(), s.end());
  }
  return scores;
}

template <class S>
EvalReport evaluate(const ParamStore<S>& store, const Model& model, std::span<const gp::Task> tasks,
                    const EvalConfig& cfg, const std::string& checkpoint_hash) {
  EvalReport r;
  r.variant = model.variant.name;
  r.checkpoint_hash = checkpoint_hash;
  r.iw_samples = cfg.iw_samples;
  r.seed = cfg.seed;
  r.context = summarize(score_split(store, model, tasks, cfg, true));
  r.target = summarize(score_split(store, model, tasks, cfg, false));
  return r;
}

namespace {

nlohmann::json split_json(const SplitScore& s, bool per_task) {
  nlohmann::json j{{"mean", s.mean}, {"se", s.se}, {"count", s.count}};
  if (per_task) j["per_task"] = s.per_task;
  return j;
}

SplitScore split_from_json(const nlohmann::json& j) {
  SplitScore s;
  s.mean = j.at("mean").get<double>();
  s.se = j.at("se").get<double>();
  s.count = j.at("count").get<std::size_t>();
  if (j.contains("per_task")) s.per_task = j.at("per_task").get<std::vector<double>>();
  return s;
}

}  // namespace

std::string to_json_string(const EvalReport& report, bool per_task) {
  nlohmann::json j{{"variant", report.variant},
                   {"checkpoint_hash", report.checkpoint_hash},
                   {"iw_samples", report.iw_samples},
                   {"seed", report.seed},
                   {"context", split_json(report.context, per_task)},
                   {"target", split_json(report.target, per_task)}};
  return j.dump(2);
}

EvalReport eval_report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.variant = j.at("variant").get<std::string>();
    r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
    r.iw_samples = j.at("iw_samples").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.context = split_from_json(j.at("context"));
    r.target = split_from_json(j.at("target"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("eval report: ") + e.what());
  }
}

#define VNP_INSTANTIATE_OBJECTIVE(S)                                                                            \
  template Loss<S> elbo_loss(Graph<S>&, const ParamStore<S>&, const Model&, const TaskBatch<S>&, double,         \
                             const LatentNoise<S>&, KlEstimator);                                               \
  template std::vector<double> iw_loglik(const ParamStore<S>&, const Model&, const TaskBatch<S>&, std::size_t,   \
                                         const LatentNoise<S>&);                                                \
  template double iw_loglik(const ParamStore<S>&, const Model&, const gp::Task&, std::size_t, Rng&);            \
  template std::vector<double> score_split(const ParamStore<S>&, const Model&, std::span<const gp::Task>,        \
                                           const EvalConfig&, bool);                                            \
  template EvalReport evaluate(const ParamStore<S>&, const Model&, std::span<const gp::Task>, const EvalConfig&, \
                               const std::string&);

VNP_INSTANTIATE_OBJECTIVE(float)
VNP_INSTANTIATE_OBJECTIVE(double)

#undef VNP_INSTANTIATE_OBJECTIVE

}  // namespace vnp
