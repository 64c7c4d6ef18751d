#pragma once

#include <span>
#include <string>
#include <vector>

#include "vnp/variants.hpp"

namespace vnp {

/// Mean over points of log N(y; mu, sigma^2). Throws NumericError when any
/// sigma is below `sigma_floor`.
double gaussian_loglik(std::span<const double> y, std::span<const double> mu, std::span<const double> sigma,
                       double sigma_floor = kOutputSigmaFloor);

/// Closed-form KL(N(mq, sq^2) || N(mp, sp^2)) summed over dimensions.
double kl_gaussians(std::span<const double> mq, std::span<const double> sq, std::span<const double> mp,
                    std::span<const double> sp);

/// log((1/n) sum exp(v)), shifted by the maximum.
double log_mean_exp(std::span<const double> v);

enum class KlEstimator {
  Analytic,  // closed form
  Sample,    // log q(z) - log p(z) at the drawn z
};

/// Batch averages. KL terms are divided by each task's scored point count so
/// they share the per-point scale of nll.
struct LossBreakdown {
  double nll = 0.0;
  std::vector<double> kl_per_level;
  std::vector<bool> penalized;  // levels that enter `total`
  double total = 0.0;
  double beta = 1.0;
};

template <class S>
struct Loss {
  Var<S> total;
  LossBreakdown breakdown;
};

/// Posterior-mode decode, negative per-point log-likelihood plus beta times
/// the KL of each penalized level (all levels for hierarchical variants, the
/// last one for single_final, none for deterministic variants).
template <class S>
Loss<S> elbo_loss(Graph<S>& g, const ParamStore<S>& store, const Model& model, const TaskBatch<S>& batch, double beta,
                  const LatentNoise<S>& noise, KlEstimator estimator = KlEstimator::Analytic);

/// Importance-weighted per-point log-likelihood of each task's target set
/// with `samples` posterior proposals. `noise` has size() * samples rows per
/// level, task-major.
template <class S>
std::vector<double> iw_loglik(const ParamStore<S>& store, const Model& model, const TaskBatch<S>& batch,
                              std::size_t samples, const LatentNoise<S>& noise);

/// Same, drawing the noise from `rng`.
template <class S>
double iw_loglik(const ParamStore<S>& store, const Model& model, const gp::Task& task, std::size_t samples, Rng& rng);

struct EvalConfig {
  std::size_t iw_samples = 50;
  std::uint64_t seed = 0;
  std::size_t chunk = 8;  // tasks per forward pass
};

struct SplitScore {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
  std::vector<double> per_task;
};

SplitScore summarize(std::vector<double> per_task);

struct EvalReport {
  std::string variant;
  std::string checkpoint_hash;
  std::size_t iw_samples = 0;
  std::uint64_t seed = 0;
  SplitScore context;
  SplitScore target;
};

std::string to_json_string(const EvalReport& report, bool per_task = true);
EvalReport eval_report_from_json(const std::string& text);

/// Noise for task `index` of an evaluation is drawn from its own generator,
/// so scores do not depend on chunking or task order.
template <class S>
EvalReport evaluate(const ParamStore<S>& store, const Model& model, std::span<const gp::Task> tasks,
                    const EvalConfig& cfg, const std::string& checkpoint_hash = "");

/// Per-task IW scores of one split (target, or context when `context` is set).
template <class S>
std::vector<double> score_split(const ParamStore<S>& store, const Model& model, std::span<const gp::Task> tasks,
                                const EvalConfig& cfg, bool context);

}  // namespace vnp
