#include "vnp/gp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <sstream>

#include "vnp/error.hpp"

namespace vnp::gp {

namespace {

constexpr double kMaxJitter = 1e-4;

void check_range(const IntRange& r, const char* what) {
  if (r.lo < 1 || r.hi < r.lo) {
    throw ConfigError(std::string(what) + " range [" + std::to_string(r.lo) + "," + std::to_string(r.hi) +
                      "] must be nonempty with lower bound >= 1");
  }
}

}  // namespace

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Rbf:
      return "rbf";
    case KernelFamily::Matern52:
      return "matern52";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "rbf") return KernelFamily::Rbf;
  if (name == "matern52" || name == "matern") return KernelFamily::Matern52;
  throw ConfigError("unknown kernel family '" + std::string(name) + "' (expected rbf or matern52)");
}

void KernelSpec::validate() const {
  if (!(lengthscale > 0)) throw ConfigError("kernel lengthscale must be positive");
  if (!(variance > 0)) throw ConfigError("kernel variance must be positive");
  if (!(jitter >= 1e-10 && jitter <= 1e-4)) throw ConfigError("kernel jitter must lie in [1e-10, 1e-4]");
}

Task Task::context_as_target() const {
  Task t = *this;
  t.x_target = x_context;
  t.y_target = y_context;
  return t;
}

void Task::validate() const {
  if (x_context.size() != y_context.size()) throw ConfigError("task: context x/y length mismatch");
  if (x_target.size() != y_target.size()) throw ConfigError("task: target x/y length mismatch");
  if (x_context.empty()) throw ConfigError("task: empty context set");
  if (x_target.empty()) throw ConfigError("task: empty target set");
  for (double x : x_context)
    if (!domain.contains(x)) throw ConfigError("task: context input outside domain");
  for (double x : x_target)
    if (!domain.contains(x)) throw ConfigError("task: target input outside domain");
}

void TaskSamplerConfig::validate() const {
  check_range(n_context, "n_context");
  check_range(n_target, "n_target");
  if (!(domain.hi > domain.lo)) throw ConfigError("sampler domain must have positive width");
  if (noise_std < 0) throw ConfigError("observation noise must be non-negative");
  kernel.validate();
}

double kernel_value(const KernelSpec& spec, double r) {
  switch (spec.family) {
    case KernelFamily::Rbf:
      return spec.variance * std::exp(-0.5 * r * r / (spec.lengthscale * spec.lengthscale));
    case KernelFamily::Matern52: {
      const double a = std::sqrt(5.0) * r / spec.lengthscale;
      return spec.variance * (1.0 + a + a * a / 3.0) * std::exp(-a);
    }
  }
  return 0.0;
}

Eigen::MatrixXd kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> x2) {
  spec.validate();
  Eigen::MatrixXd k(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(x2.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x2.size(); ++j)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel_value(spec, std::abs(x[i] - x2[j]));
  return k;
}

Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const double> x) {
  Eigen::MatrixXd k = kernel_eval(spec, x, x);
  k.diagonal().array() += spec.jitter;
  return k;
}

Eigen::MatrixXd cholesky_with_jitter(const KernelSpec& spec, std::span<const double> x) {
  Eigen::MatrixXd k = kernel_eval(spec, x, x);
  for (double jitter = spec.jitter; jitter <= kMaxJitter * (1 + 1e-12); jitter *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  std::ostringstream os;
  os << "cholesky failed after jitter escalation to " << kMaxJitter << " (n=" << x.size()
     << ", eigenvalue range [" << ev.minCoeff() << ", " << ev.maxCoeff() << "], condition estimate "
     << ev.maxCoeff() / std::max(std::abs(ev.minCoeff()), 1e-300) << ")";
  throw NumericError(os.str());
}

std::vector<double> sample_function_values(const KernelSpec& spec, std::span<const double> x, std::mt19937_64& rng) {
  const Eigen::MatrixXd l = cholesky_with_jitter(spec, x);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd eps(static_cast<Eigen::Index>(x.size()));
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = normal(rng);
  const Eigen::VectorXd f = l.triangularView<Eigen::Lower>() * eps;
  return {f.data(), f.data() + f.size()};
}

Task sample_task(const TaskSamplerConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_int_distribution<int> nc_dist(cfg.n_context.lo, cfg.n_context.hi);
  std::uniform_int_distribution<int> nt_dist(cfg.n_target.lo, cfg.n_target.hi);
  const auto nc = static_cast<std::size_t>(nc_dist(rng));
  const auto nt = static_cast<std::size_t>(nt_dist(rng));

  std::uniform_real_distribution<double> x_dist(cfg.domain.lo, cfg.domain.hi);
  std::vector<double> x(nc + nt);
  for (auto& v : x) v = x_dist(rng);
  std::vector<double> y = sample_function_values(cfg.kernel, x, rng);
  if (cfg.noise_std > 0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (auto& v : y) v += noise(rng);
  }

  Task task;
  task.domain = cfg.domain;
  task.kernel = cfg.kernel.family;
  task.x_context.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nc));
  task.y_context.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(nc));
  task.x_target.assign(x.begin() + static_cast<std::ptrdiff_t>(nc), x.end());
  task.y_target.assign(y.begin() + static_cast<std::ptrdiff_t>(nc), y.end());
  return task;
}

std::uint64_t task_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x7a5bu};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<Task> sample_task_set(const TaskSamplerConfig& cfg, std::size_t count) {
  std::vector<Task> tasks;
  tasks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = task_seed(cfg.seed, i);
    std::mt19937_64 rng(s);
    Task t = sample_task(cfg, rng);
    t.seed = s;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

OracleScore gp_oracle_loglik(const Task& task, const KernelSpec& spec, OracleMode mode, double noise_std) {
  spec.validate();
  const std::size_t nc = task.num_context(), nt = task.num_target();
  const double obs_var = spec.jitter + noise_std * noise_std;

  Eigen::MatrixXd kcc = kernel_eval(spec, task.x_context, task.x_context);
  kcc.diagonal().array() += obs_var;
  Eigen::LLT<Eigen::MatrixXd> llt(kcc);
  if (llt.info() != Eigen::Success) throw NumericError("gp oracle: context Gram matrix is not positive definite");

  const Eigen::Map<const Eigen::VectorXd> yc(task.y_context.data(), static_cast<Eigen::Index>(nc));
  const Eigen::VectorXd alpha = llt.solve(yc);
  const Eigen::MatrixXd kct = kernel_eval(spec, task.x_context, task.x_target);
  const Eigen::MatrixXd v = llt.matrixL().solve(kct);  // nc x nt
  const Eigen::VectorXd mu = kct.transpose() * alpha;

  OracleScore score;
  score.per_point.resize(nt);
  score.flagged.assign(nt, false);
  const double coincide = 1e-9 * spec.lengthscale;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  std::vector<Eigen::Index> kept;
  for (std::size_t t = 0; t < nt; ++t) {
    for (double xc : task.x_context)
      if (std::abs(xc - task.x_target[t]) < coincide) score.flagged[t] = true;
    const auto ti = static_cast<Eigen::Index>(t);
    const double var = spec.variance + obs_var - v.col(ti).squaredNorm();
    if (!(var > 0)) {
      if (score.flagged[t]) {
        score.per_point[t] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      throw NumericError("gp oracle: non-positive posterior variance at target " + std::to_string(t));
    }
    const double z = (task.y_target[t] - mu(ti)) / std::sqrt(var);
    score.per_point[t] = -half_log_2pi - 0.5 * std::log(var) - 0.5 * z * z;
    if (!score.flagged[t]) kept.push_back(ti);
  }
  score.used = kept.size();
  if (kept.empty()) throw NumericError("gp oracle: every target point coincides with a context point");

  if (mode == OracleMode::Marginal) {
    double total = 0.0;
    for (auto t : kept) total += score.per_point[static_cast<std::size_t>(t)];
    score.mean_loglik = total / static_cast<double>(kept.size());
    return score;
  }

  const auto n = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd cov(n, n);
  Eigen::VectorXd resid(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    resid(i) = task.y_target[static_cast<std::size_t>(kept[i])] - mu(kept[i]);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double kij =
          kernel_value(spec, std::abs(task.x_target[static_cast<std::size_t>(kept[i])] -
                                      task.x_target[static_cast<std::size_t>(kept[j])]));
      cov(i, j) = kij - v.col(kept[i]).dot(v.col(kept[j])) + (i == j ? obs_var : 0.0);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> post(cov);
  if (post.info() != Eigen::Success) throw NumericError("gp oracle: posterior covariance is not positive definite");
  const Eigen::VectorXd w = post.matrixL().solve(resid);
  const double logdet = 2.0 * post.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double joint = -static_cast<double>(n) * half_log_2pi - 0.5 * logdet - 0.5 * w.squaredNorm();
  score.mean_loglik = joint / static_cast<double>(n);
  return score;
}

}  // namespace vnp::gp
