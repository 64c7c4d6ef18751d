#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vnp::gp {

enum class KernelFamily { Rbf, Matern52 };

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

struct KernelSpec {
  KernelFamily family = KernelFamily::Rbf;
  double lengthscale = 1.0;
  double variance = 1.0;  // sigma_f^2
  double jitter = 1e-8;

  /// Throws ConfigError unless lengthscale > 0, variance > 0 and
  /// jitter in [1e-10, 1e-4].
  void validate() const;

  static KernelSpec rbf() { return {}; }
  static KernelSpec matern52() { return {KernelFamily::Matern52, 0.25, 1.0, 1e-8}; }

  bool operator==(const KernelSpec&) const = default;
};

struct Interval {
  double lo = -2.0;
  double hi = 2.0;

  double width() const noexcept { return hi - lo; }
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  bool operator==(const Interval&) const = default;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
  bool operator==(const IntRange&) const = default;
};

/// One regression episode drawn from a single joint GP sample.
struct Task {
  std::vector<double> x_context;
  std::vector<double> y_context;
  std::vector<double> x_target;
  std::vector<double> y_target;
  Interval domain;
  KernelFamily kernel = KernelFamily::Rbf;
  std::uint64_t seed = 0;

  std::size_t num_context() const noexcept { return x_context.size(); }
  std::size_t num_target() const noexcept { return x_target.size(); }
  /// The same task with its context set scored in place of the target set.
  Task context_as_target() const;
  /// Throws ConfigError on size mismatches, empty sets, or points outside the domain.
  void validate() const;

  bool operator==(const Task&) const = default;
};

struct TaskSamplerConfig {
  IntRange n_context{5, 15};
  IntRange n_target{15, 25};
  Interval domain{};
  KernelSpec kernel{};
  std::uint64_t seed = 0;
  /// i.i.d. observation noise standard deviation; 0 means noiseless.
  double noise_std = 0.0;

  void validate() const;
  bool operator==(const TaskSamplerConfig&) const = default;
};

/// k(r) for a distance r >= 0.
double kernel_value(const KernelSpec& spec, double r);

/// Cross-covariance matrix k(x_i, x'_j), no jitter.
Eigen::MatrixXd kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> x2);

/// k(x, x) + jitter * I.
Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const double> x);

/// Lower Cholesky factor of gram(spec, x). The jitter is escalated by 10x up
/// to 1e-4 on failure; after that a NumericError reports a condition estimate.
Eigen::MatrixXd cholesky_with_jitter(const KernelSpec& spec, std::span<const double> x);

/// One joint draw f(x) ~ GP(0, k) at the given inputs.
std::vector<double> sample_function_values(const KernelSpec& spec, std::span<const double> x, std::mt19937_64& rng);

/// Draws one task. Inputs are i.i.d. uniform on the domain; the first n_c
/// points of the joint draw form the context set and the rest the target set.
Task sample_task(const TaskSamplerConfig& cfg, std::mt19937_64& rng);

/// Seed of task `index` in a stream rooted at `seed`.
std::uint64_t task_seed(std::uint64_t seed, std::uint64_t index);

/// `count` tasks where task i is drawn from its own generator seeded with
/// task_seed(cfg.seed, i). Same config -> identical stream.
std::vector<Task> sample_task_set(const TaskSamplerConfig& cfg, std::size_t count);

enum class OracleMode {
  Marginal,  // mean of per-point log N(y_t; mu_t, var_t)
  Joint,     // log N(Y_T; mu, Sigma) / |T|
};

struct OracleScore {
  double mean_loglik = 0.0;
  std::vector<double> per_point;  // marginal scores, one per target point
  std::vector<bool> flagged;      // target coincides with a context input
  std::size_t used = 0;           // points that entered the average
};

/// Exact GP conditioning of the target values on the context set.
OracleScore gp_oracle_loglik(const Task& task, const KernelSpec& spec, OracleMode mode = OracleMode::Marginal,
                             double noise_std = 0.0);

}  // namespace vnp::gp
