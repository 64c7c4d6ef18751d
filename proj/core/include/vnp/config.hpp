#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "vnp/objective.hpp"
#include "vnp/variants.hpp"

namespace vnp {

struct TrainSettings {
  double beta = 1.0;
  /// beta ramps linearly from 0 over this many steps; 0 disables the ramp.
  std::size_t beta_warmup = 0;
  double lr = 5e-4;
  std::size_t batch_size = 32;
  std::size_t iterations = 20000;
  std::optional<double> clip_norm;
  std::size_t log_every = 10;
  std::size_t checkpoint_every = 1000;
  /// 0 disables in-training evaluation.
  std::size_t eval_every = 0;
  std::size_t eval_tasks = 64;

  bool operator==(const TrainSettings&) const = default;
};

/// KL weight used at `step` (1-based).
double beta_at(const TrainSettings& train, std::int64_t step);

struct Seeds {
  std::uint64_t data = 1000;
  std::uint64_t init = 0;
  std::uint64_t noise = 0;
  bool operator==(const Seeds&) const = default;
};

struct ExperimentConfig {
  gp::TaskSamplerConfig sampler{};
  std::string variant = "vnp";
  ModelDims dims{};
  TrainSettings train{};
  Seeds seeds{};
  EvalConfig eval{};
  std::size_t eval_set_size = 3000;
  std::string output_dir = "runs/default";

  /// Throws ConfigError on any invalid field.
  void validate() const;
  /// The model described by `variant` and `dims`, with the sampler domain.
  Model model() const;
  bool operator==(const ExperimentConfig& other) const;
};

std::string config_to_json(const ExperimentConfig& cfg);
/// Keys missing from `text` keep their defaults; unknown keys and invalid
/// values are errors.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one "section.key=value" override. The value is read as JSON when
/// it parses, otherwise as a string.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

/// The same config with only the fields that define the model architecture.
std::string architecture_json(const ExperimentConfig& cfg);

}  // namespace vnp
