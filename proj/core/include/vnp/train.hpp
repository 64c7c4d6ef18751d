#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vnp/checkpoint.hpp"
#include "vnp/config.hpp"

namespace vnp {

struct MetricsRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double nll = 0.0;
  std::vector<double> kl;
  double wall = 0.0;  // seconds since the current process started training
  std::optional<double> eval_target;
};

std::string metrics_to_json_line(const MetricsRecord& r);
MetricsRecord metrics_from_json_line(const std::string& line);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

/// Compares everything except wall-clock time. rel_tol = 0 demands equality.
bool same_metrics(const MetricsRecord& a, const MetricsRecord& b, double rel_tol = 0.0);

struct TrainOptions {
  /// Continue from output_dir/checkpoint.bin when it exists.
  bool resume = true;
  /// Return right after this step without writing a checkpoint, as if killed.
  std::optional<std::int64_t> stop_after;
  std::ostream* log = nullptr;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRecord> records;  // the whole metrics file
  bool completed = false;
};

/// Files under cfg.output_dir: config.json, metrics.jsonl, checkpoint.bin.
/// Step t draws task i from task_seed(data, (t-1)*batch + i) and its latent
/// noise from a generator keyed by (noise, t), so a resumed run replays the
/// same stream. A non-finite loss leaves the pre-step state in checkpoint.bin,
/// dumps the batch to failed_batch.jsonl and throws NumericError.
TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opts = {});

/// The tasks of training step `step` (1-based).
std::vector<gp::Task> training_tasks(const ExperimentConfig& cfg, std::int64_t step);

/// Model and parameters from a checkpoint; its embedded config is returned too.
struct LoadedModel {
  ExperimentConfig config;
  Model model;
  ParamStore<float> params;
  std::string hash;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

}  // namespace vnp
