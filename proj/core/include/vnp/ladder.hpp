#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vnp/train.hpp"

namespace vnp {

/// Replicate i of every variant uses data seed base+i (shared across
/// variants), init seed base+i and noise seed base+i.
ExperimentConfig replicate_config(const ExperimentConfig& base, const VariantSpec& variant, std::size_t replicate,
                                  const std::filesystem::path& root);

struct VariantResult {
  std::string variant;
  std::vector<EvalReport> seeds;
  double target_mean = 0.0;  // mean of per-seed means
  double target_se = 0.0;    // sqrt(sum se_i^2) / n
  double context_mean = 0.0;
  double context_se = 0.0;
};

struct LadderSummary {
  std::vector<VariantResult> variants;
  const VariantResult& at(const std::string& name) const;
};

/// Trains and evaluates every (variant, replicate) under root/<variant>/seed<i>.
/// Finished runs (checkpoint at the final step plus report.json) are skipped,
/// interrupted ones resume. Writes root/ladder.json.
LadderSummary run_ladder(const ExperimentConfig& base, const std::vector<VariantSpec>& variants, std::size_t seeds,
                         const std::filesystem::path& root, const std::vector<gp::Task>& eval_tasks,
                         std::ostream* log = nullptr);

/// Reads root/<variant>/seed<i>/report.json for the given variants.
LadderSummary load_ladder(const std::filesystem::path& root, const std::vector<VariantSpec>& variants,
                          std::size_t seeds);

std::string ladder_to_json(const LadderSummary& s);

/// Gap threshold for comparing two pooled means: 2 sqrt(se_a^2 + se_b^2).
double gap_threshold(const VariantResult& a, const VariantResult& b);

/// The eval set of a config: 3000 tasks from seed eval.seed unless overridden.
std::vector<gp::Task> default_eval_set(const ExperimentConfig& cfg);

}  // namespace vnp
