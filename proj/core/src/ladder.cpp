#include "vnp/ladder.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "vnp/error.hpp"

namespace vnp {

namespace fs = std::filesystem;

ExperimentConfig replicate_config(const ExperimentConfig& base, const VariantSpec& variant, std::size_t replicate,
                                  const fs::path& root) {
  ExperimentConfig c = base;
  c.variant = variant_kind(variant);
  c.dims.L_K = variant.L_K;
  c.seeds.data = base.seeds.data + replicate;
  c.seeds.init = base.seeds.init + replicate;
  c.seeds.noise = base.seeds.noise + replicate;
  c.output_dir = (root / variant.name / ("seed" + std::to_string(replicate))).string();
  return c;
}

const VariantResult& LadderSummary::at(const std::string& name) const {
  for (const auto& v : variants)
    if (v.variant == name) return v;
  throw ConfigError("ladder: no results for variant " + name);
}

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

VariantResult pool(const std::string& name, std::vector<EvalReport> reports) {
  VariantResult v;
  v.variant = name;
  const auto n = static_cast<double>(reports.size());
  double tse2 = 0.0, cse2 = 0.0;
  for (const auto& r : reports) {
    v.target_mean += r.target.mean / n;
    v.context_mean += r.context.mean / n;
    tse2 += r.target.se * r.target.se;
    cse2 += r.context.se * r.context.se;
  }
  v.target_se = std::sqrt(tse2) / n;
  v.context_se = std::sqrt(cse2) / n;
  v.seeds = std::move(reports);
  return v;
}

fs::path report_path(const fs::path& root, const VariantSpec& v, std::size_t i) {
  return root / v.name / ("seed" + std::to_string(i)) / "report.json";
}

}  // namespace

LadderSummary run_ladder(const ExperimentConfig& base, const std::vector<VariantSpec>& variants, std::size_t seeds,
                         const fs::path& root, const std::vector<gp::Task>& eval_tasks, std::ostream* log) {
  if (seeds == 0) throw ConfigError("ladder: need at least one seed");
  for (const auto& v : variants) {
    for (std::size_t i = 0; i < seeds; ++i) {
      const ExperimentConfig cfg = replicate_config(base, v, i, root);
      const fs::path dir = cfg.output_dir, report = dir / "report.json";
      if (fs::exists(report) && fs::exists(dir / "checkpoint.bin")) {
        const Checkpoint c = load_checkpoint(dir / "checkpoint.bin");
        if (c.step == static_cast<std::int64_t>(cfg.train.iterations)) {
          if (log) *log << v.name << " seed " << i << ": done, skipping" << std::endl;
          continue;
        }
      }
      if (log) *log << v.name << " seed " << i << ": training in " << dir.string() << std::endl;
      TrainOptions opts;
      opts.log = log;
      train(cfg, opts);
      const LoadedModel lm = load_model(dir / "checkpoint.bin");
      EvalReport r = evaluate(lm.params, lm.model, eval_tasks, cfg.eval, lm.hash);
      r.variant = v.name;
      std::ofstream(report) << to_json_string(r) << "\n";
      if (log)
        *log << v.name << " seed " << i << ": target " << r.target.mean << " +- " << r.target.se << ", context "
             << r.context.mean << " +- " << r.context.se << std::endl;
    }
  }
  LadderSummary s = load_ladder(root, variants, seeds);
  std::ofstream(root / "ladder.json") << ladder_to_json(s) << "\n";
  return s;
}

LadderSummary load_ladder(const fs::path& root, const std::vector<VariantSpec>& variants, std::size_t seeds) {
  LadderSummary s;
  for (const auto& v : variants) {
    std::vector<EvalReport> reports;
    for (std::size_t i = 0; i < seeds; ++i) reports.push_back(eval_report_from_json(read_text(report_path(root, v, i))));
    s.variants.push_back(pool(v.name, std::move(reports)));
  }
  return s;
}

std::string ladder_to_json(const LadderSummary& s) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& v : s.variants) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& r : v.seeds)
      seeds.push_back({{"checkpoint_hash", r.checkpoint_hash},
                       {"target", {{"mean", r.target.mean}, {"se", r.target.se}, {"count", r.target.count}}},
                       {"context", {{"mean", r.context.mean}, {"se", r.context.se}, {"count", r.context.count}}}});
    j.push_back({{"variant", v.variant},
                 {"target_mean", v.target_mean},
                 {"target_se", v.target_se},
                 {"context_mean", v.context_mean},
                 {"context_se", v.context_se},
                 {"seeds", seeds}});
  }
  return j.dump(2);
}

double gap_threshold(const VariantResult& a, const VariantResult& b) {
  return 2.0 * std::sqrt(a.target_se * a.target_se + b.target_se * b.target_se);
}

std::vector<gp::Task> default_eval_set(const ExperimentConfig& cfg) {
  gp::TaskSamplerConfig s = cfg.sampler;
  s.seed = cfg.eval.seed;
  return gp::sample_task_set(s, cfg.eval_set_size);
}

}  // namespace vnp
