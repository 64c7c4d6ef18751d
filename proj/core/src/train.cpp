#include "vnp/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <ostream>

#include "vnp/error.hpp"
#include "vnp/task_io.hpp"

namespace vnp {

namespace fs = std::filesystem;

std::string metrics_to_json_line(const MetricsRecord& r) {
  nlohmann::json j{{"step", r.step}, {"loss", r.loss}, {"nll", r.nll}, {"kl", r.kl}, {"wall", r.wall}};
  if (r.eval_target) j["eval_target"] = *r.eval_target;
  return j.dump();
}

MetricsRecord metrics_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    MetricsRecord r;
    r.step = j.at("step").get<std::int64_t>();
    r.loss = j.at("loss").get<double>();
    r.nll = j.at("nll").get<double>();
    r.kl = j.at("kl").get<std::vector<double>>();
    r.wall = j.at("wall").get<double>();
    if (j.contains("eval_target")) r.eval_target = j.at("eval_target").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics record: ") + e.what());
  }
}

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::vector<MetricsRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(metrics_from_json_line(line));
  return out;
}

namespace {

bool close(double a, double b, double rel_tol) {
  if (rel_tol == 0.0) return a == b;
  return std::abs(a - b) <= rel_tol * std::max({std::abs(a), std::abs(b), 1e-12});
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

/// Keeps the records up to and including `step`.
void truncate_metrics(const fs::path& path, std::int64_t step) {
  auto records = read_metrics(path);
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : records)
    if (r.step <= step) out << metrics_to_json_line(r) << '\n';
}

constexpr std::uint64_t kNoiseSalt = 0x9e3779b97f4a7c15ull;

}  // namespace

bool same_metrics(const MetricsRecord& a, const MetricsRecord& b, double rel_tol) {
  if (a.step != b.step || a.kl.size() != b.kl.size()) return false;
  if (!close(a.loss, b.loss, rel_tol) || !close(a.nll, b.nll, rel_tol)) return false;
  for (std::size_t i = 0; i < a.kl.size(); ++i)
    if (!close(a.kl[i], b.kl[i], rel_tol)) return false;
  if (a.eval_target.has_value() != b.eval_target.has_value()) return false;
  return !a.eval_target || close(*a.eval_target, *b.eval_target, rel_tol);
}

std::vector<gp::Task> training_tasks(const ExperimentConfig& cfg, std::int64_t step) {
  std::vector<gp::Task> tasks;
  const std::uint64_t base = static_cast<std::uint64_t>(step - 1) * cfg.train.batch_size;
  for (std::size_t i = 0; i < cfg.train.batch_size; ++i) {
    const std::uint64_t seed = gp::task_seed(cfg.seeds.data, base + i);
    Rng rng(seed);
    gp::Task t = gp::sample_task(cfg.sampler, rng);
    t.seed = seed;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const Model model = cfg.model();
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const fs::path ckpt_path = dir / "checkpoint.bin", metrics_path = dir / "metrics.jsonl";
  const std::string cfg_json = config_to_json(cfg);

  Checkpoint state;
  state.config_json = cfg_json;
  if (opts.resume && fs::exists(ckpt_path)) {
    state = load_checkpoint(ckpt_path);
    const ExperimentConfig saved = config_from_json(state.config_json);
    if (architecture_json(saved) != architecture_json(cfg))
      throw ConfigError("checkpoint " + ckpt_path.string() + " was written for a different architecture");
    state.config_json = cfg_json;
    truncate_metrics(metrics_path, state.step);
  } else {
    state.params = init_params<float>(model, cfg.seeds.init);
    std::ofstream(metrics_path, std::ios::trunc);
  }
  write_text(dir / "config.json", cfg_json + "\n");

  std::vector<gp::Task> eval_tasks;
  if (cfg.train.eval_every > 0) {
    gp::TaskSamplerConfig ec = cfg.sampler;
    ec.seed = cfg.eval.seed;
    eval_tasks = gp::sample_task_set(ec, cfg.train.eval_tasks);
  }

  AdamConfig adam;
  adam.lr = cfg.train.lr;
  adam.clip_norm = cfg.train.clip_norm;

  std::ofstream metrics(metrics_path, std::ios::app);
  const auto start = std::chrono::steady_clock::now();
  const auto total = static_cast<std::int64_t>(cfg.train.iterations);
  for (std::int64_t step = state.step + 1; step <= total; ++step) {
    const auto tasks = training_tasks(cfg, step);
    Rng noise_rng(gp::task_seed(cfg.seeds.noise ^ kNoiseSalt, static_cast<std::uint64_t>(step)));
    const auto noise = draw_noise<float>(model.dims.L_K, tasks.size(), model.dims.d_z, noise_rng);

    MetricsRecord rec;
    try {
      Graph<float> g;
      const auto batch = make_batch<float>(tasks);
      const auto loss = elbo_loss(g, state.params, model, batch, beta_at(cfg.train, step), noise);
      auto grads = g.backward(loss.total);
      for (const auto& [name, p] : state.params) grads.try_emplace(name, Tensor<float>::zeros(p.shape()));
      adam_step(state.params, grads, state.adam, adam, step);
      for (const auto& [name, p] : state.params)
        if (!p.all_finite()) throw NumericError("parameter " + name + " became non-finite");
      rec.loss = loss.breakdown.total;
      rec.nll = loss.breakdown.nll;
      rec.kl = loss.breakdown.kl_per_level;
    } catch (const NumericError& e) {
      save_checkpoint(ckpt_path, state);
      write_tasks(dir / "failed_batch.jsonl", tasks);
      throw NumericError("step " + std::to_string(step) + ": " + e.what() + "; batch written to " +
                         (dir / "failed_batch.jsonl").string() + ", last good state in " + ckpt_path.string());
    }
    state.step = step;

    const bool log_now = step == 1 || step % static_cast<std::int64_t>(cfg.train.log_every) == 0 || step == total;
    const bool eval_now = cfg.train.eval_every > 0 && step % static_cast<std::int64_t>(cfg.train.eval_every) == 0;
    if (log_now || eval_now) {
      rec.step = step;
      if (eval_now) {
        const auto s = summarize(score_split(state.params, model, eval_tasks, cfg.eval, false));
        rec.eval_target = s.mean;
      }
      rec.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      metrics << metrics_to_json_line(rec) << '\n';
      metrics.flush();
      if (opts.log && (step % 500 == 0 || step == 1 || step == total))
        *opts.log << "step " << step << " loss " << rec.loss << " nll " << rec.nll << " (" << rec.wall << " s)\n";
    }
    if (opts.stop_after && step >= *opts.stop_after) {
      metrics.close();
      return {state, read_metrics(metrics_path), false};
    }
    if (step % static_cast<std::int64_t>(cfg.train.checkpoint_every) == 0 || step == total)
      save_checkpoint(ckpt_path, state);
  }
  metrics.close();
  if (!fs::exists(ckpt_path)) save_checkpoint(ckpt_path, state);
  return {state, read_metrics(metrics_path), true};
}

LoadedModel load_model(const fs::path& checkpoint) {
  Checkpoint c = load_checkpoint(checkpoint);
  LoadedModel out;
  out.config = config_from_json(c.config_json);
  out.model = out.config.model();
  const ParamStore<float> expected = init_params<float>(out.model, 0);
  if (expected.names() != c.params.names())
    throw ConfigError("checkpoint " + checkpoint.string() + " does not match its configured architecture");
  for (const auto& [name, t] : expected)
    if (t.shape() != c.params.get(name).shape())
      throw ConfigError("checkpoint parameter " + name + " has shape " + to_string(c.params.get(name).shape()) +
                        ", expected " + to_string(t.shape()));
  out.hash = content_hash(c);
  out.params = std::move(c.params);
  return out;
}

}  // namespace vnp
