#include "vnp/config.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vnp/error.hpp"

namespace vnp {

using nlohmann::json;

namespace {

json to_json_object(const ExperimentConfig& c) {
  const auto& k = c.sampler.kernel;
  json clip = c.train.clip_norm ? json(*c.train.clip_norm) : json(nullptr);
  return json{
      {"kernel",
       {{"family", gp::to_string(k.family)},
        {"lengthscale", k.lengthscale},
        {"variance", k.variance},
        {"jitter", k.jitter}}},
      {"sampler",
       {{"n_context", {c.sampler.n_context.lo, c.sampler.n_context.hi}},
        {"n_target", {c.sampler.n_target.lo, c.sampler.n_target.hi}},
        {"domain", {c.sampler.domain.lo, c.sampler.domain.hi}},
        {"noise_std", c.sampler.noise_std}}},
      {"model",
       {{"variant", c.variant},
        {"d", c.dims.d},
        {"d_z", c.dims.d_z},
        {"L_s", c.dims.L_s},
        {"L_c", c.dims.L_c},
        {"L_K", c.dims.L_K},
        {"m", c.dims.m},
        {"heads", c.dims.heads}}},
      {"train",
       {{"beta", c.train.beta},
        {"beta_warmup", c.train.beta_warmup},
        {"lr", c.train.lr},
        {"batch_size", c.train.batch_size},
        {"iterations", c.train.iterations},
        {"clip_norm", clip},
        {"log_every", c.train.log_every},
        {"checkpoint_every", c.train.checkpoint_every},
        {"eval_every", c.train.eval_every},
        {"eval_tasks", c.train.eval_tasks}}},
      {"seeds", {{"data", c.seeds.data}, {"init", c.seeds.init}, {"noise", c.seeds.noise}}},
      {"eval",
       {{"iw_samples", c.eval.iw_samples}, {"seed", c.eval.seed}, {"chunk", c.eval.chunk}, {"tasks", c.eval_set_size}}},
      {"output_dir", c.output_dir},
  };
}

void check_known_keys(const json& defaults, const json& given, const std::string& path) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + path + key + "'");
    if (defaults[key].is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + path + key + "' must be an object");
      check_known_keys(defaults[key], value, path + key + ".");
    }
  }
}

template <class T>
T read(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + section + "." + key + "' has the wrong type");
  }
}

gp::IntRange read_range(const json& j, const char* section, const char* key) {
  const auto v = read<std::vector<int>>(j, section, key);
  if (v.size() != 2) throw ConfigError(std::string("config key '") + section + "." + key + "' must be [lo, hi]");
  return {v[0], v[1]};
}

ExperimentConfig from_json_object(const json& j) {
  ExperimentConfig c;
  c.sampler.kernel.family = gp::parse_kernel_family(read<std::string>(j, "kernel", "family"));
  c.sampler.kernel.lengthscale = read<double>(j, "kernel", "lengthscale");
  c.sampler.kernel.variance = read<double>(j, "kernel", "variance");
  c.sampler.kernel.jitter = read<double>(j, "kernel", "jitter");
  c.sampler.n_context = read_range(j, "sampler", "n_context");
  c.sampler.n_target = read_range(j, "sampler", "n_target");
  const auto dom = read<std::vector<double>>(j, "sampler", "domain");
  if (dom.size() != 2) throw ConfigError("config key 'sampler.domain' must be [lo, hi]");
  c.sampler.domain = {dom[0], dom[1]};
  c.sampler.noise_std = read<double>(j, "sampler", "noise_std");

  c.variant = read<std::string>(j, "model", "variant");
  c.dims.d = read<std::size_t>(j, "model", "d");
  c.dims.d_z = read<std::size_t>(j, "model", "d_z");
  c.dims.L_s = read<std::size_t>(j, "model", "L_s");
  c.dims.L_c = read<std::size_t>(j, "model", "L_c");
  c.dims.L_K = read<std::size_t>(j, "model", "L_K");
  c.dims.m = read<std::size_t>(j, "model", "m");
  c.dims.heads = read<std::size_t>(j, "model", "heads");
  c.dims.domain = c.sampler.domain;

  c.train.beta = read<double>(j, "train", "beta");
  c.train.beta_warmup = read<std::size_t>(j, "train", "beta_warmup");
  c.train.lr = read<double>(j, "train", "lr");
  c.train.batch_size = read<std::size_t>(j, "train", "batch_size");
  c.train.iterations = read<std::size_t>(j, "train", "iterations");
  if (j.at("train").contains("clip_norm") && !j.at("train").at("clip_norm").is_null())
    c.train.clip_norm = read<double>(j, "train", "clip_norm");
  c.train.log_every = read<std::size_t>(j, "train", "log_every");
  c.train.checkpoint_every = read<std::size_t>(j, "train", "checkpoint_every");
  c.train.eval_every = read<std::size_t>(j, "train", "eval_every");
  c.train.eval_tasks = read<std::size_t>(j, "train", "eval_tasks");

  c.seeds.data = read<std::uint64_t>(j, "seeds", "data");
  c.seeds.init = read<std::uint64_t>(j, "seeds", "init");
  c.seeds.noise = read<std::uint64_t>(j, "seeds", "noise");

  c.eval.iw_samples = read<std::size_t>(j, "eval", "iw_samples");
  c.eval.seed = read<std::uint64_t>(j, "eval", "seed");
  c.eval.chunk = read<std::size_t>(j, "eval", "chunk");
  c.eval_set_size = read<std::size_t>(j, "eval", "tasks");
  if (!j.at("output_dir").is_string()) throw ConfigError("config key 'output_dir' must be a string");
  c.output_dir = j.at("output_dir").get<std::string>();
  return c;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

double beta_at(const TrainSettings& train, std::int64_t step) {
  if (train.beta_warmup == 0) return train.beta;
  const double frac = static_cast<double>(step) / static_cast<double>(train.beta_warmup);
  return train.beta * std::min(1.0, frac);
}

void ExperimentConfig::validate() const {
  sampler.validate();
  (void)model();
  if (!(train.lr >= 0)) throw ConfigError("train.lr must be non-negative");
  if (!(train.beta >= 0)) throw ConfigError("train.beta must be non-negative");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (train.log_every == 0) throw ConfigError("train.log_every must be positive");
  if (train.checkpoint_every == 0) throw ConfigError("train.checkpoint_every must be positive");
  if (train.clip_norm && !(*train.clip_norm > 0)) throw ConfigError("train.clip_norm must be positive");
  if (eval.iw_samples == 0) throw ConfigError("eval.iw_samples must be positive");
  if (eval.chunk == 0) throw ConfigError("eval.chunk must be positive");
  if (eval_set_size == 0) throw ConfigError("eval.tasks must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

Model ExperimentConfig::model() const {
  ModelDims d = dims;
  d.domain = sampler.domain;
  return build_variant(parse_variant(variant, dims.L_K), d);
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  return config_to_json(*this) == config_to_json(other);
}

std::string config_to_json(const ExperimentConfig& cfg) { return to_json_object(cfg).dump(2); }

ExperimentConfig config_from_json(const std::string& text) {
  const json given = parse_json(text, "config");
  if (!given.is_object()) throw ConfigError("config must be a JSON object");
  json merged = to_json_object(ExperimentConfig{});
  check_known_keys(merged, given, "");
  merged.merge_patch(given);
  ExperimentConfig cfg = from_json_object(merged);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json j = to_json_object(cfg);
  std::string pointer = "/" + key;
  for (auto& ch : pointer)
    if (ch == '.') ch = '/';
  const json::json_pointer ptr(pointer);
  if (!j.contains(ptr) || j[ptr].is_object()) throw ConfigError("unknown config key '" + key + "'");
  j[ptr] = value;
  cfg = from_json_object(j);
}

std::string architecture_json(const ExperimentConfig& cfg) {
  json j = to_json_object(cfg);
  return json{{"model", j["model"]}, {"domain", j["sampler"]["domain"]}}.dump();
}

}  // namespace vnp
