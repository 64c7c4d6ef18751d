#include "vnp/task_io.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "vnp/error.hpp"

namespace vnp {

namespace {

void append_array(std::string& out, const std::vector<double>& values) {
  out += '[';
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    out += buf;
  }
  out += ']';
}

std::vector<double> read_array(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw FormatError(std::string("task record: missing array '") + key + "'");
  std::vector<double> out;
  out.reserve(j[key].size());
  for (const auto& v : j[key]) {
    if (!v.is_number()) throw FormatError(std::string("task record: non-numeric entry in '") + key + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

std::string task_to_json_line(const gp::Task& task) {
  std::string out = "{\"xc\":";
  append_array(out, task.x_context);
  out += ",\"yc\":";
  append_array(out, task.y_context);
  out += ",\"xt\":";
  append_array(out, task.x_target);
  out += ",\"yt\":";
  append_array(out, task.y_target);
  out += ",\"kernel\":\"" + gp::to_string(task.kernel) + "\",\"seed\":" + std::to_string(task.seed) + "}";
  return out;
}

gp::Task task_from_json_line(const std::string& line, const gp::Interval& domain) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("task record: ") + e.what());
  }
  gp::Task t;
  t.x_context = read_array(j, "xc");
  t.y_context = read_array(j, "yc");
  t.x_target = read_array(j, "xt");
  t.y_target = read_array(j, "yt");
  t.domain = domain;
  if (!j.contains("kernel") || !j["kernel"].is_string()) throw FormatError("task record: missing 'kernel'");
  try {
    t.kernel = gp::parse_kernel_family(j["kernel"].get<std::string>());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("task record: ") + e.what());
  }
  if (j.contains("seed")) t.seed = j["seed"].get<std::uint64_t>();
  try {
    t.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return t;
}

void write_tasks(std::ostream& out, const std::vector<gp::Task>& tasks) {
  for (const auto& t : tasks) out << task_to_json_line(t) << '\n';
}

void write_tasks(const std::filesystem::path& path, const std::vector<gp::Task>& tasks) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_tasks(out, tasks);
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<gp::Task> read_tasks(std::istream& in, const gp::Interval& domain) {
  std::vector<gp::Task> tasks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      tasks.push_back(task_from_json_line(line, domain));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return tasks;
}

std::vector<gp::Task> read_tasks(const std::filesystem::path& path, const gp::Interval& domain) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open task file " + path.string());
  return read_tasks(in, domain);
}

}  // namespace vnp
