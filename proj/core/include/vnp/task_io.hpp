#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vnp/gp.hpp"

namespace vnp {

/// One task per line:
///   {"xc":[...],"yc":[...],"xt":[...],"yt":[...],"kernel":"rbf","seed":7}
/// Floats are written with 17 significant digits so a round trip is exact.
std::string task_to_json_line(const gp::Task& task);
gp::Task task_from_json_line(const std::string& line, const gp::Interval& domain = {});

void write_tasks(std::ostream& out, const std::vector<gp::Task>& tasks);
void write_tasks(const std::filesystem::path& path, const std::vector<gp::Task>& tasks);
std::vector<gp::Task> read_tasks(std::istream& in, const gp::Interval& domain = {});
std::vector<gp::Task> read_tasks(const std::filesystem::path& path, const gp::Interval& domain = {});

}  // namespace vnp
