#pragma once

#include <span>
#include <string>
#include <vector>

#include "vnp/encoder.hpp"

namespace vnp {

struct FlopsRow {
  double ratio = 0.0;
  std::size_t n_context = 0;
  std::size_t n_target = 0;
  double vnp = 0.0;
  double anp = 0.0;
};

/// Attention cost for each context ratio, with N_C = ratio * total_points
/// (rounded, at least 1) and every point queried as a target. Throws Error if
/// the vnp column is not constant.
std::vector<FlopsRow> flops_report(const ModelDims& dims, std::span<const double> ratios,
                                   std::size_t total_points = 1024);

std::string format_flops_table(const std::vector<FlopsRow>& rows);

}  // namespace vnp
