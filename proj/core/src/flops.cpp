#include "vnp/flops.hpp"

#include <cmath>
#include <cstdio>

#include "vnp/error.hpp"

namespace vnp {

std::vector<FlopsRow> flops_report(const ModelDims& dims, std::span<const double> ratios, std::size_t total_points) {
  if (total_points == 0) throw ConfigError("flops: total_points must be positive");
  std::vector<FlopsRow> rows;
  for (double r : ratios) {
    if (!(r > 0 && r <= 1)) throw ConfigError("flops: context ratio must lie in (0, 1]");
    FlopsRow row;
    row.ratio = r;
    row.n_context = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r * static_cast<double>(total_points))));
    row.n_target = total_points;
    const auto nc = static_cast<double>(row.n_context), nt = static_cast<double>(row.n_target);
    const auto m = static_cast<double>(dims.m), ls = static_cast<double>(dims.L_s), lc = static_cast<double>(dims.L_c),
               d = static_cast<double>(dims.d);
    row.vnp = attention_flops(nc, nt, m, ls, lc, d, AttentionMode::Vnp);
    row.anp = attention_flops(nc, nt, m, ls, lc, d, AttentionMode::Anp);
    rows.push_back(row);
  }
  for (const auto& row : rows)
    if (row.vnp != rows.front().vnp) throw Error("flops: vnp cost varies with the context ratio");
  return rows;
}

std::string format_flops_table(const std::vector<FlopsRow>& rows) {
  std::string out = "ratio    N_C     N_T     vnp_MMAC      anp_MMAC\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-8.3g %-7zu %-7zu %-13.4f %.4f\n", r.ratio, r.n_context, r.n_target, r.vnp / 1e6,
                  r.anp / 1e6);
    out += buf;
  }
  return out;
}

}  // namespace vnp
