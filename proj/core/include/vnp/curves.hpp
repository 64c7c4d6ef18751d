#pragma once

#include <filesystem>
#include <vector>

#include "vnp/variants.hpp"

namespace vnp {

struct CurveOptions {
  std::size_t num_samples = 20;
  std::size_t grid = 200;
  std::uint64_t seed = 0;
};

struct CurveData {
  std::vector<double> x;
  std::vector<std::vector<double>> sample_means;  // [num_samples][grid]
  std::vector<double> mean;                       // mean of the sample means
  std::vector<double> sigma;                      // predictive std over samples and noise
};

/// Prior-mode decoding on an even grid over the domain (endpoints included),
/// one latent draw per sample curve.
CurveData sample_curves(const ParamStore<float>& store, const Model& model, const gp::Task& task,
                        const CurveOptions& opts = {});

/// Columns: x, sample_1..sample_n, mean, sigma.
void write_curves_csv(const std::filesystem::path& path, const CurveData& curves);
/// Columns: split, x, y.
void write_points_csv(const std::filesystem::path& path, const gp::Task& task);

}  // namespace vnp
