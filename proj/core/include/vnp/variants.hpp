#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vnp/decoder.hpp"

namespace vnp {

enum class KlMode { Hierarchical, SingleFinal, None };
enum class EncoderKind { Bottleneck, MeanAggregate };

std::string to_string(KlMode mode);
std::string to_string(EncoderKind kind);

struct VariantSpec {
  std::string name;
  std::size_t L_K = 4;
  KlMode kl_mode = KlMode::Hierarchical;
  EncoderKind encoder = EncoderKind::Bottleneck;

  /// KL-free variants must be deterministic (L_K = 0); single_final needs a
  /// latent; the mean-aggregate encoder is only the CNP baseline.
  void validate() const;
  bool operator==(const VariantSpec&) const = default;

  static VariantSpec vnp(std::size_t levels);
  static VariantSpec single_z(std::size_t levels);
  static VariantSpec cnp();
};

/// "vnp" (hierarchical, or deterministic when L_K = 0), "single_z", "cnp".
VariantSpec parse_variant(std::string_view kind, std::size_t L_K);
/// Inverse of parse_variant's first argument.
std::string variant_kind(const VariantSpec& spec);

/// VNP with L_K in {0, 2, 4}, single z at L_K = 4, and CNP.
std::vector<VariantSpec> desk_ladder();

struct Model {
  VariantSpec variant;
  ModelDims dims;  // dims.L_K always equals variant.L_K
};

Model build_variant(const VariantSpec& spec, ModelDims dims);

template <class S>
ParamStore<S> init_params(const Model& model, std::uint64_t seed);

template <class S>
struct ModelOutput {
  GaussianHead<S> predictive;
  std::vector<LatentLevel<S>> levels;
  Var<S> y;      // scored values, aligned with predictive rows
  Segments seg;  // one block per (task, replica)
};

/// Full forward pass. With replicas > 1 the encoder and cross-attention run
/// once per task and the latent path runs `replicas` times, task-major; the
/// noise must then have size() * replicas rows per level.
template <class S>
ModelOutput<S> forward(Graph<S>& g, const ParamStore<S>& store, const Model& model, const TaskBatch<S>& batch,
                       DecodeMode mode, const LatentNoise<S>& noise, std::size_t replicas = 1);

}  // namespace vnp
