#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dawgen/model.hpp"
#include "dawgen/sampling.hpp"
#include "dawgen/task.hpp"

namespace dawgen {

struct SynProvenance {
  int label = 0;
  std::uint64_t stream_seed = 0;
};

struct SyntheticDataset {
  std::vector<Example> examples;
  std::vector<SynProvenance> provenance;  // aligned with examples
  std::optional<double> oracle_agreement; // absent when per_class == 0
  DecodeConfig decode;
  std::uint64_t seed = 0;
};

/// Label-conditional generation: for each class, fresh s1 draws are paired
/// with a generated continuation under that class's prompt. Empty
/// continuations are dropped (with a bounded number of redraws); labels come
/// from the conditioning class, never from the oracle. oracle_agreement
/// reports how often the planted referee agrees with the conditioning label.
SyntheticDataset synthesize_dataset(const Model& m,
                                    const std::vector<Tensor>& prompts,
                                    const TaskSpec& spec, const Vocabulary& vocab,
                                    int per_class, const DecodeConfig& cfg,
                                    std::uint64_t seed);

/// JSONL examples next to a .meta.json sidecar (decode config, seed,
/// agreement, per-class counts).
void write_synthetic_dataset(const SyntheticDataset& ds, const TaskSpec& spec,
                             const Vocabulary& vocab, const std::string& path);

}  // namespace dawgen
