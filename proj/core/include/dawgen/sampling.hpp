#pragma once

#include <cstdint>
#include <vector>

#include "dawgen/model.hpp"
#include "dawgen/rng.hpp"

namespace dawgen {

enum class DecodeStrategy { TopK, Nucleus };

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::TopK;
  int k = 10;
  double p = 0.9;           // nucleus cumulative mass
  double temperature = 1.0;
  int max_len = 16;
  std::uint64_t rng_seed = 0;
};

/// Draws one token. Temperature is applied first; top-k renormalizes the
/// softmax over the k highest logits (k clamped to V), nucleus over the
/// smallest sorted prefix reaching mass p. Ties in the sort break toward
/// the lower token id, keeping draws reproducible.
int sample_token(const std::vector<double>& logits, const DecodeConfig& cfg,
                 Rng& rng);

/// Candidate set the strategy would sample from, for auditing.
std::vector<int> candidate_set(const std::vector<double>& logits,
                               const DecodeConfig& cfg);

/// Autoregressive continuation of [prompt; context]; stops at EOS (which is
/// excluded from the result) or after max_len tokens.
std::vector<int> generate_sequence(const Model& m, const Tensor& prompt,
                                   const std::vector<int>& context,
                                   const DecodeConfig& cfg, int eos_id, Rng& rng);

}  // namespace dawgen
