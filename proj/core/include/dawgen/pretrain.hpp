#pragma once

#include <cstdint>
#include <vector>

#include "dawgen/model.hpp"

namespace dawgen {

struct PretrainConfig {
  ModelDims dims;
  int epochs = 3;
  int batch_docs = 8;
  double lr = 3e-3;
  int warmup_steps = 50;
  double grad_clip = 1.0;
  int max_offset = 24;          // random position shift so prompt-displaced
                                // positions are seen during pretraining
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  Model model;                  // frozen on return
  double holdout_ppl = 0.0;
  double unigram_ppl = 0.0;     // add-one unigram baseline on the same holdout
  std::vector<double> loss_history;
};

/// Next-token training on the toy corpus with Adam and global-norm clipping.
/// The returned model is frozen and its held-out perplexity must beat the
/// unigram baseline; anything else is an error.
PretrainResult pretrain(const std::vector<std::vector<int>>& corpus,
                        const PretrainConfig& cfg);

/// Per-token perplexity of the frozen model over docs (targets are positions
/// 1..T-1 of each doc).
double corpus_perplexity(const Model& m, const std::vector<std::vector<int>>& docs);

/// Add-one-smoothed unigram perplexity: counts from `train`, scored on `eval`.
double unigram_perplexity(const std::vector<std::vector<int>>& train,
                          const std::vector<std::vector<int>>& eval_docs,
                          int vocab_size);

}  // namespace dawgen
