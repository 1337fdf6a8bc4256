#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dawgen/model.hpp"
#include "dawgen/task.hpp"

namespace dawgen {

/// Batch-ordering regimes for mixing the few-shot set with synthetic data.
/// RealOnly / SynOnly are the single-source baselines.
enum class MixStrategy {
  RealPlusSyn,    // shuffled union, one stream
  RealPlusSynLS,  // union, label smoothing on synthetic items
  RealThenSyn,    // per epoch: real batches first
  SynThenReal,
  Paired,         // each step: one synthetic batch + one resampled real batch
  RealOnly,
  SynOnly,
};

MixStrategy parse_mix_strategy(const std::string& name);
std::string mix_strategy_name(MixStrategy s);

struct TrainConfig {
  double eta = 0.3;
  double epsilon = 1.0;     // weight on the (projected) synthetic gradient
  bool gs_enabled = true;   // project conflicting synthetic gradients
  int max_steps = 1000;
  int eval_every = 4;
  int real_batch = 4;
  int syn_batch = 4;
  double label_smoothing = 0.1;  // used only under RealPlusSynLS
  bool cosine_schedule = true;
  int prompt_len = 10;
  std::uint64_t seed = 0;
};

struct TrainLogRow {
  int step = 0;
  double real_loss = 0.0;    // NaN when the step had no real batch
  double syn_loss = 0.0;     // NaN when the step had no synthetic batch
  int conflict_flag = 0;     // 1 when the raw gradients opposed each other
  double dev_accuracy = 0.0; // NaN on steps without an eval
};

struct TrainResult {
  Tensor prompt;  // best checkpoint by dev accuracy (earliest on ties)
  double best_dev = 0.0;
  int best_step = 0;
  std::vector<TrainLogRow> log;
};

/// Mean cross-entropy of the renormalized verbalizer distribution at the
/// answer slot. With smoothing s the target puts 1-s on gold and s/(L-1)
/// on each other class; items with smooth=false use the hard target.
Tensor classification_loss(const Model& m, const Tensor& prompt,
                           const std::vector<Example>& batch,
                           const TaskSpec& spec, const Vocabulary& vocab,
                           double label_smoothing = 0.0);

double evaluate(const Model& m, const Tensor& prompt,
                const std::vector<Example>& data, const TaskSpec& spec,
                const Vocabulary& vocab);

TrainResult train_prompt(const Model& m, const std::vector<Example>& real,
                         const std::vector<Example>& syn,
                         const std::vector<Example>& dev, const TaskSpec& spec,
                         const Vocabulary& vocab, const TrainConfig& cfg,
                         MixStrategy strategy);

void write_training_log_csv(const std::vector<TrainLogRow>& log,
                            const std::string& path);

}  // namespace dawgen
