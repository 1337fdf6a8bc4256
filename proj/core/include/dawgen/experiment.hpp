#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dawgen/generator_tuning.hpp"
#include "dawgen/model.hpp"
#include "dawgen/pretrain.hpp"
#include "dawgen/prompt_tuning.hpp"
#include "dawgen/synthesis.hpp"
#include "dawgen/task.hpp"

namespace dawgen {

struct ExperimentConfig {
  std::string task = "toy-paraphrase";
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int shots_per_class = 16;
  int dev_per_class = 16;
  int test_per_class = 500;
  int pool_per_class = 200;

  bool use_synthetic = true;  // false: vanilla prompt tuning on the shots
  GeneratorTuningConfig gen;  // lambda_dist = 0 is the unregularized mode
  int per_class = 1000;       // synthetic examples per class
  DecodeConfig decode;

  TrainConfig pt;
  MixStrategy strategy = MixStrategy::Paired;

  std::string out_dir;  // empty: keep everything in memory
  int jobs = 1;
  std::uint64_t master_seed = 2024;
};

/// Scales iteration counts down so a full matrix stays interactive on one
/// CPU core; all semantics unchanged.
ExperimentConfig quick_profile(ExperimentConfig cfg);

/// DAWGEN_LAB_SEED, when set, overrides the configured master seed.
std::optional<std::uint64_t> env_seed_override();

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double test_accuracy = 0.0;
  double best_dev_accuracy = 0.0;
  std::optional<double> oracle_agreement;
  double wall_seconds = 0.0;
};

struct RunReport {
  std::string label;
  std::string task;
  std::string generator;  // "none" | "fewgen" | "dawgen"
  std::string strategy;
  bool gs = false;
  std::vector<SeedOutcome> outcomes;
  double mean = 0.0;     // over successful seeds
  double stddev = 0.0;   // population std
  std::uint64_t config_digest = 0;
  double wall_seconds = 0.0;
};

void finalize_stats(RunReport& report);
std::uint64_t config_digest(const ExperimentConfig& cfg);

/// Full per-seed pipeline: task build, few-shot draw, generator tuning,
/// synthesis, prompt tuning, test evaluation. Stage errors become failure
/// records on the seed, not exceptions.
RunReport run_experiment(const Model& m, const Vocabulary& vocab,
                         const ExperimentConfig& cfg);

/// Mixing-strategy rows for both generator modes (the unregularized
/// generator additionally gets the label-smoothing row).
std::vector<RunReport> run_strategy_matrix(const Model& m,
                                           const Vocabulary& vocab,
                                           const ExperimentConfig& base);

/// Synthetic-only / +real / +real+surgery rows per generator mode, plus the
/// real-only baseline.
std::vector<RunReport> run_ablation_matrix(const Model& m,
                                           const Vocabulary& vocab,
                                           const ExperimentConfig& base);

// ---- report emission ----

struct ResultRow {
  std::string label, task, generator, strategy;
  int gs = 0;
  std::uint64_t seed = 0;
  int ok = 0;
  double accuracy = 0.0;           // NaN when failed
  double oracle_agreement = 0.0;   // NaN when absent
  std::string error;
};

/// results.csv (one row per seed outcome), results.json (full reports with
/// aggregates and config digest), report.txt (aligned table). Byte-stable
/// for equal inputs.
void emit_report(const std::vector<RunReport>& reports,
                 const std::string& out_dir);

std::vector<ResultRow> read_results_csv(const std::string& path);

std::string format_report_table(const std::vector<RunReport>& reports);

}  // namespace dawgen
