#include "dawgen/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "dawgen/dataset_io.hpp"
#include "dawgen/error.hpp"
#include "dawgen/checkpoint_io.hpp"
#include "dawgen/rng.hpp"

namespace dawgen {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t fnv64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string canonical(const ExperimentConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << c.task << '|';
  for (std::uint64_t s : c.seeds) os << s << ',';
  os << '|' << c.shots_per_class << '|' << c.dev_per_class << '|'
     << c.test_per_class << '|' << c.pool_per_class << '|' << c.use_synthetic
     << '|' << c.gen.epochs << '|' << c.gen.batch_per_class << '|'
     << c.gen.lr_q << '|' << c.gen.lr_w << '|' << c.gen.lambda_dist << '|'
     << c.gen.tau_w << '|' << c.gen.uniform_weights << '|'
     << c.gen.disc_log_ratio << '|' << c.gen.prompt_len << '|' << c.per_class
     << '|' << static_cast<int>(c.decode.strategy) << '|' << c.decode.k << '|'
     << c.decode.p << '|' << c.decode.temperature << '|' << c.decode.max_len
     << '|' << c.pt.eta << '|' << c.pt.epsilon << '|' << c.pt.gs_enabled << '|'
     << c.pt.max_steps << '|' << c.pt.eval_every << '|' << c.pt.real_batch
     << '|' << c.pt.syn_batch << '|' << c.pt.label_smoothing << '|'
     << c.pt.cosine_schedule << '|' << c.pt.prompt_len << '|'
     << mix_strategy_name(c.strategy) << '|' << c.master_seed;
  return os.str();
}

struct SeedBundle {
  SplitSet splits;
  std::vector<Example> few;
};

SeedBundle prepare_seed(const TaskSpec& spec, const ExperimentConfig& cfg,
                        std::uint64_t run_seed) {
  SeedBundle b;
  b.splits = build_task(spec, derive_seed(run_seed, "task"), cfg.test_per_class,
                        cfg.dev_per_class, cfg.pool_per_class);
  b.few = sample_few_shot(b.splits.train_pool, cfg.shots_per_class,
                          spec.num_classes, derive_seed(run_seed, "few-shot"));
  return b;
}

struct SynArtifacts {
  GeneratorTuningResult tuning;
  SyntheticDataset dataset;
};

SynArtifacts make_synthetic(const Model& m, const SeedBundle& b,
                            const TaskSpec& spec, const Vocabulary& vocab,
                            GeneratorTuningConfig gen, const DecodeConfig& dec,
                            int per_class, std::uint64_t run_seed) {
  gen.seed = derive_seed(run_seed, "generator");
  SynArtifacts a{tune_generator(m, b.few, spec, gen), {}};
  a.dataset = synthesize_dataset(m, a.tuning.prompts, spec, vocab, per_class,
                                 dec, derive_seed(run_seed, "synthesis"));
  return a;
}

void write_seed_artifacts(const std::string& out_dir, std::uint64_t seed,
                          const TaskSpec& spec, const Vocabulary& vocab,
                          const SeedBundle& b, const SynArtifacts* syn,
                          const TrainResult& tr, const Model& m) {
  if (out_dir.empty()) return;
  fs::path dir = fs::path(out_dir) / ("seed-" + std::to_string(seed));
  fs::create_directories(dir);
  write_examples_jsonl((dir / "few_shot.jsonl").string(), b.few, spec, vocab);
  if (syn)
    write_synthetic_dataset(syn->dataset, spec, vocab,
                            (dir / "synthetic.jsonl").string());
  write_training_log_csv(tr.log, (dir / "training_log.csv").string());
  save_prompt((dir / "prompt.ckpt").string(), tr.prompt, m.dims());
}

SeedOutcome run_one_seed(const Model& m, const Vocabulary& vocab,
                         const TaskSpec& spec, const ExperimentConfig& cfg,
                         std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  auto t0 = Clock::now();
  try {
    std::uint64_t run_seed = derive_seed(cfg.master_seed, "run", seed);
    SeedBundle b = prepare_seed(spec, cfg, run_seed);
    std::vector<Example> syn;
    SynArtifacts art;
    bool have_art = false;
    if (cfg.use_synthetic) {
      art = make_synthetic(m, b, spec, vocab, cfg.gen, cfg.decode,
                           cfg.per_class, run_seed);
      syn = art.dataset.examples;
      out.oracle_agreement = art.dataset.oracle_agreement;
      have_art = true;
    }
    TrainConfig pt = cfg.pt;
    pt.seed = derive_seed(run_seed, "prompt-tuning-run");
    MixStrategy strat =
        cfg.use_synthetic ? cfg.strategy : MixStrategy::RealOnly;
    TrainResult tr =
        train_prompt(m, b.few, syn, b.splits.dev, spec, vocab, pt, strat);
    out.best_dev_accuracy = tr.best_dev;
    out.test_accuracy = evaluate(m, tr.prompt, b.splits.test, spec, vocab);
    write_seed_artifacts(cfg.out_dir, seed, spec, vocab, b,
                         have_art ? &art : nullptr, tr, m);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.wall_seconds = seconds_since(t0);
  return out;
}

void run_pool(int jobs, std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> threads;
  int count = std::min<int>(jobs, static_cast<int>(n));
  threads.reserve(count);
  for (int i = 0; i < count; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
}

std::string generator_label(const ExperimentConfig& cfg) {
  if (!cfg.use_synthetic) return "none";
  return cfg.gen.lambda_dist == 0.0 ? "fewgen" : "dawgen";
}

}  // namespace

ExperimentConfig quick_profile(ExperimentConfig cfg) {
  cfg.gen.epochs = 6;
  cfg.per_class = 150;
  cfg.pt.max_steps = 120;
  cfg.test_per_class = 250;
  cfg.pool_per_class = 150;
  return cfg;
}

std::optional<std::uint64_t> env_seed_override() {
  const char* v = std::getenv("DAWGEN_LAB_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  unsigned long long parsed = std::strtoull(v, &end, 10);
  if (end == v || *end != '\0')
    throw Error("DAWGEN_LAB_SEED must be an unsigned integer");
  return static_cast<std::uint64_t>(parsed);
}

std::uint64_t config_digest(const ExperimentConfig& cfg) {
  return fnv64(canonical(cfg));
}

void finalize_stats(RunReport& report) {
  double sum = 0.0, sq = 0.0;
  int n = 0;
  for (const SeedOutcome& o : report.outcomes) {
    if (!o.ok) continue;
    sum += o.test_accuracy;
    sq += o.test_accuracy * o.test_accuracy;
    ++n;
  }
  if (n == 0) {
    report.mean = std::numeric_limits<double>::quiet_NaN();
    report.stddev = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  report.mean = sum / n;
  double var = sq / n - report.mean * report.mean;
  report.stddev = std::sqrt(std::max(0.0, var));
}

RunReport run_experiment(const Model& m, const Vocabulary& vocab,
                         const ExperimentConfig& cfg) {
  TaskSpec spec = TaskSpec::named(cfg.task);
  auto t0 = Clock::now();

  RunReport report;
  report.task = cfg.task;
  report.generator = generator_label(cfg);
  report.strategy = cfg.use_synthetic ? mix_strategy_name(cfg.strategy)
                                      : mix_strategy_name(MixStrategy::RealOnly);
  report.gs = cfg.use_synthetic && cfg.strategy == MixStrategy::Paired &&
              cfg.pt.gs_enabled;
  report.label = report.generator + "/" + report.strategy +
                 (report.gs ? "+gs" : "");
  report.config_digest = config_digest(cfg);
  report.outcomes.resize(cfg.seeds.size());

  run_pool(cfg.jobs, cfg.seeds.size(), [&](std::size_t i) {
    report.outcomes[i] = run_one_seed(m, vocab, spec, cfg, cfg.seeds[i]);
  });

  finalize_stats(report);
  report.wall_seconds = seconds_since(t0);
  return report;
}

namespace {

struct Cell {
  std::string generator;  // "none" | "fewgen" | "dawgen"
  MixStrategy strategy = MixStrategy::Paired;
  bool gs = false;
};

// Shared-stage matrix runner: generator tuning and synthesis happen once per
// (seed, generator mode) and feed every dependent cell, which matches what
// independent runs would compute because all stage seeds derive from the run
// seed, not from the cell.
std::vector<RunReport> run_matrix(const Model& m, const Vocabulary& vocab,
                                  const ExperimentConfig& base,
                                  const std::vector<Cell>& cells) {
  TaskSpec spec = TaskSpec::named(base.task);
  std::vector<std::string> modes;
  for (const Cell& c : cells)
    if (c.generator != "none" &&
        std::find(modes.begin(), modes.end(), c.generator) == modes.end())
      modes.push_back(c.generator);

  std::vector<RunReport> reports(cells.size());
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    RunReport& r = reports[ci];
    r.task = base.task;
    r.generator = cells[ci].generator;
    r.strategy = mix_strategy_name(cells[ci].strategy);
    r.gs = cells[ci].gs;
    r.label = r.generator + "/" + r.strategy + (r.gs ? "+gs" : "");
    r.config_digest = fnv64(canonical(base) + "#" + r.label);
    r.outcomes.resize(base.seeds.size());
  }

  auto seed_work = [&](std::size_t si) {
    std::uint64_t seed = base.seeds[si];
    std::uint64_t run_seed = derive_seed(base.master_seed, "run", seed);

    SeedBundle bundle;
    std::string bundle_error;
    bool bundle_ok = false;
    try {
      bundle = prepare_seed(spec, base, run_seed);
      bundle_ok = true;
    } catch (const std::exception& e) {
      bundle_error = e.what();
    }

    struct ModeArt {
      bool ok = false;
      std::string error;
      SynArtifacts art;
    };
    std::vector<ModeArt> arts(modes.size());
    if (bundle_ok) {
      for (std::size_t mi = 0; mi < modes.size(); ++mi) {
        GeneratorTuningConfig gen = base.gen;
        gen.lambda_dist = modes[mi] == "fewgen" ? 0.0 : base.gen.lambda_dist;
        try {
          arts[mi].art = make_synthetic(m, bundle, spec, vocab, gen,
                                        base.decode, base.per_class, run_seed);
          arts[mi].ok = true;
        } catch (const std::exception& e) {
          arts[mi].error = e.what();
        }
      }
    }

    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      SeedOutcome out;
      out.seed = seed;
      auto t0 = Clock::now();
      try {
        if (!bundle_ok) throw Error(bundle_error);
        const std::vector<Example>* syn = nullptr;
        if (cells[ci].generator != "none") {
          std::size_t mi = std::find(modes.begin(), modes.end(),
                                     cells[ci].generator) -
                           modes.begin();
          if (!arts[mi].ok) throw Error(arts[mi].error);
          syn = &arts[mi].art.dataset.examples;
          out.oracle_agreement = arts[mi].art.dataset.oracle_agreement;
        }
        TrainConfig pt = base.pt;
        pt.gs_enabled = cells[ci].gs;
        pt.seed = derive_seed(run_seed, "prompt-tuning-run");
        static const std::vector<Example> kNone;
        TrainResult tr =
            train_prompt(m, bundle.few, syn ? *syn : kNone, bundle.splits.dev,
                         spec, vocab, pt, cells[ci].strategy);
        out.best_dev_accuracy = tr.best_dev;
        out.test_accuracy =
            evaluate(m, tr.prompt, bundle.splits.test, spec, vocab);
        out.ok = true;
      } catch (const std::exception& e) {
        out.error = e.what();
      }
      out.wall_seconds = seconds_since(t0);
      reports[ci].outcomes[si] = out;
    }
  };

  auto t0 = Clock::now();
  run_pool(base.jobs, base.seeds.size(), seed_work);
  double wall = seconds_since(t0);
  for (RunReport& r : reports) {
    finalize_stats(r);
    r.wall_seconds = wall;
  }
  return reports;
}

}  // namespace

std::vector<RunReport> run_strategy_matrix(const Model& m,
                                           const Vocabulary& vocab,
                                           const ExperimentConfig& base) {
  std::vector<Cell> cells;
  const MixStrategy order[] = {MixStrategy::RealPlusSyn,
                               MixStrategy::RealPlusSynLS,
                               MixStrategy::RealThenSyn,
                               MixStrategy::SynThenReal, MixStrategy::Paired};
  for (MixStrategy s : order) cells.push_back({"fewgen", s, false});
  for (MixStrategy s : order)
    if (s != MixStrategy::RealPlusSynLS) cells.push_back({"dawgen", s, false});
  return run_matrix(m, vocab, base, cells);
}

std::vector<RunReport> run_ablation_matrix(const Model& m,
                                           const Vocabulary& vocab,
                                           const ExperimentConfig& base) {
  std::vector<Cell> cells;
  cells.push_back({"none", MixStrategy::RealOnly, false});
  for (const char* g : {"fewgen", "dawgen"}) {
    cells.push_back({g, MixStrategy::SynOnly, false});
    cells.push_back({g, MixStrategy::Paired, false});
    cells.push_back({g, MixStrategy::Paired, true});
  }
  return run_matrix(m, vocab, base, cells);
}

}  // namespace dawgen
