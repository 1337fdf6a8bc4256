#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dawgen/checkpoint_io.hpp"
#include "dawgen/dataset_io.hpp"
#include "dawgen/error.hpp"
#include "dawgen/experiment.hpp"
#include "dawgen/pretrain.hpp"

namespace fs = std::filesystem;
using namespace dawgen;

namespace {

// Accepts either TOML (default CLI11 syntax) or a JSON object; JSON nesting
// maps to dotted option names, so {"gen":{"epochs":8}} sets --gen.epochs.
class JsonOrTomlConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    int c = input.peek();
    while (c != EOF && std::isspace(c)) {
      input.get();
      c = input.peek();
    }
    if (c != '{') return CLI::ConfigTOML::from_config(input);
    nlohmann::json j = nlohmann::json::parse(input);
    if (!j.is_object()) throw CLI::ConfigError("config root must be an object");
    std::vector<CLI::ConfigItem> out;
    flatten({}, j, out);
    return out;
  }

 private:
  static std::string scalar_str(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(std::vector<std::string> parents, const nlohmann::json& j,
                      std::vector<CLI::ConfigItem>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const nlohmann::json& v = it.value();
      if (v.is_object()) {
        std::vector<std::string> p = parents;
        p.push_back(it.key());
        flatten(std::move(p), v, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (v.is_array()) {
        for (const nlohmann::json& e : v) item.inputs.push_back(scalar_str(e));
      } else {
        item.inputs.push_back(scalar_str(v));
      }
      out.push_back(std::move(item));
    }
  }
};

std::vector<std::string> vocab_strings(const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(vocab.size());
  for (int i = 0; i < static_cast<int>(vocab.size()); ++i)
    out.push_back(vocab.token(i));
  return out;
}

Model load_backbone(const std::string& path, const Vocabulary& vocab) {
  std::vector<std::string> stored;
  Model m = load_model(path, &stored);
  if (stored != vocab_strings(vocab))
    throw Error("checkpoint vocabulary does not match the toy vocabulary: " +
                path);
  return m;
}

Model pretrain_backbone(const std::string& task, int corpus_docs, int epochs,
                        std::uint64_t seed, const Vocabulary& vocab,
                        double* holdout_ppl = nullptr,
                        double* unigram_ppl = nullptr) {
  TaskSpec spec = TaskSpec::named(task);
  std::vector<std::vector<int>> corpus =
      make_pretrain_corpus(spec, vocab, corpus_docs, seed);
  PretrainConfig pc;
  pc.dims.vocab_size = static_cast<int>(vocab.size());
  pc.epochs = epochs;
  pc.seed = seed;
  PretrainResult r = pretrain(corpus, pc);
  if (holdout_ppl) *holdout_ppl = r.holdout_ppl;
  if (unigram_ppl) *unigram_ppl = r.unigram_ppl;
  return r.model;
}

struct ExperimentCli {
  ExperimentConfig cfg;
  std::string strategy_name = "paired";
  std::string decode_strategy = "top_k";
  bool quick = false;
  std::string model_path;
  int corpus_docs = 10000;
  int pretrain_epochs = 3;
};

void add_experiment_options(CLI::App* cmd, ExperimentCli& st) {
  cmd->set_config("--config", "", "TOML or JSON config file")
      ->configurable(false);
  cmd->config_formatter(std::make_shared<JsonOrTomlConfig>());
  cmd->allow_config_extras(false);

  cmd->add_option("--task", st.cfg.task, "toy-paraphrase or toy-nli")
      ->check(CLI::IsMember({"toy-paraphrase", "toy-nli"}));
  cmd->add_option("--seeds", st.cfg.seeds, "seed list")->delimiter(',');
  cmd->add_option("--shots,--shots_per_class", st.cfg.shots_per_class);
  cmd->add_option("--dev-per-class,--dev_per_class", st.cfg.dev_per_class);
  cmd->add_option("--test-per-class,--test_per_class", st.cfg.test_per_class);
  cmd->add_option("--pool-per-class,--pool_per_class", st.cfg.pool_per_class);
  cmd->add_option("--master-seed,--master_seed", st.cfg.master_seed,
                  "master seed (DAWGEN_LAB_SEED overrides)");
  cmd->add_flag("--use-synthetic,!--no-synthetic,--use_synthetic",
                st.cfg.use_synthetic, "include the synthetic-data pipeline");
  cmd->add_option("--strategy", st.strategy_name)
      ->check(CLI::IsMember({"real-plus-syn", "real-plus-syn-ls",
                             "real-then-syn", "syn-then-real", "paired",
                             "real-only", "syn-only"}));
  cmd->add_option("--out", st.cfg.out_dir, "output directory");
  cmd->add_option("--jobs", st.cfg.jobs, "worker threads over seeds");
  cmd->add_flag("--quick", st.quick, "reduced iteration counts");
  cmd->add_option("--model", st.model_path,
                  "pretrained checkpoint (omit to pretrain on the fly)");
  cmd->add_option("--corpus-docs,--corpus_docs", st.corpus_docs);
  cmd->add_option("--pretrain-epochs,--pretrain_epochs", st.pretrain_epochs);

  cmd->add_option("--gen.epochs", st.cfg.gen.epochs);
  cmd->add_option("--gen.batch_per_class", st.cfg.gen.batch_per_class);
  cmd->add_option("--gen.lr_q", st.cfg.gen.lr_q);
  cmd->add_option("--gen.lr_w", st.cfg.gen.lr_w);
  cmd->add_option("--lambda-dist,--gen.lambda_dist", st.cfg.gen.lambda_dist,
                  "alignment regularizer weight; 0 disables it");
  cmd->add_option("--gen.tau_w", st.cfg.gen.tau_w);
  cmd->add_flag("--gen.uniform_weights", st.cfg.gen.uniform_weights);
  cmd->add_flag("--gen.disc_log_ratio", st.cfg.gen.disc_log_ratio);
  cmd->add_option("--gen.prompt_len", st.cfg.gen.prompt_len);

  cmd->add_option("--per-class,--per_class", st.cfg.per_class,
                  "synthetic examples per class");
  cmd->add_option("--decode.strategy", st.decode_strategy)
      ->check(CLI::IsMember({"top_k", "nucleus"}));
  cmd->add_option("--decode.k", st.cfg.decode.k);
  cmd->add_option("--decode.p", st.cfg.decode.p);
  cmd->add_option("--decode.temperature", st.cfg.decode.temperature);
  cmd->add_option("--decode.max_len", st.cfg.decode.max_len);

  cmd->add_option("--eta,--pt.eta", st.cfg.pt.eta);
  cmd->add_option("--epsilon,--pt.epsilon", st.cfg.pt.epsilon,
                  "synthetic guidance strength");
  cmd->add_flag("--gs,!--no-gs", st.cfg.pt.gs_enabled,
                "project conflicting synthetic gradients");
  cmd->add_option("--max-steps,--pt.max_steps", st.cfg.pt.max_steps);
  cmd->add_option("--pt.eval_every", st.cfg.pt.eval_every);
  cmd->add_option("--pt.real_batch", st.cfg.pt.real_batch);
  cmd->add_option("--pt.syn_batch", st.cfg.pt.syn_batch);
  cmd->add_option("--pt.label_smoothing", st.cfg.pt.label_smoothing);
  cmd->add_flag("--pt.cosine_schedule,!--no-cosine", st.cfg.pt.cosine_schedule);
  cmd->add_option("--pt.prompt_len", st.cfg.pt.prompt_len);
}

void finish_experiment_config(ExperimentCli& st) {
  st.cfg.strategy = parse_mix_strategy(st.strategy_name);
  st.cfg.decode.strategy = st.decode_strategy == "nucleus"
                               ? DecodeStrategy::Nucleus
                               : DecodeStrategy::TopK;
  if (st.quick) st.cfg = quick_profile(st.cfg);
  if (auto s = env_seed_override()) st.cfg.master_seed = *s;
}

Model obtain_backbone(const ExperimentCli& st, const Vocabulary& vocab) {
  if (!st.model_path.empty()) return load_backbone(st.model_path, vocab);
  std::cerr << "no --model given, pretraining a backbone ("
            << st.corpus_docs << " docs, " << st.pretrain_epochs
            << " epochs)...\n";
  double hp = 0.0, up = 0.0;
  Model m = pretrain_backbone(st.cfg.task, st.corpus_docs, st.pretrain_epochs,
                              st.cfg.master_seed, vocab, &hp, &up);
  std::cerr << "pretrained: holdout ppl " << hp << " vs unigram " << up << "\n";
  return m;
}

void write_loss_history(const std::vector<double>& hist,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  out << "iteration,loss\n";
  out.setf(std::ios::fixed);
  out.precision(6);
  for (std::size_t i = 0; i < hist.size(); ++i)
    out << i << ',' << hist[i] << '\n';
}

int run_cli(int argc, char** argv) {
  CLI::App app{"soft-prompt generator tuning, synthetic data, and "
               "gradient-surgery prompt tuning on planted toy tasks"};
  app.set_version_flag("--version", "0.1.0");
  app.require_subcommand(1);
  const Vocabulary& vocab = Vocabulary::toy();

  // ---- pretrain ----
  auto* c_pre = app.add_subcommand("pretrain", "train and save a backbone");
  struct {
    std::string task = "toy-paraphrase";
    std::string out = "artifacts";
    int corpus_docs = 10000;
    int epochs = 3;
    std::uint64_t seed = 2024;
  } pre;
  c_pre->add_option("--task", pre.task)
      ->check(CLI::IsMember({"toy-paraphrase", "toy-nli"}));
  c_pre->add_option("--out", pre.out, "output directory");
  c_pre->add_option("--corpus-docs", pre.corpus_docs);
  c_pre->add_option("--epochs", pre.epochs);
  c_pre->add_option("--seed", pre.seed);
  c_pre->callback([&]() {
    if (auto s = env_seed_override()) pre.seed = *s;
    double hp = 0.0, up = 0.0;
    Model m = pretrain_backbone(pre.task, pre.corpus_docs, pre.epochs, pre.seed,
                                vocab, &hp, &up);
    fs::create_directories(pre.out);
    std::string path = (fs::path(pre.out) / "model.ckpt").string();
    save_model(path, m, vocab_strings(vocab));
    std::cout << "saved " << path << "\nholdout ppl " << hp << " vs unigram "
              << up << "\n";
  });

  // ---- build-task ----
  auto* c_task = app.add_subcommand("build-task", "emit task splits as JSONL");
  struct {
    std::string task = "toy-paraphrase";
    std::string out = "artifacts/task";
    std::uint64_t seed = 2024;
    int test_pc = 500, dev_pc = 16, pool_pc = 200;
  } bt;
  c_task->add_option("--task", bt.task)
      ->check(CLI::IsMember({"toy-paraphrase", "toy-nli"}));
  c_task->add_option("--out", bt.out);
  c_task->add_option("--seed", bt.seed);
  c_task->add_option("--test-per-class", bt.test_pc);
  c_task->add_option("--dev-per-class", bt.dev_pc);
  c_task->add_option("--pool-per-class", bt.pool_pc);
  c_task->callback([&]() {
    if (auto s = env_seed_override()) bt.seed = *s;
    TaskSpec spec = TaskSpec::named(bt.task);
    SplitSet splits = build_task(spec, bt.seed, bt.test_pc, bt.dev_pc, bt.pool_pc);
    fs::create_directories(bt.out);
    write_examples_jsonl((fs::path(bt.out) / "train_pool.jsonl").string(),
                         splits.train_pool, spec, vocab);
    write_examples_jsonl((fs::path(bt.out) / "dev.jsonl").string(), splits.dev,
                         spec, vocab);
    write_examples_jsonl((fs::path(bt.out) / "test.jsonl").string(),
                         splits.test, spec, vocab);
    nlohmann::ordered_json meta{{"task", bt.task},
                                {"seed", bt.seed},
                                {"train_pool", splits.train_pool.size()},
                                {"dev", splits.dev.size()},
                                {"test", splits.test.size()}};
    std::ofstream mo(fs::path(bt.out) / "task_meta.json");
    mo << meta.dump(2) << '\n';
    std::cout << "wrote splits under " << bt.out << "\n";
  });

  // ---- tune-gen ----
  auto* c_gen = app.add_subcommand("tune-gen",
                                   "tune per-class generator prompts");
  struct {
    std::string task = "toy-paraphrase";
    std::string model, data;
    std::string out = "artifacts/generator";
    GeneratorTuningConfig cfg;
  } tg;
  c_gen->add_option("--task", tg.task)
      ->check(CLI::IsMember({"toy-paraphrase", "toy-nli"}));
  c_gen->add_option("--model", tg.model)->required();
  c_gen->add_option("--data", tg.data, "few-shot JSONL")->required();
  c_gen->add_option("--out", tg.out);
  c_gen->add_option("--epochs", tg.cfg.epochs);
  c_gen->add_option("--lambda-dist", tg.cfg.lambda_dist);
  c_gen->add_option("--lr-q", tg.cfg.lr_q);
  c_gen->add_option("--lr-w", tg.cfg.lr_w);
  c_gen->add_flag("--uniform-weights", tg.cfg.uniform_weights);
  c_gen->add_option("--seed", tg.cfg.seed);
  c_gen->callback([&]() {
    if (auto s = env_seed_override()) tg.cfg.seed = *s;
    TaskSpec spec = TaskSpec::named(tg.task);
    Model m = load_backbone(tg.model, vocab);
    std::vector<Example> data = read_examples_jsonl(tg.data, spec, vocab);
    GeneratorTuningResult r = tune_generator(m, data, spec, tg.cfg);
    fs::create_directories(tg.out);
    std::string path = (fs::path(tg.out) / "generator.ckpt").string();
    save_generator_state(path, m, r);
    write_loss_history(r.loss_history,
                       (fs::path(tg.out) / "loss_history.csv").string());
    std::cout << "saved " << path << " (" << r.loss_history.size()
              << " iterations)\n";
  });

  // ---- synth ----
  auto* c_syn = app.add_subcommand("synth", "generate a synthetic dataset");
  struct {
    std::string task = "toy-paraphrase";
    std::string model, gen_state;
    std::string out = "artifacts/synthetic";
    std::string decode_strategy = "top_k";
    DecodeConfig decode;
    int per_class = 1000;
    std::uint64_t seed = 2024;
    double tau_w = 1.0;
  } sy;
  c_syn->add_option("--task", sy.task)
      ->check(CLI::IsMember({"toy-paraphrase", "toy-nli"}));
  c_syn->add_option("--model", sy.model)->required();
  c_syn->add_option("--gen-state", sy.gen_state)->required();
  c_syn->add_option("--out", sy.out);
  c_syn->add_option("--per-class", sy.per_class);
  c_syn->add_option("--decode-strategy", sy.decode_strategy)
      ->check(CLI::IsMember({"top_k", "nucleus"}));
  c_syn->add_option("--k", sy.decode.k);
  c_syn->add_option("--p", sy.decode.p);
  c_syn->add_option("--temperature", sy.decode.temperature);
  c_syn->add_option("--max-len", sy.decode.max_len);
  c_syn->add_option("--seed", sy.seed);
  c_syn->callback([&]() {
    if (auto s = env_seed_override()) sy.seed = *s;
    sy.decode.strategy = sy.decode_strategy == "nucleus"
                             ? DecodeStrategy::Nucleus
                             : DecodeStrategy::TopK;
    TaskSpec spec = TaskSpec::named(sy.task);
    Model m = load_backbone(sy.model, vocab);
    GeneratorTuningResult gt = load_generator_state(sy.gen_state, m, sy.tau_w);
    SyntheticDataset ds = synthesize_dataset(
        m, gt.prompts, spec, vocab, sy.per_class, sy.decode, sy.seed);
    fs::create_directories(sy.out);
    std::string path = (fs::path(sy.out) / "synthetic.jsonl").string();
    write_synthetic_dataset(ds, spec, vocab, path);
    std::cout << "wrote " << ds.examples.size() << " examples to " << path;
    if (ds.oracle_agreement)
      std::cout << " (oracle agreement " << *ds.oracle_agreement << ")";
    std::cout << "\n";
  });

  // ---- tune-prompt ----
  auto* c_pt = app.add_subcommand("tune-prompt",
                                  "train the classification soft prompt");
  struct {
    std::string task = "toy-paraphrase";
    std::string model, real, syn, dev;
    std::string out = "artifacts/prompt";
    std::string strategy = "paired";
    TrainConfig cfg;
  } tp;
  c_pt->add_option("--task", tp.task)
      ->check(CLI::IsMember({"toy-paraphrase", "toy-nli"}));
  c_pt->add_option("--model", tp.model)->required();
  c_pt->add_option("--real", tp.real, "few-shot JSONL")->required();
  c_pt->add_option("--syn", tp.syn, "synthetic JSONL (optional)");
  c_pt->add_option("--dev", tp.dev, "dev JSONL")->required();
  c_pt->add_option("--out", tp.out);
  c_pt->add_option("--strategy", tp.strategy)
      ->check(CLI::IsMember({"real-plus-syn", "real-plus-syn-ls",
                             "real-then-syn", "syn-then-real", "paired",
                             "real-only", "syn-only"}));
  c_pt->add_flag("--gs,!--no-gs", tp.cfg.gs_enabled);
  c_pt->add_option("--epsilon", tp.cfg.epsilon);
  c_pt->add_option("--eta", tp.cfg.eta);
  c_pt->add_option("--max-steps", tp.cfg.max_steps);
  c_pt->add_option("--seed", tp.cfg.seed);
  c_pt->callback([&]() {
    if (auto s = env_seed_override()) tp.cfg.seed = *s;
    TaskSpec spec = TaskSpec::named(tp.task);
    Model m = load_backbone(tp.model, vocab);
    std::vector<Example> real = read_examples_jsonl(tp.real, spec, vocab);
    std::vector<Example> syn;
    if (!tp.syn.empty()) syn = read_examples_jsonl(tp.syn, spec, vocab);
    std::vector<Example> dev = read_examples_jsonl(tp.dev, spec, vocab);
    TrainResult r = train_prompt(m, real, syn, dev, spec, vocab, tp.cfg,
                                 parse_mix_strategy(tp.strategy));
    fs::create_directories(tp.out);
    std::string path = (fs::path(tp.out) / "prompt.ckpt").string();
    save_prompt(path, r.prompt, m.dims());
    write_training_log_csv(r.log,
                           (fs::path(tp.out) / "training_log.csv").string());
    std::cout << "saved " << path << "; best dev accuracy " << r.best_dev
              << " at step " << r.best_step << "\n";
  });

  // ---- eval ----
  auto* c_ev = app.add_subcommand("eval", "accuracy of a saved prompt");
  struct {
    std::string task = "toy-paraphrase";
    std::string model, prompt, data;
  } ev;
  c_ev->add_option("--task", ev.task)
      ->check(CLI::IsMember({"toy-paraphrase", "toy-nli"}));
  c_ev->add_option("--model", ev.model)->required();
  c_ev->add_option("--prompt", ev.prompt)->required();
  c_ev->add_option("--data", ev.data)->required();
  c_ev->callback([&]() {
    TaskSpec spec = TaskSpec::named(ev.task);
    Model m = load_backbone(ev.model, vocab);
    Tensor p = load_prompt(ev.prompt, m.dims());
    std::vector<Example> data = read_examples_jsonl(ev.data, spec, vocab);
    double acc = evaluate(m, p, data, spec, vocab);
    std::cout.setf(std::ios::fixed);
    std::cout.precision(6);
    std::cout << "accuracy " << acc << " on " << data.size() << " examples\n";
  });

  // ---- experiment ----
  auto* c_exp = app.add_subcommand(
      "experiment", "full multi-seed pipeline for one configuration");
  auto exp_state = std::make_shared<ExperimentCli>();
  exp_state->cfg.out_dir = "artifacts/experiment";
  add_experiment_options(c_exp, *exp_state);
  c_exp->callback([&, exp_state]() {
    finish_experiment_config(*exp_state);
    Model m = obtain_backbone(*exp_state, vocab);
    RunReport report = run_experiment(m, vocab, exp_state->cfg);
    emit_report({report}, exp_state->cfg.out_dir);
    std::cout << format_report_table({report});
  });

  // ---- ablate ----
  auto* c_abl = app.add_subcommand(
      "ablate", "strategy and surgery matrices over both generator modes");
  auto abl_state = std::make_shared<ExperimentCli>();
  abl_state->cfg.out_dir = "artifacts/ablation";
  add_experiment_options(c_abl, *abl_state);
  c_abl->callback([&, abl_state]() {
    finish_experiment_config(*abl_state);
    Model m = obtain_backbone(*abl_state, vocab);
    std::vector<RunReport> reports =
        run_strategy_matrix(m, vocab, abl_state->cfg);
    for (RunReport& r : run_ablation_matrix(m, vocab, abl_state->cfg)) {
      bool dup = false;
      for (const RunReport& seen : reports)
        if (seen.label == r.label) dup = true;
      if (!dup) reports.push_back(std::move(r));
    }
    emit_report(reports, abl_state->cfg.out_dir);
    std::cout << format_report_table(reports);
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
