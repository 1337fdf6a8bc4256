#include "dawgen/prompt_tuning.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "dawgen/error.hpp"
#include "dawgen/generator_tuning.hpp"
#include "dawgen/gradient_surgery.hpp"
#include "dawgen/rng.hpp"

namespace dawgen {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

Tensor item_loss(const Model& m, const Tensor& prompt, const Example& ex,
                 const TaskSpec& spec, const Vocabulary& vocab,
                 const std::vector<int>& verbs, double smoothing) {
  std::vector<int> ids = render_classification(ex, spec, vocab);
  Tensor hid = m.forward_hidden(embed_with_prompt(m, prompt, ids));
  int row = prompt.rows() + static_cast<int>(ids.size()) - 2;
  Tensor logits_row = m.unembed(gather_rows(hid, {row}));
  Tensor verb_logits =
      gather(reshape(logits_row, {static_cast<int>(vocab.size())}), verbs);
  if (smoothing == 0.0) return softmax_cross_entropy(verb_logits, ex.label);
  int L = spec.num_classes;
  std::vector<double> target(L, smoothing / (L - 1));
  target[ex.label] = 1.0 - smoothing;
  return softmax_cross_entropy_soft(verb_logits, target);
}

struct StepBatch {
  std::vector<Example> real;
  std::vector<Example> syn;
};

std::vector<std::vector<Example>> shuffled_batches(
    const std::vector<Example>& data, int bs, Rng& rng) {
  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::vector<std::vector<Example>> out;
  std::size_t nb = data.size() / static_cast<std::size_t>(bs);
  if (nb == 0) {
    if (!data.empty()) {
      std::vector<Example> b;
      for (int i : idx) b.push_back(data[i]);
      out.push_back(std::move(b));
    }
    return out;
  }
  for (std::size_t k = 0; k < nb; ++k) {
    std::vector<Example> b;
    for (int j = 0; j < bs; ++j)
      b.push_back(data[idx[k * static_cast<std::size_t>(bs) + j]]);
    out.push_back(std::move(b));
  }
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

MixStrategy parse_mix_strategy(const std::string& name) {
  if (name == "real-plus-syn") return MixStrategy::RealPlusSyn;
  if (name == "real-plus-syn-ls") return MixStrategy::RealPlusSynLS;
  if (name == "real-then-syn") return MixStrategy::RealThenSyn;
  if (name == "syn-then-real") return MixStrategy::SynThenReal;
  if (name == "paired") return MixStrategy::Paired;
  if (name == "real-only") return MixStrategy::RealOnly;
  if (name == "syn-only") return MixStrategy::SynOnly;
  throw Error("unknown mix strategy: " + name);
}

std::string mix_strategy_name(MixStrategy s) {
  switch (s) {
    case MixStrategy::RealPlusSyn: return "real-plus-syn";
    case MixStrategy::RealPlusSynLS: return "real-plus-syn-ls";
    case MixStrategy::RealThenSyn: return "real-then-syn";
    case MixStrategy::SynThenReal: return "syn-then-real";
    case MixStrategy::Paired: return "paired";
    case MixStrategy::RealOnly: return "real-only";
    case MixStrategy::SynOnly: return "syn-only";
  }
  throw Error("unknown mix strategy value");
}

Tensor classification_loss(const Model& m, const Tensor& prompt,
                           const std::vector<Example>& batch,
                           const TaskSpec& spec, const Vocabulary& vocab,
                           double label_smoothing) {
  if (batch.empty()) throw Error("classification_loss: empty batch");
  if (label_smoothing < 0.0 || label_smoothing >= 0.5)
    throw Error("classification_loss: smoothing must lie in [0, 0.5)");
  std::vector<int> verbs = verbalizer_ids(spec, vocab);
  std::vector<Tensor> items;
  items.reserve(batch.size());
  for (const Example& ex : batch)
    items.push_back(item_loss(m, prompt, ex, spec, vocab, verbs, label_smoothing));
  return affine(add_n(items), 1.0 / static_cast<double>(items.size()), 0.0);
}

double evaluate(const Model& m, const Tensor& prompt,
                const std::vector<Example>& data, const TaskSpec& spec,
                const Vocabulary& vocab) {
  if (data.empty()) throw Error("evaluate: empty dataset");
  std::vector<int> verbs = verbalizer_ids(spec, vocab);
  int correct = 0;
  for (const Example& ex : data) {
    std::vector<int> ids = render_classification(ex, spec, vocab);
    if (predict_class(m, prompt, ids, verbs) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_prompt(const Model& m, const std::vector<Example>& real,
                         const std::vector<Example>& syn,
                         const std::vector<Example>& dev, const TaskSpec& spec,
                         const Vocabulary& vocab, const TrainConfig& cfg,
                         MixStrategy strategy) {
  if (!(cfg.eta > 0.0)) throw Error("train_prompt: eta must be positive");
  if (cfg.epsilon < 0.0) throw Error("train_prompt: epsilon must be >= 0");
  if (cfg.eval_every < 1) throw Error("train_prompt: eval_every must be >= 1");
  if (cfg.max_steps < 0) throw Error("train_prompt: negative max_steps");
  if (cfg.real_batch < 1 || cfg.syn_batch < 1)
    throw Error("train_prompt: batch sizes must be >= 1");
  if (dev.empty()) throw Error("train_prompt: empty dev split");
  if (real.empty() && strategy != MixStrategy::SynOnly)
    throw Error("train_prompt: empty real split");
  if (syn.empty() && strategy != MixStrategy::RealOnly)
    throw Error("train_prompt: empty synthetic split");

  std::uint64_t digest_before = m.digest();
  Tensor p = init_prompt(m, cfg.prompt_len, derive_seed(cfg.seed, "task-prompt"));
  Rng rng(derive_seed(cfg.seed, "prompt-tuning"));
  std::vector<int> verbs = verbalizer_ids(spec, vocab);

  TrainResult res;
  res.best_dev = evaluate(m, p, dev, spec, vocab);
  res.best_step = 0;
  std::vector<double> best_values = p.values();
  {
    TrainLogRow row;
    row.step = 0;
    row.real_loss = kNan;
    row.syn_loss = kNan;
    row.dev_accuracy = res.best_dev;
    res.log.push_back(row);
  }

  std::deque<StepBatch> queue;
  auto refill = [&]() {
    switch (strategy) {
      case MixStrategy::RealOnly:
        for (auto& b : shuffled_batches(real, cfg.real_batch, rng))
          queue.push_back({std::move(b), {}});
        break;
      case MixStrategy::SynOnly:
      case MixStrategy::Paired:
        for (auto& b : shuffled_batches(syn, cfg.syn_batch, rng))
          queue.push_back({{}, std::move(b)});
        break;
      case MixStrategy::RealThenSyn:
        for (auto& b : shuffled_batches(real, cfg.real_batch, rng))
          queue.push_back({std::move(b), {}});
        for (auto& b : shuffled_batches(syn, cfg.syn_batch, rng))
          queue.push_back({{}, std::move(b)});
        break;
      case MixStrategy::SynThenReal:
        for (auto& b : shuffled_batches(syn, cfg.syn_batch, rng))
          queue.push_back({{}, std::move(b)});
        for (auto& b : shuffled_batches(real, cfg.real_batch, rng))
          queue.push_back({std::move(b), {}});
        break;
      case MixStrategy::RealPlusSyn:
      case MixStrategy::RealPlusSynLS: {
        // tag 0 = real, 1 = syn; one shuffled union stream
        std::vector<std::pair<int, int>> tagged;
        for (std::size_t i = 0; i < real.size(); ++i)
          tagged.emplace_back(0, static_cast<int>(i));
        for (std::size_t i = 0; i < syn.size(); ++i)
          tagged.emplace_back(1, static_cast<int>(i));
        rng.shuffle(tagged);
        std::size_t bs = static_cast<std::size_t>(cfg.real_batch);
        for (std::size_t at = 0; at + bs <= tagged.size(); at += bs) {
          StepBatch b;
          for (std::size_t j = 0; j < bs; ++j) {
            auto [tag, idx] = tagged[at + j];
            if (tag == 0)
              b.real.push_back(real[idx]);
            else
              b.syn.push_back(syn[idx]);
          }
          queue.push_back(std::move(b));
        }
        break;
      }
    }
    if (queue.empty()) throw Error("train_prompt: batch stream is empty");
  };

  auto check_finite = [](const std::vector<double>& g, int step) {
    for (double x : g)
      if (!std::isfinite(x))
        throw DivergenceError(step, "prompt tuning gradient diverged at step " +
                                        std::to_string(step));
  };

  for (int t = 1; t <= cfg.max_steps; ++t) {
    double eta_t = cfg.eta;
    if (cfg.cosine_schedule)
      eta_t *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(t - 1) /
                                     static_cast<double>(cfg.max_steps)));

    TrainLogRow row;
    row.step = t;
    row.real_loss = kNan;
    row.syn_loss = kNan;
    row.dev_accuracy = kNan;

    if (strategy == MixStrategy::Paired) {
      if (queue.empty()) refill();
      std::vector<Example> syn_b = std::move(queue.front().syn);
      queue.pop_front();
      std::vector<Example> real_b;
      for (int i = 0; i < cfg.real_batch; ++i)
        real_b.push_back(real[rng.uniform_int(real.size())]);

      Tensor lr_t = classification_loss(m, p, real_b, spec, vocab, 0.0);
      if (!std::isfinite(lr_t.values()[0]))
        throw DivergenceError(t, "real loss diverged at step " + std::to_string(t));
      backward(lr_t);
      std::vector<double> g_real = p.grad();
      check_finite(g_real, t);

      Tensor ls_t = classification_loss(m, p, syn_b, spec, vocab, 0.0);
      if (!std::isfinite(ls_t.values()[0]))
        throw DivergenceError(t, "synthetic loss diverged at step " +
                                     std::to_string(t));
      backward(ls_t);
      std::vector<double> g_syn = p.grad();
      check_finite(g_syn, t);

      SurgeryResult sr =
          surgery_step(p, g_real, g_syn, eta_t, cfg.epsilon, cfg.gs_enabled);
      row.real_loss = lr_t.values()[0];
      row.syn_loss = ls_t.values()[0];
      row.conflict_flag = sr.conflict ? 1 : 0;
    } else {
      if (queue.empty()) refill();
      StepBatch b = std::move(queue.front());
      queue.pop_front();

      double syn_smooth = strategy == MixStrategy::RealPlusSynLS
                              ? cfg.label_smoothing
                              : 0.0;
      std::vector<Tensor> items;
      double real_sum = 0.0, syn_sum = 0.0;
      for (const Example& ex : b.real) {
        items.push_back(item_loss(m, p, ex, spec, vocab, verbs, 0.0));
        real_sum += items.back().values()[0];
      }
      for (const Example& ex : b.syn) {
        items.push_back(item_loss(m, p, ex, spec, vocab, verbs, syn_smooth));
        syn_sum += items.back().values()[0];
      }
      Tensor loss =
          affine(add_n(items), 1.0 / static_cast<double>(items.size()), 0.0);
      if (!std::isfinite(loss.values()[0]))
        throw DivergenceError(t, "loss diverged at step " + std::to_string(t));
      backward(loss);
      std::vector<double> g = p.grad();
      check_finite(g, t);
      std::vector<double> v = p.values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= eta_t * g[i];
      p.set_values(v);

      if (!b.real.empty())
        row.real_loss = real_sum / static_cast<double>(b.real.size());
      if (!b.syn.empty())
        row.syn_loss = syn_sum / static_cast<double>(b.syn.size());
    }

    if (t % cfg.eval_every == 0 || t == cfg.max_steps) {
      double acc = evaluate(m, p, dev, spec, vocab);
      row.dev_accuracy = acc;
      if (acc > res.best_dev) {
        res.best_dev = acc;
        res.best_step = t;
        best_values = p.values();
      }
    }
    res.log.push_back(row);
  }

  if (m.digest() != digest_before)
    throw Error("train_prompt: backbone parameters drifted");

  res.prompt = Tensor::from({cfg.prompt_len, m.dims().d_model}, best_values);
  return res;
}

void write_training_log_csv(const std::vector<TrainLogRow>& log,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  out << "step,real_loss,syn_loss,conflict_flag,dev_accuracy\n";
  for (const TrainLogRow& r : log) {
    out << r.step << ',' << fmt(r.real_loss) << ',' << fmt(r.syn_loss) << ','
        << r.conflict_flag << ',' << fmt(r.dev_accuracy) << '\n';
  }
}

}  // namespace dawgen
