#include "dawgen/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dawgen/error.hpp"
#include "dawgen/rng.hpp"

namespace dawgen {

namespace {

struct AdamState {
  std::vector<std::vector<double>> m, v;
  long t = 0;
};

void adam_step(std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& st, double lr, double clip) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++st.t;

  double sq = 0.0;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  double norm = std::sqrt(sq);
  double scale = norm > clip ? clip / norm : 1.0;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].second;
    if (!p.has_grad()) continue;
    const std::vector<double>& g = p.grad();
    std::vector<double>& mo = st.m[i];
    std::vector<double>& vo = st.v[i];
    std::vector<double> vals = p.values();
    double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (std::size_t j = 0; j < vals.size(); ++j) {
      double gj = g[j] * scale;
      mo[j] = b1 * mo[j] + (1.0 - b1) * gj;
      vo[j] = b2 * vo[j] + (1.0 - b2) * gj * gj;
      vals[j] -= lr * (mo[j] / c1) / (std::sqrt(vo[j] / c2) + eps);
    }
    p.set_values(vals);
  }
}

}  // namespace

double corpus_perplexity(const Model& m,
                         const std::vector<std::vector<int>>& docs) {
  double nll = 0.0;
  long count = 0;
  for (const std::vector<int>& doc : docs) {
    if (doc.size() < 2) continue;
    InferenceRun run(m, Tensor());
    run.feed(doc[0]);
    for (std::size_t i = 1; i < doc.size(); ++i) {
      std::vector<double> lg = run.logits();
      double mx = *std::max_element(lg.begin(), lg.end());
      double z = 0.0;
      for (double x : lg) z += std::exp(x - mx);
      nll += -(lg[doc[i]] - mx - std::log(z));
      ++count;
      if (i + 1 < doc.size()) run.feed(doc[i]);
    }
  }
  if (count == 0) throw Error("corpus_perplexity: no scoreable tokens");
  return std::exp(nll / static_cast<double>(count));
}

double unigram_perplexity(const std::vector<std::vector<int>>& train,
                          const std::vector<std::vector<int>>& eval_docs,
                          int vocab_size) {
  std::vector<long> counts(vocab_size, 0);
  long total = 0;
  for (const std::vector<int>& doc : train)
    for (int t : doc) {
      if (t < 0 || t >= vocab_size) throw Error("unigram_perplexity: bad token");
      ++counts[t];
      ++total;
    }
  double denom = static_cast<double>(total + vocab_size);
  double nll = 0.0;
  long n = 0;
  for (const std::vector<int>& doc : eval_docs) {
    if (doc.size() < 2) continue;
    for (std::size_t i = 1; i < doc.size(); ++i) {
      double pr = (static_cast<double>(counts[doc[i]]) + 1.0) / denom;
      nll += -std::log(pr);
      ++n;
    }
  }
  if (n == 0) throw Error("unigram_perplexity: no scoreable tokens");
  return std::exp(nll / static_cast<double>(n));
}

PretrainResult pretrain(const std::vector<std::vector<int>>& corpus,
                        const PretrainConfig& cfg) {
  if (corpus.empty()) throw Error("pretrain: empty corpus");
  if (cfg.batch_docs < 1) throw Error("pretrain: batch_docs must be >= 1");
  if (!(cfg.lr > 0.0)) throw Error("pretrain: lr must be positive");
  if (cfg.holdout_fraction <= 0.0 || cfg.holdout_fraction >= 1.0)
    throw Error("pretrain: holdout_fraction must lie in (0, 1)");
  for (const std::vector<int>& doc : corpus) {
    if (doc.size() < 2)
      throw Error("pretrain: document has no next-token targets");
    for (int t : doc)
      if (t < 0 || t >= cfg.dims.vocab_size)
        throw Error("pretrain: token outside vocabulary");
  }

  Rng rng(derive_seed(cfg.seed, "pretrain"));

  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t n_hold = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(
             cfg.holdout_fraction * static_cast<double>(corpus.size()))));
  if (n_hold >= corpus.size()) throw Error("pretrain: holdout swallows corpus");
  std::vector<std::vector<int>> holdout, train;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::vector<int>& doc = corpus[order[i]];
    if (i < n_hold)
      holdout.push_back(doc);
    else
      train.push_back(doc);
  }

  PretrainResult res{Model(cfg.dims, cfg.seed)};
  Model& model = res.model;
  model.set_trainable(true);
  auto params = model.named_parameters();
  AdamState st;
  st.m.resize(params.size());
  st.v.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i].assign(params[i].second.size(), 0.0);
    st.v[i].assign(params[i].second.size(), 0.0);
  }

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    for (std::size_t at = 0; at < idx.size(); at += cfg.batch_docs) {
      std::size_t end = std::min(idx.size(), at + cfg.batch_docs);
      std::vector<Tensor> doc_sums;
      long tokens = 0;
      for (std::size_t k = at; k < end; ++k) {
        const std::vector<int>& doc = train[idx[k]];
        int max_off = std::min<int>(
            cfg.max_offset,
            cfg.dims.max_seq - static_cast<int>(doc.size()));
        int off = max_off > 0
                      ? static_cast<int>(rng.uniform_int(
                            static_cast<std::uint64_t>(max_off) + 1))
                      : 0;
        std::vector<int> input(doc.begin(), doc.end() - 1);
        std::vector<int> targets(doc.begin() + 1, doc.end());
        Tensor hid = model.forward_hidden(model.embed(input, off));
        Tensor nll = softmax_cross_entropy_rows(model.unembed(hid), targets);
        doc_sums.push_back(sum(nll));
        tokens += static_cast<long>(targets.size());
      }
      if (doc_sums.empty()) continue;
      ++step;
      Tensor loss =
          affine(add_n(doc_sums), 1.0 / static_cast<double>(tokens), 0.0);
      double lv = loss.values()[0];
      if (!std::isfinite(lv))
        throw DivergenceError(step, "pretraining loss diverged at step " +
                                        std::to_string(step));
      res.loss_history.push_back(lv);
      backward(loss);
      double lr = cfg.lr;
      if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
        lr *= static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
      adam_step(params, st, lr, cfg.grad_clip);
    }
  }

  model.set_trainable(false);
  res.holdout_ppl = corpus_perplexity(model, holdout);
  res.unigram_ppl = unigram_perplexity(train, holdout, cfg.dims.vocab_size);
  if (!(res.holdout_ppl < res.unigram_ppl))
    throw Error("pretrain: held-out perplexity " +
                std::to_string(res.holdout_ppl) +
                " did not beat the unigram baseline " +
                std::to_string(res.unigram_ppl));
  return res;
}

}  // namespace dawgen
