#include "dawgen/gen_losses.hpp"

#include <algorithm>

#include "dawgen/error.hpp"

namespace dawgen {

namespace {

void check_batch(const std::vector<GenItem>& batch) {
  if (batch.empty()) throw Error("generation loss: empty batch");
  for (const auto& it : batch)
    if (it.target.empty()) throw Error("generation loss: item has no target tokens");
}

void check_labels(const std::vector<GenItem>& batch, int l) {
  for (const auto& it : batch)
    if (it.label != l) throw Error("generation loss: batch mixes classes");
}

}  // namespace

GenItem make_gen_item(const Example& ex, const TaskSpec& spec,
                      const Vocabulary& vocab, bool append_eos) {
  GenItem item;
  item.label = ex.label;
  item.context = render_conditional(ex.label, ex.s1, spec, vocab);
  item.target = ex.s2;
  if (append_eos) item.target.push_back(vocab.eos_id());
  return item;
}

TargetForward forward_targets(const Model& m, const Tensor& prompt,
                              const GenItem& item) {
  if (item.target.empty()) throw Error("forward_targets: empty target");
  const int n = prompt.defined() ? prompt.rows() : 0;
  const int c = static_cast<int>(item.context.size());
  const int k = static_cast<int>(item.target.size());
  if (c < 1) throw Error("forward_targets: empty context");

  std::vector<int> ids = item.context;
  ids.insert(ids.end(), item.target.begin(), item.target.end());
  Tensor hidden = m.forward_hidden(embed_with_prompt(m, prompt, ids));

  std::vector<int> pred_rows(k), tok_rows(k);
  for (int j = 0; j < k; ++j) {
    pred_rows[j] = n + c + j - 1;  // row whose next-token logits score target j
    tok_rows[j] = n + c + j;
  }
  Tensor logits = m.unembed(gather_rows(hidden, pred_rows));
  TargetForward out;
  out.nll = softmax_cross_entropy_rows(logits, item.target);
  out.hidden = gather_rows(hidden, tok_rows);
  return out;
}

Tensor loss_gen(const Model& m, const Tensor& q, const std::vector<GenItem>& batch,
                int l) {
  check_batch(batch);
  check_labels(batch, l);
  std::vector<Tensor> sums;
  sums.reserve(batch.size());
  for (const auto& item : batch) sums.push_back(sum(forward_targets(m, q, item).nll));
  return affine(add_n(sums), 1.0 / static_cast<double>(batch.size()), 0.0);
}

Tensor loss_wgen(const Model& m, const Tensor& q, const WeightNet& net,
                 const std::vector<GenItem>& batch, int l) {
  check_batch(batch);
  check_labels(batch, l);
  std::vector<Tensor> sums;
  sums.reserve(batch.size());
  for (const auto& item : batch) {
    TargetForward f = forward_targets(m, q, item);
    sums.push_back(dot(net.weights_for(f.hidden), f.nll));
  }
  return affine(add_n(sums), 1.0 / static_cast<double>(batch.size()), 0.0);
}

Tensor loss_disc(const Model& m, const std::vector<Tensor>& prompts,
                 const std::vector<GenItem>& batch, bool log_ratio) {
  check_batch(batch);
  const int num_classes = static_cast<int>(prompts.size());
  if (num_classes < 2) throw Error("loss_disc: needs at least two class prompts");
  std::size_t total_tokens = 0;
  std::vector<Tensor> ratio_sums;
  for (const auto& item : batch) {
    if (item.label < 0 || item.label >= num_classes)
      throw Error("loss_disc: item label out of range");
    std::vector<Tensor> probs;  // per class, length-K token probabilities
    probs.reserve(prompts.size());
    for (const auto& q : prompts)
      probs.push_back(exp(affine(forward_targets(m, q, item).nll, -1.0, 0.0)));
    Tensor den = clamp_min(add_n(probs), 1e-12);
    Tensor ratio = divide(probs[static_cast<std::size_t>(item.label)], den);
    if (log_ratio) ratio = log(clamp_min(ratio, 1e-12));
    ratio_sums.push_back(sum(ratio));
    total_tokens += item.target.size();
  }
  return affine(add_n(ratio_sums), -1.0 / static_cast<double>(total_tokens), 0.0);
}

DistPairs sample_dist_pairs(const std::vector<GenItem>& batch, Rng& rng) {
  const int n = static_cast<int>(batch.size());
  DistPairs pairs;
  pairs.pos.assign(n, -1);
  pairs.neg.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    std::vector<int> same, other;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      (batch[j].label == batch[i].label ? same : other).push_back(j);
    }
    if (same.empty() || other.empty()) continue;
    pairs.pos[i] = same[rng.uniform_int(same.size())];
    pairs.neg[i] = other[rng.uniform_int(other.size())];
  }
  return pairs;
}

Tensor dist_margin_term(const Tensor& anchor, const Tensor& pos, const Tensor& neg) {
  Tensor cos_pos = cosine_similarity(anchor, pos);
  Tensor cos_neg = cosine_similarity(anchor, neg);
  return clamp_min(add(affine(cos_pos, -1.0, 1.0), cos_neg), 0.0);
}

namespace {

// Weighted pooling of the target hidden rows into a d-vector.
Tensor pooled_embedding(const WeightNet& net, const TargetForward& f) {
  const int k = f.hidden.rows();
  Tensor w = net.weights_for(f.hidden);
  return reshape(matmul(reshape(w, {1, k}), f.hidden), {f.hidden.cols()});
}

Tensor dist_from_embeddings(const std::vector<Tensor>& embeddings,
                            const DistPairs& pairs) {
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (pairs.pos[i] < 0 || pairs.neg[i] < 0) continue;
    terms.push_back(dist_margin_term(
        embeddings[i], embeddings[static_cast<std::size_t>(pairs.pos[i])],
        embeddings[static_cast<std::size_t>(pairs.neg[i])]));
  }
  if (terms.empty())
    throw Error("loss_dist: every anchor lacks a positive or negative");
  return affine(add_n(terms), 1.0 / static_cast<double>(terms.size()), 0.0);
}

}  // namespace

Tensor loss_dist(const Model& m, const std::vector<Tensor>& prompts,
                 const WeightNet& net, const std::vector<GenItem>& batch,
                 const DistPairs& pairs) {
  check_batch(batch);
  if (pairs.pos.size() != batch.size() || pairs.neg.size() != batch.size())
    throw Error("loss_dist: pair table does not match batch");
  std::vector<Tensor> embeddings;
  embeddings.reserve(batch.size());
  for (const auto& item : batch)
    embeddings.push_back(pooled_embedding(
        net, forward_targets(m, prompts[static_cast<std::size_t>(item.label)], item)));
  return dist_from_embeddings(embeddings, pairs);
}

Tensor loss_dawgen(const Model& m, const std::vector<Tensor>& prompts,
                   const WeightNet& net, const std::vector<GenItem>& batch,
                   const DistPairs& pairs, double lambda_dist) {
  check_batch(batch);
  const int num_classes = static_cast<int>(prompts.size());
  if (lambda_dist != 0.0 &&
      (pairs.pos.size() != batch.size() || pairs.neg.size() != batch.size()))
    throw Error("loss_dawgen: pair table does not match batch");

  // One forward per item, shared by the weighted-generation term and the
  // distribution term.
  std::vector<Tensor> weighted_sums(batch.size());
  std::vector<Tensor> embeddings(batch.size());
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const GenItem& item = batch[i];
    if (item.label < 0 || item.label >= num_classes)
      throw Error("loss_dawgen: item label out of range");
    if (item.target.empty()) throw Error("loss_dawgen: item has no target tokens");
    TargetForward f =
        forward_targets(m, prompts[static_cast<std::size_t>(item.label)], item);
    Tensor w = net.weights_for(f.hidden);
    weighted_sums[i] = dot(w, f.nll);
    if (lambda_dist != 0.0) {
      const int k = f.hidden.rows();
      embeddings[i] = reshape(matmul(reshape(w, {1, k}), f.hidden), {f.hidden.cols()});
    }
    by_class[static_cast<std::size_t>(item.label)].push_back(static_cast<int>(i));
  }

  std::vector<Tensor> class_losses;
  for (int l = 0; l < num_classes; ++l) {
    const auto& idx = by_class[static_cast<std::size_t>(l)];
    if (idx.empty())
      throw Error("loss_dawgen: class " + std::to_string(l) + " missing from batch");
    std::vector<Tensor> sums;
    sums.reserve(idx.size());
    for (int i : idx) sums.push_back(weighted_sums[static_cast<std::size_t>(i)]);
    class_losses.push_back(
        affine(add_n(sums), 1.0 / static_cast<double>(idx.size()), 0.0));
  }
  Tensor total =
      affine(add_n(class_losses), 1.0 / static_cast<double>(num_classes), 0.0);
  if (lambda_dist != 0.0)
    total = add(total, affine(dist_from_embeddings(embeddings, pairs),
                              lambda_dist, 0.0));
  return total;
}

}  // namespace dawgen
