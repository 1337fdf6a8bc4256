#include "dawgen/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dawgen/error.hpp"

namespace dawgen {
namespace {

void validate(const std::vector<double>& logits, const DecodeConfig& cfg) {
  if (logits.empty()) throw Error("sample_token: empty logits");
  if (!(cfg.temperature > 0.0))
    throw Error("sample_token: temperature must be positive");
  if (cfg.strategy == DecodeStrategy::TopK && cfg.k < 1)
    throw Error("sample_token: k must be >= 1");
  if (cfg.strategy == DecodeStrategy::Nucleus &&
      !(cfg.p > 0.0 && cfg.p <= 1.0))
    throw Error("sample_token: p must lie in (0, 1]");
}

// Indices sorted by scaled logit descending, lower id first on ties.
std::vector<int> sorted_order(const std::vector<double>& scaled) {
  std::vector<int> order(scaled.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scaled[a] > scaled[b];
  });
  return order;
}

std::vector<double> scale_logits(const std::vector<double>& logits,
                                 double temperature) {
  std::vector<double> scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    scaled[i] = logits[i] / temperature;
  return scaled;
}

// Softmax over all scaled logits, max-subtracted.
std::vector<double> full_softmax(const std::vector<double>& scaled) {
  double mx = *std::max_element(scaled.begin(), scaled.end());
  std::vector<double> p(scaled.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    p[i] = std::exp(scaled[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<int> candidates_for(const std::vector<double>& scaled,
                                const DecodeConfig& cfg) {
  std::vector<int> order = sorted_order(scaled);
  if (cfg.strategy == DecodeStrategy::TopK) {
    int k = std::min<int>(cfg.k, static_cast<int>(order.size()));
    order.resize(k);
    return order;
  }
  std::vector<double> probs = full_softmax(scaled);
  std::vector<int> keep;
  double mass = 0.0;
  for (int id : order) {
    keep.push_back(id);
    mass += probs[id];
    if (mass >= cfg.p) break;
  }
  return keep;
}

}  // namespace

std::vector<int> candidate_set(const std::vector<double>& logits,
                               const DecodeConfig& cfg) {
  validate(logits, cfg);
  return candidates_for(scale_logits(logits, cfg.temperature), cfg);
}

int sample_token(const std::vector<double>& logits, const DecodeConfig& cfg,
                 Rng& rng) {
  validate(logits, cfg);
  std::vector<double> scaled = scale_logits(logits, cfg.temperature);
  std::vector<int> keep = candidates_for(scaled, cfg);

  double mx = scaled[keep[0]];
  for (int id : keep) mx = std::max(mx, scaled[id]);
  std::vector<double> w(keep.size());
  double z = 0.0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    w[i] = std::exp(scaled[keep[i]] - mx);
    z += w[i];
  }
  double u = rng.uniform() * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    acc += w[i];
    if (u < acc) return keep[i];
  }
  return keep.back();
}

std::vector<int> generate_sequence(const Model& m, const Tensor& prompt,
                                   const std::vector<int>& context,
                                   const DecodeConfig& cfg, int eos_id,
                                   Rng& rng) {
  if (cfg.max_len < 0) throw Error("generate_sequence: negative max_len");
  int prompt_rows = prompt.defined() ? prompt.rows() : 0;
  int budget = prompt_rows + static_cast<int>(context.size()) + cfg.max_len;
  if (budget > m.dims().max_seq)
    throw Error("generate_sequence: prompt + context + max_len exceeds window");
  if (context.empty())
    throw Error("generate_sequence: empty context");

  InferenceRun run(m, prompt);
  for (std::size_t i = 0; i + 1 < context.size(); ++i) run.feed(context[i]);
  run.feed(context.back());

  std::vector<int> out;
  for (int step = 0; step < cfg.max_len; ++step) {
    int tok = sample_token(run.logits(), cfg, rng);
    if (tok == eos_id) break;
    out.push_back(tok);
    if (step + 1 < cfg.max_len) run.feed(tok);
  }
  return out;
}

}  // namespace dawgen
