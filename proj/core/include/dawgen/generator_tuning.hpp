#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dawgen/gen_losses.hpp"
#include "dawgen/model.hpp"
#include "dawgen/task.hpp"
#include "dawgen/weight_net.hpp"

namespace dawgen {

/// Loss closures for one-step-unrolled bi-level differentiation. Closures
/// are re-invoked after leaf values change, so each call must rebuild its
/// graph from the current leaf values.
struct BilevelProblem {
  std::function<Tensor()> inner;  // depends on q and w leaves
  std::function<Tensor()> outer;  // depends on q leaves
  std::vector<Tensor> q_leaves;
  std::vector<Tensor> w_leaves;
};

struct HypergradResult {
  std::vector<std::vector<double>> w_grads;  // per w leaf
  std::vector<std::vector<double>> q_grads;  // inner gradient at the call point
  double inner_value = 0.0;
  double v_norm = 0.0;  // norm of the outer gradient at the updated q
};

/// Approximates d/dw outer(q - alpha_q * d inner/d q) by finite differences:
/// v = outer gradient at the one-step-updated q, then
/// -alpha_q * [dw inner(q + e v) - dw inner(q - e v)] / (2 e) with
/// e = 0.01 / |v|. Zero v yields zero w gradients. Leaf values are restored
/// before returning; q_grads holds the inner gradient so callers can reuse
/// it as the first real q step.
HypergradResult hypergradient_w(const BilevelProblem& prob, double alpha_q);

struct GeneratorTuningConfig {
  int epochs = 20;
  int batch_per_class = 2;
  double lr_q = 5e-3;
  double lr_w = 1e-2;
  double lambda_dist = 1.0;
  double tau_w = 1.0;
  bool uniform_weights = false;  // frozen uniform token weights, no net updates
  bool disc_log_ratio = false;
  int prompt_len = 10;
  std::uint64_t seed = 0;
};

struct GeneratorTuningResult {
  std::vector<Tensor> prompts;  // one per class
  WeightNet weight_net;
  std::vector<double> loss_history;  // combined objective per iteration
};

/// Soft prompt initialized from sampled token-embedding rows plus noise.
Tensor init_prompt(const Model& m, int len, std::uint64_t seed);

/// Per-iteration cycle: q step on the combined objective, weight-net step
/// through the one-step-updated prompts, then a second q step under the
/// updated weights. The backbone stays frozen throughout.
GeneratorTuningResult tune_generator(const Model& m,
                                     const std::vector<Example>& d_real,
                                     const TaskSpec& spec,
                                     const GeneratorTuningConfig& cfg);

/// Prompts stored as "Q.<class>", weight-net parameters as "weightnet.*".
void save_generator_state(const std::string& path, const Model& m,
                          const GeneratorTuningResult& result);
GeneratorTuningResult load_generator_state(const std::string& path, const Model& m,
                                           double tau_w = 1.0);

}  // namespace dawgen
