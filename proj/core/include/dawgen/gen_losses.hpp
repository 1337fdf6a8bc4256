#pragma once

#include <vector>

#include "dawgen/model.hpp"
#include "dawgen/rng.hpp"
#include "dawgen/task.hpp"
#include "dawgen/weight_net.hpp"

namespace dawgen {

/// One conditional-generation training item: the rendered class-conditional
/// context and the continuation tokens whose likelihood is shaped.
struct GenItem {
  std::vector<int> context;
  std::vector<int> target;
  int label = 0;
};

/// Builds a GenItem from an example; the end-of-sequence token is appended
/// to the target so tuned prompts keep the generator's stopping behavior.
GenItem make_gen_item(const Example& ex, const TaskSpec& spec,
                      const Vocabulary& vocab, bool append_eos = true);

/// Per-token NLL of the target region and the hidden rows of the target
/// tokens, from a single forward pass under the given class prompt.
struct TargetForward {
  Tensor nll;     // length K
  Tensor hidden;  // K x d
};
TargetForward forward_targets(const Model& m, const Tensor& prompt,
                              const GenItem& item);

/// Mean over the batch of the summed per-token continuation NLL.
/// All items must carry label `l`.
Tensor loss_gen(const Model& m, const Tensor& q, const std::vector<GenItem>& batch,
                int l);

/// Weighted variant: mean over the batch of sum_j W_j * NLL_j with weights
/// from the weight net over the same forward pass's hidden states.
Tensor loss_wgen(const Model& m, const Tensor& q, const WeightNet& net,
                 const std::vector<GenItem>& batch, int l);

/// Discriminative weight-net objective: minus the mean, over all target
/// tokens in the batch, of Pr(x_j | prefix; Q_true) / sum_l' Pr(x_j | prefix;
/// Q_l'), the prefix staying the true-class render throughout. Probabilities
/// live in probability space; the denominator is floored at 1e-12. Value in
/// [-1, 0). With log_ratio, minus the mean log of the same ratio.
Tensor loss_disc(const Model& m, const std::vector<Tensor>& prompts,
                 const std::vector<GenItem>& batch, bool log_ratio = false);

/// Frozen positive/negative choices per anchor; -1 marks a skipped anchor.
struct DistPairs {
  std::vector<int> pos, neg;
};
DistPairs sample_dist_pairs(const std::vector<GenItem>& batch, Rng& rng);

/// One margin term max(0, 1 - cos(anchor, pos) + cos(anchor, neg)).
Tensor dist_margin_term(const Tensor& anchor, const Tensor& pos, const Tensor& neg);

/// Margin loss over weighted-pooled sentence embeddings e = W . Z: mean over
/// anchors of max(0, 1 - cos(e_i, e_pos) + cos(e_i, e_neg)). Each sentence's
/// weights come from its own hidden states. Throws if every anchor is
/// skipped.
Tensor loss_dist(const Model& m, const std::vector<Tensor>& prompts,
                 const WeightNet& net, const std::vector<GenItem>& batch,
                 const DistPairs& pairs);

/// Combined tuning objective: mean over classes of loss_wgen plus
/// lambda_dist * loss_dist. Every class must appear in the batch; the
/// distribution term is skipped entirely when lambda_dist is zero.
Tensor loss_dawgen(const Model& m, const std::vector<Tensor>& prompts,
                   const WeightNet& net, const std::vector<GenItem>& batch,
                   const DistPairs& pairs, double lambda_dist);

}  // namespace dawgen
