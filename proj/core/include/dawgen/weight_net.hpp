#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dawgen/tensor.hpp"

namespace dawgen {

/// Small scorer mapping a d-dim hidden state to a scalar importance logit:
/// one hidden layer (width 32, GELU) and a linear output. Per-token weights
/// are K * softmax(logits / tau) over a length-K sequence, so they are
/// nonnegative and sum to K; constant logits give exactly uniform weights.
class WeightNet {
 public:
  WeightNet() = default;
  WeightNet(int d_model, std::uint64_t seed, double tau = 1.0, int hidden = 32);

  /// Zero-initialized net: emits exactly uniform weights and stays frozen
  /// until trained, used by ablations that bypass token weighting.
  static WeightNet uniform(int d_model, int hidden = 32);

  /// hidden_states is K x d; returns a length-K weight vector on the graph.
  Tensor weights_for(const Tensor& hidden_states) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_trainable(bool trainable);
  double tau() const { return tau_; }

 private:
  Tensor w1_, b1_, w2_, b2_;
  double tau_ = 1.0;
};

}  // namespace dawgen
