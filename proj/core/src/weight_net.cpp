#include "dawgen/weight_net.hpp"

#include "dawgen/error.hpp"
#include "dawgen/rng.hpp"

namespace dawgen {

WeightNet::WeightNet(int d_model, std::uint64_t seed, double tau, int hidden)
    : tau_(tau) {
  if (tau <= 0.0) throw Error("weight net: tau must be positive");
  Rng rng(derive_seed(seed, "weight-net-init"));
  auto init = [&rng](std::vector<int> shape, double stddev) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<double> vals(n);
    for (auto& v : vals) v = stddev * rng.normal();
    return Tensor::from(std::move(shape), std::move(vals), true);
  };
  w1_ = init({d_model, hidden}, 0.05);
  b1_ = Tensor::zeros({hidden}, true);
  w2_ = init({hidden, 1}, 0.05);
  b2_ = Tensor::zeros({1}, true);
}

WeightNet WeightNet::uniform(int d_model, int hidden) {
  WeightNet net;
  net.w1_ = Tensor::zeros({d_model, hidden}, false);
  net.b1_ = Tensor::zeros({hidden}, false);
  net.w2_ = Tensor::zeros({hidden, 1}, false);
  net.b2_ = Tensor::zeros({1}, false);
  net.tau_ = 1.0;
  return net;
}

Tensor WeightNet::weights_for(const Tensor& hidden_states) const {
  if (!w1_.defined()) throw Error("weight net: uninitialized");
  if (!hidden_states.defined() || hidden_states.ndim() != 2 ||
      hidden_states.cols() != w1_.dim(0))
    throw Error("weight net: hidden states must be K x d");
  const int k = hidden_states.rows();
  Tensor scores = add(matmul(gelu(add(matmul(hidden_states, w1_), b1_)), w2_), b2_);
  Tensor soft = softmax_rows(affine(reshape(scores, {1, k}), 1.0 / tau_, 0.0));
  return reshape(affine(soft, static_cast<double>(k), 0.0), {k});
}

std::vector<std::pair<std::string, Tensor>> WeightNet::named_parameters() const {
  return {{"weightnet.w1", w1_},
          {"weightnet.b1", b1_},
          {"weightnet.w2", w2_},
          {"weightnet.b2", b2_}};
}

void WeightNet::set_trainable(bool trainable) {
  for (auto& [name, t] : named_parameters()) {
    Tensor tt = t;
    tt.set_requires_grad(trainable);
  }
}

}  // namespace dawgen
