#include "dawgen/generator_tuning.hpp"

#include <algorithm>
#include <cmath>

#include "dawgen/checkpoint_io.hpp"
#include "dawgen/error.hpp"
#include "dawgen/rng.hpp"

namespace dawgen {

namespace {

std::vector<double> grad_or_zeros(const Tensor& t) {
  if (t.has_grad()) return t.grad();
  return std::vector<double>(t.size(), 0.0);
}

void clear_grads(const std::vector<Tensor>& leaves) {
  for (const Tensor& t : leaves) {
    Tensor tt = t;
    tt.clear_grad();
  }
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

HypergradResult hypergradient_w(const BilevelProblem& prob, double alpha_q) {
  HypergradResult out;
  out.w_grads.resize(prob.w_leaves.size());
  out.q_grads.resize(prob.q_leaves.size());

  clear_grads(prob.q_leaves);
  clear_grads(prob.w_leaves);
  Tensor inner0 = prob.inner();
  backward(inner0);
  out.inner_value = inner0.item();
  std::vector<std::vector<double>> q0(prob.q_leaves.size());
  for (std::size_t i = 0; i < prob.q_leaves.size(); ++i) {
    q0[i] = prob.q_leaves[i].values();
    out.q_grads[i] = grad_or_zeros(prob.q_leaves[i]);
  }

  auto set_q = [&](double coeff, const std::vector<std::vector<double>>& dir) {
    for (std::size_t i = 0; i < prob.q_leaves.size(); ++i) {
      std::vector<double> v = q0[i];
      for (std::size_t j = 0; j < v.size(); ++j) v[j] += coeff * dir[i][j];
      Tensor t = prob.q_leaves[i];
      t.set_values(v);
    }
  };
  auto restore_q = [&] {
    for (std::size_t i = 0; i < prob.q_leaves.size(); ++i) {
      Tensor t = prob.q_leaves[i];
      t.set_values(q0[i]);
    }
  };

  // Outer gradient at the one-step-updated q.
  set_q(-alpha_q, out.q_grads);
  clear_grads(prob.q_leaves);
  backward(prob.outer());
  std::vector<std::vector<double>> v(prob.q_leaves.size());
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < prob.q_leaves.size(); ++i) {
    v[i] = grad_or_zeros(prob.q_leaves[i]);
    for (double x : v[i]) norm_sq += x * x;
  }
  out.v_norm = std::sqrt(norm_sq);
  if (out.v_norm == 0.0) {
    for (std::size_t i = 0; i < prob.w_leaves.size(); ++i)
      out.w_grads[i].assign(prob.w_leaves[i].size(), 0.0);
    restore_q();
    return out;
  }

  const double eps = 0.01 / out.v_norm;
  set_q(eps, v);
  clear_grads(prob.w_leaves);
  clear_grads(prob.q_leaves);
  backward(prob.inner());
  std::vector<std::vector<double>> w_plus(prob.w_leaves.size());
  for (std::size_t i = 0; i < prob.w_leaves.size(); ++i)
    w_plus[i] = grad_or_zeros(prob.w_leaves[i]);

  set_q(-eps, v);
  clear_grads(prob.w_leaves);
  clear_grads(prob.q_leaves);
  backward(prob.inner());
  const double scale = -alpha_q / (2.0 * eps);
  for (std::size_t i = 0; i < prob.w_leaves.size(); ++i) {
    std::vector<double> w_minus = grad_or_zeros(prob.w_leaves[i]);
    out.w_grads[i].resize(w_minus.size());
    for (std::size_t j = 0; j < w_minus.size(); ++j)
      out.w_grads[i][j] = scale * (w_plus[i][j] - w_minus[j]);
  }
  restore_q();
  return out;
}

Tensor init_prompt(const Model& m, int len, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "prompt-init"));
  const int d = m.dims().d_model;
  const auto& emb = m.token_embedding().values();
  std::vector<double> vals(static_cast<std::size_t>(len) * d);
  for (int r = 0; r < len; ++r) {
    auto row = static_cast<std::size_t>(rng.uniform_int(m.dims().vocab_size)) *
               static_cast<std::size_t>(d);
    for (int j = 0; j < d; ++j)
      vals[static_cast<std::size_t>(r) * d + j] = emb[row + j] + 0.01 * rng.normal();
  }
  return Tensor::from({len, d}, std::move(vals), true);
}

GeneratorTuningResult tune_generator(const Model& m,
                                     const std::vector<Example>& d_real,
                                     const TaskSpec& spec,
                                     const GeneratorTuningConfig& cfg) {
  const Vocabulary& vocab = Vocabulary::toy();
  const int num_classes = spec.num_classes;
  std::vector<std::vector<GenItem>> by_class(static_cast<std::size_t>(num_classes));
  for (const Example& ex : d_real)
    by_class[static_cast<std::size_t>(ex.label)].push_back(
        make_gen_item(ex, spec, vocab));
  for (int l = 0; l < num_classes; ++l)
    if (by_class[static_cast<std::size_t>(l)].empty())
      throw Error("tune_generator: no training data for class " + std::to_string(l));

  const std::uint64_t digest_before = m.digest();
  GeneratorTuningResult result;
  for (int l = 0; l < num_classes; ++l)
    result.prompts.push_back(
        init_prompt(m, cfg.prompt_len, derive_seed(cfg.seed, "generator-prompt", l)));
  result.weight_net =
      cfg.uniform_weights
          ? WeightNet::uniform(m.dims().d_model)
          : WeightNet(m.dims().d_model, derive_seed(cfg.seed, "generator-weightnet"),
                      cfg.tau_w);

  std::vector<Tensor> w_leaves;
  if (!cfg.uniform_weights)
    for (auto& [name, t] : result.weight_net.named_parameters()) w_leaves.push_back(t);

  Rng rng(derive_seed(cfg.seed, "generator-tuning"));
  std::size_t min_count = by_class[0].size();
  for (const auto& c : by_class) min_count = std::min(min_count, c.size());
  const int batches_per_epoch =
      std::max<int>(1, static_cast<int>(min_count) / std::max(1, cfg.batch_per_class));

  long iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& c : by_class) rng.shuffle(c);
    for (int b = 0; b < batches_per_epoch; ++b) {
      std::vector<GenItem> batch;
      for (int l = 0; l < num_classes; ++l) {
        const auto& c = by_class[static_cast<std::size_t>(l)];
        for (int i = 0; i < cfg.batch_per_class; ++i) {
          std::size_t at = static_cast<std::size_t>(b) * cfg.batch_per_class + i;
          if (at < c.size()) batch.push_back(c[at]);
        }
      }
      DistPairs pairs = sample_dist_pairs(batch, rng);

      auto q_step = [&](const std::vector<std::vector<double>>& grads) {
        for (std::size_t i = 0; i < result.prompts.size(); ++i) {
          if (!all_finite(grads[i]))
            throw DivergenceError(iteration, "tune_generator: non-finite gradient at iteration " +
                                                 std::to_string(iteration));
          result.prompts[i].add_scaled_inplace(grads[i], -cfg.lr_q);
        }
      };

      if (cfg.uniform_weights) {
        clear_grads(result.prompts);
        Tensor loss = loss_dawgen(m, result.prompts, result.weight_net, batch, pairs,
                                  cfg.lambda_dist);
        if (!std::isfinite(loss.item()))
          throw DivergenceError(iteration, "tune_generator: non-finite loss at iteration " +
                                               std::to_string(iteration));
        backward(loss);
        result.loss_history.push_back(loss.item());
        std::vector<std::vector<double>> grads;
        for (const Tensor& q : result.prompts) grads.push_back(grad_or_zeros(q));
        q_step(grads);
        ++iteration;
        continue;
      }

      BilevelProblem prob;
      prob.inner = [&] {
        return loss_dawgen(m, result.prompts, result.weight_net, batch, pairs,
                           cfg.lambda_dist);
      };
      prob.outer = [&] {
        return loss_disc(m, result.prompts, batch, cfg.disc_log_ratio);
      };
      prob.q_leaves = result.prompts;
      prob.w_leaves = w_leaves;

      HypergradResult hg = hypergradient_w(prob, cfg.lr_q);
      if (!std::isfinite(hg.inner_value))
        throw DivergenceError(iteration, "tune_generator: non-finite loss at iteration " +
                                             std::to_string(iteration));
      result.loss_history.push_back(hg.inner_value);

      q_step(hg.q_grads);  // the one-step update the hypergradient unrolled
      for (std::size_t i = 0; i < w_leaves.size(); ++i) {
        if (!all_finite(hg.w_grads[i]))
          throw DivergenceError(iteration, "tune_generator: non-finite weight-net gradient at iteration " +
                                               std::to_string(iteration));
        w_leaves[i].add_scaled_inplace(hg.w_grads[i], -cfg.lr_w);
      }

      clear_grads(result.prompts);
      Tensor second = prob.inner();
      if (!std::isfinite(second.item()))
        throw DivergenceError(iteration, "tune_generator: non-finite loss at iteration " +
                                             std::to_string(iteration));
      backward(second);
      std::vector<std::vector<double>> grads;
      for (const Tensor& q : result.prompts) grads.push_back(grad_or_zeros(q));
      q_step(grads);
      ++iteration;
    }
  }

  if (m.digest() != digest_before)
    throw Error("tune_generator: backbone parameters drifted");
  return result;
}

void save_generator_state(const std::string& path, const Model& m,
                          const GeneratorTuningResult& result) {
  Checkpoint c;
  c.dims = m.dims();
  for (std::size_t l = 0; l < result.prompts.size(); ++l) {
    c.shapes.emplace_back("Q." + std::to_string(l), result.prompts[l].shape());
    c.payloads.push_back(result.prompts[l].values());
  }
  for (const auto& [name, t] : result.weight_net.named_parameters()) {
    c.shapes.emplace_back(name, t.shape());
    c.payloads.push_back(t.values());
  }
  save_checkpoint(path, c);
}

GeneratorTuningResult load_generator_state(const std::string& path, const Model& m,
                                           double tau_w) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.dims == m.dims()))
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                          path + ": prompts were tuned for a different backbone");
  GeneratorTuningResult result;
  result.weight_net = WeightNet(m.dims().d_model, 0, tau_w);
  auto net_params = result.weight_net.named_parameters();
  for (std::size_t i = 0; i < c.shapes.size(); ++i) {
    const auto& [name, shape] = c.shapes[i];
    if (name.rfind("Q.", 0) == 0) {
      std::size_t idx = std::stoul(name.substr(2));
      if (idx != result.prompts.size())
        throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                              path + ": class prompts out of order");
      result.prompts.push_back(Tensor::from(shape, std::move(c.payloads[i]), true));
    } else {
      bool matched = false;
      for (auto& [pname, t] : net_params) {
        if (pname != name) continue;
        if (t.shape() != shape)
          throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                                path + ": shape mismatch for " + name);
        t.set_values(c.payloads[i]);
        matched = true;
        break;
      }
      if (!matched)
        throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                              path + ": unexpected tensor " + name);
    }
  }
  if (result.prompts.empty())
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                          path + ": no class prompts found");
  return result;
}

}  // namespace dawgen
