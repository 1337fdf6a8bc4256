#include <cmath>
#include <cstdio>
#include <vector>

#include "dawgen/error.hpp"
#include "dawgen/generator_tuning.hpp"
#include "dawgen/model.hpp"
#include "dawgen/rng.hpp"
#include "dawgen/task.hpp"
#include "dawgen/tensor.hpp"
#include "dawgen/vocab.hpp"
#include "doctest.h"

using namespace dawgen;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.vocab_size = Vocabulary::toy().size();
  d.d_model = 16;
  d.n_heads = 2;
  d.n_layers = 1;
  d.d_ff = 24;
  d.max_seq = 48;
  return d;
}

// inner(q, w) = (q - w)^2, outer(q) = q^2. One gradient step on the inner
// objective gives q' = q - 2 a (q - w), so the response gradient is
// d outer / d w = 4 a (q - 2 a (q - w)).
double closed_form(double q, double w, double a) {
  return 4.0 * a * (q - 2.0 * a * (q - w));
}

}  // namespace

TEST_CASE("scalar quadratic hypergradient matches the closed form") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    double q0 = 4.0 * rng.uniform() - 2.0;
    double w0 = 4.0 * rng.uniform() - 2.0;
    double a = 0.05 + 0.4 * rng.uniform();

    Tensor q = Tensor::scalar(q0, true);
    Tensor w = Tensor::scalar(w0, true);
    BilevelProblem prob;
    prob.inner = [&] {
      Tensor diff = add(q, affine(w, -1.0, 0.0));
      return mul(diff, diff);
    };
    prob.outer = [&] { return mul(q, q); };
    prob.q_leaves = {q};
    prob.w_leaves = {w};

    auto hg = hypergradient_w(prob, a);
    REQUIRE(hg.w_grads.size() == 1);
    REQUIRE(hg.w_grads[0].size() == 1);
    CHECK(hg.w_grads[0][0] ==
          doctest::Approx(closed_form(q0, w0, a)).epsilon(1e-6));

    // the inner gradient at the call point rides along for reuse
    CHECK(hg.q_grads[0][0] == doctest::Approx(2.0 * (q0 - w0)).epsilon(1e-9));
    CHECK(hg.inner_value == doctest::Approx((q0 - w0) * (q0 - w0)).epsilon(1e-9));

    // leaves are restored
    CHECK(q.values()[0] == q0);
    CHECK(w.values()[0] == w0);
  }
}

TEST_CASE("vanishing outer gradient yields exactly zero w gradients") {
  // q' = q - 2 a (q - w) = 0 when q = 1, w = 0, a = 0.5
  Tensor q = Tensor::scalar(1.0, true);
  Tensor w = Tensor::scalar(0.0, true);
  BilevelProblem prob;
  prob.inner = [&] {
    Tensor diff = add(q, affine(w, -1.0, 0.0));
    return mul(diff, diff);
  };
  prob.outer = [&] { return mul(q, q); };
  prob.q_leaves = {q};
  prob.w_leaves = {w};

  auto hg = hypergradient_w(prob, 0.5);
  CHECK(hg.v_norm == 0.0);
  CHECK(hg.w_grads[0][0] == 0.0);
}

TEST_CASE("vector quadratic with separate targets per coordinate") {
  // inner = sum_i w_i (q_i - c_i)^2, outer = sum_i (q_i - t_i)^2
  // q'_i = q_i - 2 a w_i (q_i - c_i)
  // d outer / d w_i = -4 a (q_i - c_i) (q'_i - t_i)
  const std::vector<double> c = {0.5, -1.0}, t = {1.0, 0.3};
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> q0 = {2.0 * rng.uniform(), 2.0 * rng.uniform() - 1.0};
    std::vector<double> w0 = {0.5 + rng.uniform(), 0.5 + rng.uniform()};
    double a = 0.1 + 0.2 * rng.uniform();

    Tensor q = Tensor::from({2}, q0, true);
    Tensor w = Tensor::from({2}, w0, true);
    Tensor cc = Tensor::from({2}, c);
    Tensor tt = Tensor::from({2}, t);
    BilevelProblem prob;
    prob.inner = [&] {
      Tensor d = add(q, affine(cc, -1.0, 0.0));
      return sum(mul(w, mul(d, d)));
    };
    prob.outer = [&] {
      Tensor d = add(q, affine(tt, -1.0, 0.0));
      return sum(mul(d, d));
    };
    prob.q_leaves = {q};
    prob.w_leaves = {w};

    auto hg = hypergradient_w(prob, a);
    for (int i = 0; i < 2; ++i) {
      double qp = q0[static_cast<std::size_t>(i)] -
                  2.0 * a * w0[static_cast<std::size_t>(i)] *
                      (q0[static_cast<std::size_t>(i)] - c[static_cast<std::size_t>(i)]);
      double expect = -4.0 * a *
                      (q0[static_cast<std::size_t>(i)] - c[static_cast<std::size_t>(i)]) *
                      (qp - t[static_cast<std::size_t>(i)]);
      CHECK(hg.w_grads[0][static_cast<std::size_t>(i)] ==
            doctest::Approx(expect).epsilon(1e-4));
    }
    CHECK(q.values() == q0);
    CHECK(w.values() == w0);
  }
}

TEST_CASE("prompt initialization is deterministic and model-shaped") {
  Model m(tiny_dims(), 5);
  Tensor p = init_prompt(m, 4, 9);
  CHECK(p.rows() == 4);
  CHECK(p.cols() == 16);
  CHECK(p.requires_grad());
  Tensor q = init_prompt(m, 4, 9);
  CHECK(p.values() == q.values());
  Tensor r = init_prompt(m, 4, 10);
  CHECK(p.values() != r.values());
}

TEST_CASE("generator tuning runs its cycle and leaves the backbone frozen") {
  Model m(tiny_dims(), 13);
  auto spec = TaskSpec::named("toy-paraphrase");
  auto splits = build_task(spec, 3, 2, 2, 4);

  GeneratorTuningConfig cfg;
  cfg.epochs = 2;
  cfg.batch_per_class = 2;
  cfg.prompt_len = 2;
  cfg.lambda_dist = 1.0;
  cfg.seed = 17;

  const auto digest_before = m.digest();
  auto res = tune_generator(m, splits.train_pool, spec, cfg);
  CHECK(m.digest() == digest_before);

  REQUIRE(res.prompts.size() == 2);
  for (const auto& p : res.prompts) {
    CHECK(p.rows() == 2);
    CHECK(p.cols() == 16);
    for (double v : p.values()) CHECK(std::isfinite(v));
  }
  // two batches per epoch, two epochs
  CHECK(res.loss_history.size() == 4);

  // tuned prompts moved away from their initialization
  Tensor p0 = init_prompt(m, 2, derive_seed(cfg.seed, "generator-prompt", 0));
  CHECK(res.prompts[0].values() != p0.values());

  SUBCASE("same seed reproduces the run bit for bit") {
    auto res2 = tune_generator(m, splits.train_pool, spec, cfg);
    CHECK(res2.prompts[0].values() == res.prompts[0].values());
    CHECK(res2.prompts[1].values() == res.prompts[1].values());
    CHECK(res2.loss_history == res.loss_history);
  }

  SUBCASE("a different seed changes the trajectory") {
    auto cfg2 = cfg;
    cfg2.seed = 18;
    auto res2 = tune_generator(m, splits.train_pool, spec, cfg2);
    CHECK(res2.prompts[0].values() != res.prompts[0].values());
  }

  SUBCASE("missing class data is rejected") {
    std::vector<Example> one_class;
    for (const auto& ex : splits.train_pool)
      if (ex.label == 0) one_class.push_back(ex);
    CHECK_THROWS_AS(tune_generator(m, one_class, spec, cfg), Error);
  }
}

TEST_CASE("uniform-weight ablation keeps token weights at one") {
  Model m(tiny_dims(), 13);
  auto spec = TaskSpec::named("toy-paraphrase");
  auto splits = build_task(spec, 3, 2, 2, 3);

  GeneratorTuningConfig cfg;
  cfg.epochs = 1;
  cfg.batch_per_class = 2;
  cfg.prompt_len = 2;
  cfg.uniform_weights = true;
  cfg.seed = 21;

  auto res = tune_generator(m, splits.train_pool, spec, cfg);
  Rng rng(3);
  std::vector<double> hv(5 * 16);
  for (double& x : hv) x = rng.normal();
  Tensor w = res.weight_net.weights_for(Tensor::from({5, 16}, hv));
  for (double x : w.values()) CHECK(x == 1.0);
}

TEST_CASE("generator state roundtrips through its checkpoint") {
  Model m(tiny_dims(), 13);
  auto spec = TaskSpec::named("toy-paraphrase");
  auto splits = build_task(spec, 3, 2, 2, 3);

  GeneratorTuningConfig cfg;
  cfg.epochs = 1;
  cfg.batch_per_class = 2;
  cfg.prompt_len = 3;
  cfg.tau_w = 0.5;
  cfg.seed = 29;
  auto res = tune_generator(m, splits.train_pool, spec, cfg);

  const std::string path = "/tmp/dawgen_genstate_test.ckpt";
  save_generator_state(path, m, res);
  auto back = load_generator_state(path, m, cfg.tau_w);
  std::remove(path.c_str());

  REQUIRE(back.prompts.size() == res.prompts.size());
  for (std::size_t i = 0; i < res.prompts.size(); ++i)
    CHECK(back.prompts[i].values() == res.prompts[i].values());

  Rng rng(3);
  std::vector<double> hv(4 * 16);
  for (double& x : hv) x = rng.normal();
  Tensor h = Tensor::from({4, 16}, hv);
  CHECK(back.weight_net.weights_for(h).values() ==
        res.weight_net.weights_for(h).values());
}
