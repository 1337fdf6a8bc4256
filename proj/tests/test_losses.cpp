#include <cmath>
#include <vector>

#include "dawgen/error.hpp"
#include "dawgen/fd_check.hpp"
#include "dawgen/gen_losses.hpp"
#include "dawgen/model.hpp"
#include "dawgen/rng.hpp"
#include "dawgen/task.hpp"
#include "dawgen/tensor.hpp"
#include "dawgen/vocab.hpp"
#include "dawgen/weight_net.hpp"
#include "doctest.h"

using namespace dawgen;

namespace {

constexpr int kD = 16;

ModelDims tiny_dims() {
  ModelDims d;
  d.vocab_size = Vocabulary::toy().size();
  d.d_model = kD;
  d.n_heads = 2;
  d.n_layers = 1;
  d.d_ff = 24;
  d.max_seq = 48;
  return d;
}

Tensor random_prompt(int rows, std::uint64_t seed, bool trainable = true) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(rows) * kD);
  for (double& x : v) x = 0.2 * rng.normal();
  return Tensor::from({rows, kD}, v, trainable);
}

struct Fixture {
  Model m{tiny_dims(), 71};
  TaskSpec spec = TaskSpec::named("toy-paraphrase");
  const Vocabulary& vocab = Vocabulary::toy();
  std::vector<GenItem> batch;          // both classes
  std::vector<GenItem> class0, class1;
  std::vector<Tensor> prompts;

  Fixture() {
    auto splits = build_task(spec, 31, 2, 2, 4);
    for (int i = 0; i < 6; ++i) {
      auto item = make_gen_item(splits.train_pool[static_cast<std::size_t>(i)],
                                spec, vocab);
      (item.label == 0 ? class0 : class1).push_back(item);
      batch.push_back(std::move(item));
    }
    prompts.push_back(random_prompt(2, 5));
    prompts.push_back(random_prompt(2, 6));
  }
};

}  // namespace

TEST_CASE("make_gen_item renders the context and appends eos to the target") {
  Fixture f;
  Example ex{{20, 21}, {22, 23}, 1};
  auto item = make_gen_item(ex, f.spec, f.vocab);
  CHECK(item.label == 1);
  CHECK(item.context == render_conditional(1, ex.s1, f.spec, f.vocab));
  CHECK(item.target == std::vector<int>{22, 23, f.vocab.eos_id()});
  auto bare = make_gen_item(ex, f.spec, f.vocab, false);
  CHECK(bare.target == std::vector<int>{22, 23});
}

TEST_CASE("forward_targets scores exactly the continuation region") {
  Fixture f;
  const GenItem& item = f.batch[0];
  const Tensor& q = f.prompts[static_cast<std::size_t>(item.label)];
  auto fwd = forward_targets(f.m, q, item);
  const int k = static_cast<int>(item.target.size());
  CHECK(fwd.nll.rows() == 1);
  CHECK(fwd.nll.cols() == k);
  CHECK(fwd.hidden.rows() == k);
  CHECK(fwd.hidden.cols() == kD);
  for (double v : fwd.nll.values()) CHECK(v > 0.0);

  // cross-check one token against a full forward pass
  std::vector<int> ids = item.context;
  ids.insert(ids.end(), item.target.begin(), item.target.end());
  auto lm = forward_lm(f.m, q, ids);
  const int n = q.rows(), c = static_cast<int>(item.context.size());
  for (int j = 0; j < k; ++j) {
    Tensor row = reshape(gather_rows(lm.logits, {n + c + j - 1}),
                         {lm.logits.cols()});
    Tensor ce = softmax_cross_entropy(row, item.target[static_cast<std::size_t>(j)]);
    CHECK(fwd.nll.values()[static_cast<std::size_t>(j)] ==
          doctest::Approx(ce.item()).epsilon(1e-13));
  }
}

TEST_CASE("loss_gen averages summed continuation nll and validates labels") {
  Fixture f;
  Tensor lg = loss_gen(f.m, f.prompts[0], f.class0, 0);
  double manual = 0.0;
  for (const auto& item : f.class0) {
    auto fwd = forward_targets(f.m, f.prompts[0], item);
    for (double v : fwd.nll.values()) manual += v;
  }
  manual /= static_cast<double>(f.class0.size());
  CHECK(lg.item() == doctest::Approx(manual).epsilon(1e-13));

  CHECK_THROWS_AS(loss_gen(f.m, f.prompts[0], f.batch, 0), Error);
  CHECK_THROWS_AS(loss_gen(f.m, f.prompts[0], {}, 0), Error);
  GenItem empty_target = f.class0[0];
  empty_target.target.clear();
  CHECK_THROWS_AS(loss_gen(f.m, f.prompts[0], {empty_target}, 0), Error);
}

TEST_CASE("uniform weight net reduces the weighted loss to the plain one") {
  Fixture f;
  WeightNet uni = WeightNet::uniform(kD, 8);
  Tensor plain = loss_gen(f.m, f.prompts[0], f.class0, 0);
  Tensor weighted = loss_wgen(f.m, f.prompts[0], uni, f.class0, 0);
  CHECK(weighted.item() == plain.item());  // exact: uniform weights are 1.0

  WeightNet net(kD, 3, 1.0, 8);
  Tensor shaped = loss_wgen(f.m, f.prompts[0], net, f.class0, 0);
  CHECK(shaped.item() != plain.item());
}

TEST_CASE("weight net emits a positive per-token simplex scaled by length") {
  Fixture f;
  WeightNet net(kD, 3, 0.7, 8);
  auto fwd = forward_targets(f.m, f.prompts[0], f.class0[0]);
  Tensor w = net.weights_for(fwd.hidden);
  const int k = fwd.hidden.rows();
  CHECK(w.rows() == 1);
  CHECK(w.cols() == k);
  double total = 0.0;
  for (double x : w.values()) {
    CHECK(x > 0.0);
    total += x;
  }
  CHECK(total == doctest::Approx(static_cast<double>(k)).epsilon(1e-12));
}

TEST_CASE("identical class prompts pin the discrimination loss at -1/L") {
  Fixture f;
  std::vector<Tensor> same2 = {f.prompts[0], f.prompts[0]};
  Tensor d2 = loss_disc(f.m, same2, f.batch);
  CHECK(d2.item() == -0.5);  // p / (p + p) is exactly one half

  std::vector<Tensor> same3 = {f.prompts[0], f.prompts[0], f.prompts[0]};
  Tensor d3 = loss_disc(f.m, same3, f.batch);
  CHECK(d3.item() == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));

  Tensor dl = loss_disc(f.m, same2, f.batch, true);
  CHECK(dl.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("discrimination loss stays in its stated range") {
  Fixture f;
  Tensor d = loss_disc(f.m, f.prompts, f.batch);
  CHECK(d.item() >= -1.0);
  CHECK(d.item() < 0.0);
  CHECK_THROWS_AS(loss_disc(f.m, {f.prompts[0]}, f.batch), Error);
  GenItem bad = f.batch[0];
  bad.label = 7;
  CHECK_THROWS_AS(loss_disc(f.m, f.prompts, {bad}), Error);
}

TEST_CASE("margin term matches the hinge formula") {
  auto vec = [](std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor::from({n}, std::move(v));
  };
  CHECK(dist_margin_term(vec({1, 0}), vec({1, 0}), vec({0, 1})).item() == 0.0);
  CHECK(dist_margin_term(vec({1, 0}), vec({0, 1}), vec({1, 0})).item() == 2.0);
  CHECK(dist_margin_term(vec({1, 0}), vec({0, 1}), vec({-1, 0})).item() == 0.0);
  CHECK(dist_margin_term(vec({1, 0}), vec({1, 1}), vec({0, 1})).item() ==
        doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("dist pair sampling respects labels and skips lonely anchors") {
  Fixture f;
  Rng rng(9);
  auto pairs = sample_dist_pairs(f.batch, rng);
  REQUIRE(pairs.pos.size() == f.batch.size());
  for (std::size_t i = 0; i < f.batch.size(); ++i) {
    REQUIRE(pairs.pos[i] >= 0);
    REQUIRE(pairs.neg[i] >= 0);
    CHECK(pairs.pos[i] != static_cast<int>(i));
    CHECK(f.batch[static_cast<std::size_t>(pairs.pos[i])].label == f.batch[i].label);
    CHECK(f.batch[static_cast<std::size_t>(pairs.neg[i])].label != f.batch[i].label);
  }

  Rng r2(9);
  auto again = sample_dist_pairs(f.batch, r2);
  CHECK(again.pos == pairs.pos);
  CHECK(again.neg == pairs.neg);

  auto lonely = sample_dist_pairs(f.class0, rng);
  for (int p : lonely.pos) CHECK(p == -1);
  CHECK_THROWS_AS(loss_dist(f.m, f.prompts, WeightNet::uniform(kD, 8), f.class0,
                            lonely),
                  Error);
}

TEST_CASE("combined objective equals its separately computed parts") {
  Fixture f;
  WeightNet net(kD, 11, 1.0, 8);
  Rng rng(13);
  auto pairs = sample_dist_pairs(f.batch, rng);
  const double lambda = 0.75;

  Tensor combined = loss_dawgen(f.m, f.prompts, net, f.batch, pairs, lambda);
  double w0 = loss_wgen(f.m, f.prompts[0], net, f.class0, 0).item();
  double w1 = loss_wgen(f.m, f.prompts[1], net, f.class1, 1).item();
  double dist = loss_dist(f.m, f.prompts, net, f.batch, pairs).item();
  CHECK(combined.item() ==
        doctest::Approx(0.5 * (w0 + w1) + lambda * dist).epsilon(1e-12));

  SUBCASE("lambda zero drops the distribution term and ignores pairs") {
    Tensor no_dist = loss_dawgen(f.m, f.prompts, net, f.batch, DistPairs{}, 0.0);
    CHECK(no_dist.item() == doctest::Approx(0.5 * (w0 + w1)).epsilon(1e-12));
  }

  SUBCASE("a missing class is rejected") {
    CHECK_THROWS_AS(loss_dawgen(f.m, f.prompts, net, f.class0, pairs, 0.0), Error);
  }

  SUBCASE("pair table must match the batch when the term is active") {
    CHECK_THROWS_AS(loss_dawgen(f.m, f.prompts, net, f.batch, DistPairs{}, 1.0),
                    Error);
  }
}

TEST_CASE("analytic gradients of every loss match finite differences") {
  Fixture f;
  WeightNet net(kD, 17, 1.0, 8);
  Rng rng(19);
  auto pairs = sample_dist_pairs(f.batch, rng);
  std::vector<GenItem> small0(f.class0.begin(), f.class0.begin() + 2);

  SUBCASE("loss_gen w.r.t. the class prompt") {
    double err = finite_difference_check(
        [&] { return loss_gen(f.m, f.prompts[0], small0, 0); }, f.prompts[0]);
    CHECK(err < 1e-4);
  }

  SUBCASE("loss_wgen w.r.t. prompt and weight net") {
    double err = finite_difference_check(
        [&] { return loss_wgen(f.m, f.prompts[0], net, small0, 0); }, f.prompts[0]);
    CHECK(err < 1e-4);
    for (auto& [name, p] : net.named_parameters()) {
      std::vector<int> coords;
      for (int i = 0; i < 6 && i < static_cast<int>(p.values().size()); ++i)
        coords.push_back(i);
      double perr = finite_difference_check(
          [&] { return loss_wgen(f.m, f.prompts[0], net, small0, 0); }, p, 1e-4,
          coords);
      CHECK(perr < 1e-4);
    }
  }

  SUBCASE("loss_disc w.r.t. both prompts, both ratio forms") {
    std::vector<GenItem> two = {f.class0[0], f.class1[0]};
    for (bool log_ratio : {false, true}) {
      for (auto& q : f.prompts) {
        double err = finite_difference_check(
            [&] { return loss_disc(f.m, f.prompts, two, log_ratio); }, q);
        CHECK(err < 1e-4);
      }
    }
  }

  SUBCASE("loss_dist w.r.t. a prompt") {
    double err = finite_difference_check(
        [&] { return loss_dist(f.m, f.prompts, net, f.batch, pairs); },
        f.prompts[1]);
    CHECK(err < 1e-4);
  }

  SUBCASE("loss_dawgen w.r.t. prompts and net") {
    auto full = [&] { return loss_dawgen(f.m, f.prompts, net, f.batch, pairs, 0.5); };
    for (auto& q : f.prompts) {
      double err = finite_difference_check(full, q);
      CHECK(err < 1e-4);
    }
    auto params = net.named_parameters();
    double err = finite_difference_check(full, params[0].second, 1e-4,
                                         {0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(err < 1e-4);
  }
}
