#include <cmath>
#include <cstring>
#include <vector>

#include "dawgen/error.hpp"
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
  d.n_layers = 2;
  d.d_ff = 32;
  d.max_seq = 40;
  return d;
}

Tensor random_prompt(int rows, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(rows) * d);
  for (double& x : v) x = 0.1 * rng.normal();
  return Tensor::from({rows, d}, v);
}

}  // namespace

TEST_CASE("forward shapes follow the prompt and token counts") {
  Model m(tiny_dims(), 11);
  std::vector<int> ids = {20, 21, 22, 23, 24};
  Tensor prompt = random_prompt(3, 16, 5);

  auto out = forward_lm(m, prompt, ids);
  CHECK(out.hidden.rows() == 8);
  CHECK(out.hidden.cols() == 16);
  CHECK(out.logits.rows() == 8);
  CHECK(out.logits.cols() == Vocabulary::toy().size());

  auto bare = forward_lm(m, Tensor(), ids);
  CHECK(bare.hidden.rows() == 5);
  CHECK(bare.logits.rows() == 5);
}

TEST_CASE("model construction is deterministic in the seed") {
  ModelDims d = tiny_dims();
  Model a(d, 7), b(d, 7), c(d, 8);
  CHECK(a.digest() == b.digest());
  CHECK(a.digest() != c.digest());
}

TEST_CASE("digest tracks parameter drift") {
  Model m(tiny_dims(), 3);
  auto before = m.digest();
  auto params = m.named_parameters();
  REQUIRE(!params.empty());
  Tensor emb = m.token_embedding();
  auto v = emb.values();
  v[0] += 1e-9;
  emb.set_values(v);
  CHECK(m.digest() != before);
  v[0] -= 1e-9;
  emb.set_values(v);
  CHECK(m.digest() == before);
}

TEST_CASE("named parameters cover both layers with stable names") {
  Model m(tiny_dims(), 3);
  auto params = m.named_parameters();
  // embeddings + final norm + 12 tensors per layer
  CHECK(params.size() == 4 + 12 * 2);
  CHECK(params[0].first == "tok_emb");
  bool saw_l1 = false;
  for (auto& [name, t] : params) {
    CHECK(t.defined());
    if (name.find("layer1.") == 0) saw_l1 = true;
  }
  CHECK(saw_l1);
}

TEST_CASE("set_trainable toggles every backbone leaf") {
  Model m(tiny_dims(), 3);
  for (auto& [name, t] : m.named_parameters()) CHECK_FALSE(t.requires_grad());
  m.set_trainable(true);
  for (auto& [name, t] : m.named_parameters()) CHECK(t.requires_grad());
  m.set_trainable(false);
  for (auto& [name, t] : m.named_parameters()) CHECK_FALSE(t.requires_grad());
}

TEST_CASE("causal masking: prefix outputs ignore appended tokens") {
  Model m(tiny_dims(), 19);
  std::vector<int> prefix = {20, 31, 42};
  std::vector<int> longer = {20, 31, 42, 55, 60};

  auto short_out = forward_lm(m, Tensor(), prefix);
  auto long_out = forward_lm(m, Tensor(), longer);
  auto sh = short_out.hidden.values();
  auto lh = long_out.hidden.values();
  const int dcols = short_out.hidden.cols();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < dcols; ++c)
      CHECK(sh[static_cast<std::size_t>(r * dcols + c)] ==
            lh[static_cast<std::size_t>(r * dcols + c)]);
}

TEST_CASE("embed applies the positional offset") {
  Model m(tiny_dims(), 19);
  std::vector<int> ids = {20, 21};
  auto a = m.embed(ids, 0).values();
  auto b = m.embed(ids, 3).values();
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) same = false;
  CHECK_FALSE(same);

  // with a 2-row prompt, token rows must sit at positions 2 and 3
  Tensor prompt = random_prompt(2, 16, 1);
  auto spliced = embed_with_prompt(m, prompt, ids);
  CHECK(spliced.rows() == 4);
  auto sv = spliced.values();
  auto offset_rows = m.embed(ids, 2).values();
  for (std::size_t i = 0; i < offset_rows.size(); ++i)
    CHECK(sv[2 * 16 + i] == offset_rows[i]);
  auto pv = prompt.values();
  for (std::size_t i = 0; i < pv.size(); ++i) CHECK(sv[i] == pv[i]);
}

TEST_CASE("incremental inference matches the graph forward bit for bit") {
  Model m(tiny_dims(), 23);
  std::vector<int> ids = {20, 35, 41, 52, 60, 19};

  SUBCASE("without a prompt") {
    auto graph = forward_lm(m, Tensor(), ids);
    InferenceRun run(m, Tensor());
    run.feed_all(ids);
    CHECK(run.position() == 6);
    auto inc = run.logits();
    auto gv = graph.logits.values();
    const int vsz = graph.logits.cols();
    for (int c = 0; c < vsz; ++c)
      CHECK(inc[static_cast<std::size_t>(c)] ==
            gv[static_cast<std::size_t>((5) * vsz + c)]);
    auto hid = run.last_hidden();
    auto gh = graph.hidden.values();
    for (int c = 0; c < 16; ++c)
      CHECK(hid[static_cast<std::size_t>(c)] == gh[static_cast<std::size_t>(5 * 16 + c)]);
  }

  SUBCASE("with a soft prompt") {
    Tensor prompt = random_prompt(4, 16, 9);
    auto graph = forward_lm(m, prompt, ids);
    InferenceRun run(m, prompt);
    CHECK(run.position() == 4);
    for (int t : ids) run.feed(t);
    auto inc = run.logits();
    auto gv = graph.logits.values();
    const int vsz = graph.logits.cols();
    const int last = graph.logits.rows() - 1;
    for (int c = 0; c < vsz; ++c)
      CHECK(inc[static_cast<std::size_t>(c)] ==
            gv[static_cast<std::size_t>(last * vsz + c)]);
  }

  SUBCASE("intermediate positions also agree") {
    auto graph = forward_lm(m, Tensor(), ids);
    InferenceRun run(m, Tensor());
    auto gv = graph.logits.values();
    const int vsz = graph.logits.cols();
    for (std::size_t t = 0; t < ids.size(); ++t) {
      run.feed(ids[t]);
      auto inc = run.logits();
      for (int c = 0; c < vsz; ++c)
        CHECK(inc[static_cast<std::size_t>(c)] ==
              gv[t * static_cast<std::size_t>(vsz) + static_cast<std::size_t>(c)]);
    }
  }
}

TEST_CASE("sequence length guard rejects overlong inputs") {
  ModelDims d = tiny_dims();
  d.max_seq = 6;
  Model m(d, 2);
  std::vector<int> ok(6, 20), over(7, 20);
  CHECK_NOTHROW(forward_lm(m, Tensor(), ok));
  CHECK_THROWS_AS(forward_lm(m, Tensor(), over), Error);

  Tensor prompt = random_prompt(3, 16, 4);
  std::vector<int> four(4, 20);
  CHECK_THROWS_AS(forward_lm(m, prompt, four), Error);
  InferenceRun run(m, prompt);
  run.feed_all({20, 21, 22});
  CHECK_THROWS_AS(run.feed(23), Error);
}

TEST_CASE("score_labels renormalizes over the given classes") {
  Model m(tiny_dims(), 29);
  const auto& v = Vocabulary::toy();
  auto spec = TaskSpec::named("toy-nli");
  auto splits = build_task(spec, 1, 2, 2, 2);
  auto ids = render_classification(splits.test[0], spec, v);
  auto verbs = verbalizer_ids(spec, v);

  auto probs = score_labels(m, Tensor(), ids, verbs);
  REQUIRE(probs.size() == 3);
  double sum = 0.0;
  for (double p : probs) {
    CHECK(p > 0.0);
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // boosting one verbalizer embedding must push its class probability up
  int argmax_before = predict_class(m, Tensor(), ids, verbs);

  Tensor emb = m.token_embedding();
  auto ev = emb.values();
  const int dm = emb.cols();
  InferenceRun probe(m, Tensor());
  probe.feed_all(std::vector<int>(ids.begin(), ids.end() - 1));
  auto hid = probe.last_hidden();
  for (int c = 0; c < dm; ++c)
    ev[static_cast<std::size_t>(verbs[2] * dm + c)] = 100.0 * hid[static_cast<std::size_t>(c)];
  emb.set_values(ev);

  auto boosted = score_labels(m, Tensor(), ids, verbs);
  CHECK(boosted[2] > 0.99);
  CHECK(predict_class(m, Tensor(), ids, verbs) == 2);
  (void)argmax_before;
}

TEST_CASE("class_log_probs validates its inputs") {
  Model m(tiny_dims(), 29);
  CHECK_THROWS_AS(class_log_probs(m, Tensor(), {20}, {3, 5}), Error);
  CHECK_THROWS_AS(class_log_probs(m, Tensor(), {20, 21}, {3, 1000}), Error);
}

TEST_CASE("gradients flow into a trainable soft prompt but not the frozen backbone") {
  Model m(tiny_dims(), 31);
  Tensor prompt = random_prompt(3, 16, 2);
  prompt.set_requires_grad(true);
  std::vector<int> ids = {20, 21, 22};

  auto out = forward_lm(m, prompt, ids);
  Tensor loss = mean(out.hidden);
  backward(loss);

  REQUIRE(prompt.has_grad());
  auto g = prompt.grad();
  bool nonzero = false;
  for (double x : g)
    if (x != 0.0) nonzero = true;
  CHECK(nonzero);
  CHECK_FALSE(m.token_embedding().has_grad());
}

TEST_CASE("construction validates dimensions") {
  ModelDims d = tiny_dims();
  d.vocab_size = 0;
  CHECK_THROWS_AS(Model(d, 1), Error);
  d = tiny_dims();
  d.d_model = 15;  // not divisible by heads
  CHECK_THROWS_AS(Model(d, 1), Error);
}
