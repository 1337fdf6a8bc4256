#include <cmath>
#include <vector>

#include <doctest.h>

#include "dawgen/error.hpp"
#include "dawgen/fd_check.hpp"
#include "dawgen/rng.hpp"
#include "dawgen/tensor.hpp"

using namespace dawgen;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool rg = true,
                     double scale = 1.0) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * scale;
  return Tensor::from(std::move(shape), std::move(v), rg);
}

}  // namespace

TEST_CASE("construction and accessors") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  CHECK(t.values()[4] == 5.0);
  CHECK_FALSE(t.requires_grad());

  Tensor s = Tensor::scalar(2.5);
  CHECK(s.item() == 2.5);
  CHECK_THROWS_AS((void)t.item(), Error);

  Tensor u;
  CHECK_FALSE(u.defined());
}

TEST_CASE("matmul forward oracle") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(a, b);
  CHECK(c.values() == std::vector<double>{19, 22, 43, 50});

  Tensor ct = matmul(a, b, false, true);  // a @ b^T
  CHECK(ct.values() == std::vector<double>{17, 23, 39, 53});

  Tensor tt = matmul(a, b, true, false);  // a^T @ b
  CHECK(tt.values() == std::vector<double>{26, 30, 38, 44});
}

TEST_CASE("matmul shape errors") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({2, 2}, {1, 0, 0, 1});
  CHECK_THROWS_AS(matmul(a, b), Error);
}

TEST_CASE("softmax cross entropy frozen oracle") {
  Tensor logits = Tensor::from({2}, {1.0, 0.0}, true);
  Tensor loss = softmax_cross_entropy(logits, 0);
  CHECK(loss.item() == doctest::Approx(0.31326168751822286).epsilon(1e-12));
  backward(loss);
  CHECK(logits.grad()[0] ==
        doctest::Approx(-0.26894142136999512).epsilon(1e-12));
  CHECK(logits.grad()[1] ==
        doctest::Approx(0.26894142136999512).epsilon(1e-12));
}

TEST_CASE("softmax rows normalizes and matches hand softmax") {
  Tensor x = Tensor::from({1, 2}, {2.0, 1.0});
  Tensor p = softmax_rows(x);
  CHECK(p.values()[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(p.values()[1] == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(p.values()[0] + p.values()[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("soft target cross entropy equals hard target at one-hot") {
  Rng rng(7);
  Tensor logits = random_tensor({5}, rng);
  Tensor hard = softmax_cross_entropy(logits, 3);
  Tensor soft = softmax_cross_entropy_soft(logits, {0, 0, 0, 1, 0});
  CHECK(hard.item() == doctest::Approx(soft.item()).epsilon(1e-12));
}

TEST_CASE("gelu matches normal cdf form") {
  Tensor x = Tensor::from({1}, {1.0});
  Tensor y = gelu(x);
  CHECK(y.values()[0] == doctest::Approx(0.8413447460685429).epsilon(1e-10));
}

TEST_CASE("exp log roundtrip and domain error") {
  Tensor x = Tensor::from({3}, {0.5, 1.0, 2.0});
  Tensor y = log(exp(x));
  for (int i = 0; i < 3; ++i)
    CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));
  Tensor bad = Tensor::from({1}, {-1.0});
  CHECK_THROWS_AS(log(bad), Error);
}

TEST_CASE("backward requires scalar and a trainable leaf") {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(add(a, a)), Error);

  Tensor frozen = Tensor::from({2}, {1, 2}, false);
  Tensor loss = sum(mul(frozen, frozen));
  CHECK_THROWS_AS(backward(loss), Error);
}

TEST_CASE("repeated backward is bit identical") {
  Rng rng(3);
  Tensor w = random_tensor({4, 4}, rng);
  Tensor x = random_tensor({4, 4}, rng, false);
  Tensor loss = sum(gelu(matmul(x, w)));
  backward(loss);
  std::vector<double> g1 = w.grad();
  backward(loss);
  CHECK(w.grad() == g1);
}

TEST_CASE("frozen parents receive no gradient") {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  Tensor b = Tensor::from({2}, {3, 4}, false);
  Tensor loss = sum(mul(a, b));
  backward(loss);
  CHECK(a.has_grad());
  CHECK_FALSE(b.has_grad());
}

TEST_CASE("gather_rows accumulates duplicate indices") {
  Tensor m = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tensor g = gather_rows(m, {1, 1});
  backward(sum(g));
  CHECK(m.grad() == std::vector<double>{0, 0, 2, 2, 0, 0});
}

TEST_CASE("add broadcasts a row vector") {
  Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = Tensor::from({3}, {10, 20, 30});
  Tensor out = add(m, r);
  CHECK(out.values() == std::vector<double>{11, 22, 33, 14, 25, 36});
}

TEST_CASE("set_values rejected on op results") {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  Tensor c = add(a, a);
  CHECK_THROWS_AS(c.set_values({0, 0}), Error);
}

TEST_CASE("cosine similarity oracle and zero-norm error") {
  Tensor u = Tensor::from({2}, {1, 0});
  Tensor v = Tensor::from({2}, {0, 1});
  CHECK(cosine_similarity(u, v).item() == doctest::Approx(0.0).epsilon(1e-12));
  Tensor w = Tensor::from({2}, {3, 0});
  CHECK(cosine_similarity(u, w).item() == doctest::Approx(1.0).epsilon(1e-12));
  Tensor z = Tensor::from({2}, {0, 0});
  CHECK_THROWS_AS(cosine_similarity(u, z), Error);
}

TEST_CASE("layer_norm output is standardized") {
  Tensor x = Tensor::from({1, 3}, {1, 2, 3});
  Tensor g = Tensor::full({3}, 1.0);
  Tensor b = Tensor::zeros({3});
  Tensor y = layer_norm(x, g, b);
  double mean = (y.values()[0] + y.values()[1] + y.values()[2]) / 3.0;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(y.values()[2] == doctest::Approx(1.2247) .epsilon(1e-3));
}

TEST_CASE("finite differences: elementwise chains") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor w = random_tensor({3, 4}, rng);
    auto loss = [&]() {
      return mean(mul(gelu(w), affine(w, 0.5, 1.0)));
    };
    CHECK(finite_difference_check(loss, w) < 1e-5);
  }
}

TEST_CASE("finite differences: matmul transposes") {
  Rng rng(12);
  for (auto [ta, tb] : {std::pair{false, false}, {false, true}, {true, false}}) {
    {
      Tensor a = random_tensor({3, 4}, rng);
      Tensor b = random_tensor(ta == tb ? std::vector<int>{4, 3}
                                        : std::vector<int>{3, 4},
                               rng);
      auto loss = [&, ta = ta, tb = tb]() {
        Tensor c = matmul(a, b, ta, tb);
        return sum(mul(c, c));
      };
      CHECK(finite_difference_check(loss, a) < 1e-5);
      CHECK(finite_difference_check(loss, b) < 1e-5);
    }
  }
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 3}, rng);
  CHECK_THROWS_WITH(matmul(a, b, true, true),
                    "matmul: double transpose unsupported");
}

TEST_CASE("finite differences: softmax and cross entropy family") {
  Rng rng(13);
  Tensor logits = random_tensor({6}, rng);
  auto l1 = [&]() { return softmax_cross_entropy(logits, 2); };
  CHECK(finite_difference_check(l1, logits) < 1e-6);

  Tensor rows = random_tensor({4, 5}, rng);
  auto l2 = [&]() {
    return mean(softmax_cross_entropy_rows(rows, {0, 3, 1, 4}));
  };
  CHECK(finite_difference_check(l2, rows) < 1e-6);

  Tensor soft_logits = random_tensor({4}, rng);
  auto l3 = [&]() {
    return softmax_cross_entropy_soft(soft_logits, {0.1, 0.2, 0.3, 0.4});
  };
  CHECK(finite_difference_check(l3, soft_logits) < 1e-6);

  Tensor sm = random_tensor({3, 4}, rng);
  auto l4 = [&]() { return sum(mul(softmax_rows(sm), sm)); };
  CHECK(finite_difference_check(l4, sm) < 1e-5);
}

TEST_CASE("finite differences: layer norm") {
  Rng rng(14);
  Tensor x = random_tensor({3, 8}, rng);
  Tensor g = random_tensor({8}, rng);
  Tensor b = random_tensor({8}, rng);
  auto loss = [&]() { return sum(mul(layer_norm(x, g, b), x)); };
  CHECK(finite_difference_check(loss, x, 1e-5) < 1e-4);
  CHECK(finite_difference_check(loss, g) < 1e-5);
  CHECK(finite_difference_check(loss, b) < 1e-5);
}

TEST_CASE("finite differences: structural ops") {
  Rng rng(15);
  Tensor m = random_tensor({4, 6}, rng);
  auto loss = [&]() {
    Tensor left = slice_cols(m, 0, 3);
    Tensor right = slice_cols(m, 3, 3);
    Tensor cat = concat_cols({left, right});
    Tensor picked = gather_rows(cat, {0, 2, 2});
    return mean(mul(picked, picked));
  };
  CHECK(finite_difference_check(loss, m) < 1e-5);

  Tensor v = random_tensor({5}, rng);
  auto loss2 = [&]() {
    Tensor g = gather(v, {4, 1, 1});
    return sum(mul(g, g));
  };
  CHECK(finite_difference_check(loss2, v) < 1e-5);
}

TEST_CASE("finite differences: reductions and ratios") {
  Rng rng(16);
  Tensor u = random_tensor({6}, rng);
  Tensor v = random_tensor({6}, rng);
  auto loss = [&]() {
    Tensor c = cosine_similarity(u, v);
    Tensor d = dot(u, v);
    return add(c, affine(d, 0.01, 0.0));
  };
  CHECK(finite_difference_check(loss, u) < 1e-5);
  CHECK(finite_difference_check(loss, v) < 1e-5);

  Tensor num = random_tensor({4}, rng, true, 0.5);
  auto loss2 = [&]() {
    Tensor e = exp(num);
    return sum(divide(e, clamp_min(add_n({e, e}), 1e-12)));
  };
  CHECK(finite_difference_check(loss2, num) < 1e-5);
}

TEST_CASE("clamp_min gradient gates at the floor") {
  Tensor x = Tensor::from({2}, {-1.0, 2.0}, true);
  Tensor y = clamp_min(x, 0.0);
  CHECK(y.values() == std::vector<double>{0.0, 2.0});
  backward(sum(y));
  CHECK(x.grad() == std::vector<double>{0.0, 1.0});
}

TEST_CASE("concat_rows stacks and routes gradient") {
  Tensor a = Tensor::from({1, 2}, {1, 2}, true);
  Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6}, true);
  Tensor c = concat_rows(a, b);
  CHECK(c.rows() == 3);
  CHECK(c.values() == std::vector<double>{1, 2, 3, 4, 5, 6});
  backward(sum(mul(c, c)));
  CHECK(a.grad() == std::vector<double>{2, 4});
  CHECK(b.grad() == std::vector<double>{6, 8, 10, 12});
}

TEST_CASE("reshape preserves data and gradient") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor r = reshape(a, {3, 2});
  CHECK(r.rows() == 3);
  CHECK(r.values() == a.values());
  CHECK_THROWS_AS(reshape(a, {4, 2}), Error);
  backward(sum(mul(r, r)));
  CHECK(a.grad() == std::vector<double>{2, 4, 6, 8, 10, 12});
}

TEST_CASE("gather_entries picks one column per row") {
  Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor e = gather_entries(m, {2, 0});
  CHECK(e.values() == std::vector<double>{3, 4});
  backward(sum(e));
  CHECK(m.grad() == std::vector<double>{0, 0, 1, 1, 0, 0});
}
