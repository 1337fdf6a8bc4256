#include "dawgen/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "dawgen/error.hpp"

namespace dawgen {

namespace detail {

int Node::rows() const {
  if (shape.size() == 2) return shape[0];
  if (shape.size() == 1) return 1;
  throw Error("rows(): tensor is not 1-D or 2-D");
}

int Node::cols() const {
  if (shape.size() == 2) return shape[1];
  if (shape.size() == 1) return shape[0];
  throw Error("cols(): tensor is not 1-D or 2-D");
}

namespace {

std::atomic<std::uint64_t> g_next_id{1};

std::size_t shape_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error("negative dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

}  // namespace detail

using detail::Node;

namespace {

std::shared_ptr<Node> make_node(std::vector<int> shape, std::vector<double> values,
                                bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  n->id = detail::g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

// Result node of an op: requires_grad if any parent does.
std::shared_ptr<Node> make_result(std::vector<int> shape, std::vector<double> values,
                                  std::vector<std::shared_ptr<Node>> parents,
                                  std::function<void(Node&)> backward_fn) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto n = make_node(std::move(shape), std::move(values), rg);
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void ensure_grad(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.size(), 0.0);
}

// Accumulation helper inside backward_fn bodies.
double* grad_of(const std::shared_ptr<Node>& p) {
  if (!p->requires_grad) return nullptr;
  ensure_grad(*p);
  return p->grad.data();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error(std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = detail::shape_count(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  auto n = detail::shape_count(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values,
                    bool requires_grad) {
  if (detail::shape_count(shape) != values.size())
    throw Error("Tensor::from: shape does not match value count");
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(make_node({}, {v}, requires_grad));
}

double Tensor::item() const {
  if (size() != 1) throw Error("item(): tensor is not scalar");
  return node_->values[0];
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) throw Error("grad(): no gradient populated");
  return node_->grad;
}

void Tensor::set_values(const std::vector<double>& values) {
  if (node_->backward_fn)
    throw Error("set_values: tensor is an op result, not a leaf");
  if (values.size() != node_->values.size())
    throw Error("set_values: size mismatch");
  node_->values = values;
}

void Tensor::add_scaled_inplace(const std::vector<double>& delta, double scale) {
  if (node_->backward_fn)
    throw Error("add_scaled_inplace: tensor is an op result, not a leaf");
  if (delta.size() != node_->values.size())
    throw Error("add_scaled_inplace: size mismatch");
  for (std::size_t i = 0; i < delta.size(); ++i)
    node_->values[i] += scale * delta[i];
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward: undefined loss tensor");
  if (loss.size() != 1) throw Error("backward: loss is not scalar");
  Node* root = loss.node();
  if (!root->requires_grad)
    throw Error("backward: loss does not depend on any trainable tensor");

  // Reachable subgraph, then exact reverse construction order by node id.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  for (Node* n : order) n->grad.assign(n->size(), 0.0);
  root->grad[0] = 1.0;
  for (Node* n : order) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---- kernels ----

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    std::fill(ci, ci + n, 0.0);
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      double av = ai[kk];
      const double* bk = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      ci[j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
  for (int kk = 0; kk < k; ++kk) {
    const double* ak = a + static_cast<std::size_t>(kk) * m;
    const double* bk = b + static_cast<std::size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      double av = ak[i];
      double* ci = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

void softmax_inplace(double* x, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  for (int i = 0; i < n; ++i) x[i] /= sum;
}

}  // namespace kernels

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.ndim() != 2 || b.ndim() != 2) throw Error("matmul: operands must be 2-D");
  if (trans_a && trans_b) throw Error("matmul: double transpose unsupported");
  int m = trans_a ? a.dim(1) : a.dim(0);
  int k = trans_a ? a.dim(0) : a.dim(1);
  int kb = trans_b ? b.dim(1) : b.dim(0);
  int n = trans_b ? b.dim(0) : b.dim(1);
  if (k != kb) throw Error("matmul: inner dimensions differ");

  std::vector<double> out(static_cast<std::size_t>(m) * n);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  if (!trans_a && !trans_b)
    kernels::matmul_nn(pa, pb, out.data(), m, k, n);
  else if (!trans_a && trans_b)
    kernels::matmul_nt(pa, pb, out.data(), m, k, n);
  else
    kernels::matmul_tn(pa, pb, out.data(), m, k, n);

  return Tensor(make_result(
      {m, n}, std::move(out), {a.ptr(), b.ptr()},
      [m, k, n, trans_a, trans_b](Node& self) {
        const double* dc = self.grad.data();
        auto& pa_node = self.parents[0];
        auto& pb_node = self.parents[1];
        const double* av = pa_node->values.data();
        const double* bv = pb_node->values.data();
        std::vector<double> tmp;
        if (double* da = grad_of(pa_node)) {
          tmp.resize(pa_node->size());
          if (!trans_a && !trans_b)
            kernels::matmul_nt(dc, bv, tmp.data(), m, n, k);  // dA = dC*B^T
          else if (!trans_a && trans_b)
            kernels::matmul_nn(dc, bv, tmp.data(), m, n, k);  // dA = dC*B
          else
            kernels::matmul_nt(bv, dc, tmp.data(), k, n, m);  // dA = B*dC^T
          for (std::size_t i = 0; i < tmp.size(); ++i) da[i] += tmp[i];
        }
        if (double* db = grad_of(pb_node)) {
          tmp.assign(pb_node->size(), 0.0);
          if (!trans_a && !trans_b)
            kernels::matmul_tn(av, dc, tmp.data(), k, m, n);  // dB = A^T*dC
          else if (!trans_a && trans_b)
            kernels::matmul_tn(dc, av, tmp.data(), n, m, k);  // dB = dC^T*A
          else
            kernels::matmul_nn(av, dc, tmp.data(), k, m, n);  // dB = A*dC
          for (std::size_t i = 0; i < tmp.size(); ++i) db[i] += tmp[i];
        }
      }));
}

Tensor add(const Tensor& a, const Tensor& b) {
  bool broadcast = false;
  if (a.shape() != b.shape()) {
    if (a.ndim() == 2 && b.ndim() == 1 && a.dim(1) == b.dim(0)) {
      broadcast = true;
    } else {
      throw Error("add: shape mismatch");
    }
  }
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  if (!broadcast) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  } else {
    int rows = a.dim(0), cols = a.dim(1);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        out[static_cast<std::size_t>(i) * cols + j] =
            av[static_cast<std::size_t>(i) * cols + j] + bv[j];
  }
  return Tensor(make_result(
      a.shape(), std::move(out),
      {a.ptr(), b.ptr()},
      [broadcast](Node& self) {
        const auto& dc = self.grad;
        if (double* da = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
        if (double* db = grad_of(self.parents[1])) {
          if (!broadcast) {
            for (std::size_t i = 0; i < dc.size(); ++i) db[i] += dc[i];
          } else {
            int cols = self.shape[1];
            int rows = self.shape[0];
            for (int i = 0; i < rows; ++i)
              for (int j = 0; j < cols; ++j)
                db[j] += dc[static_cast<std::size_t>(i) * cols + j];
          }
        }
      }));
}

Tensor add_n(const std::vector<Tensor>& ts) {
  if (ts.empty()) throw Error("add_n: empty input");
  std::vector<double> out(ts[0].size(), 0.0);
  std::vector<std::shared_ptr<Node>> parents;
  parents.reserve(ts.size());
  for (const auto& t : ts) {
    check_same_shape(ts[0], t, "add_n");
    const auto& v = t.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    parents.push_back(t.ptr());
  }
  return Tensor(make_result(ts[0].shape(), std::move(out), std::move(parents),
                            [](Node& self) {
                              const auto& dc = self.grad;
                              for (auto& p : self.parents) {
                                if (double* dp = grad_of(p))
                                  for (std::size_t i = 0; i < dc.size(); ++i)
                                    dp[i] += dc[i];
                              }
                            }));
}

Tensor affine(const Tensor& x, double scale, double shift) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * xv[i] + shift;
  return Tensor(make_result(x.shape(), std::move(out), {x.ptr()},
                            [scale](Node& self) {
                              if (double* dx = grad_of(self.parents[0]))
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  dx[i] += scale * self.grad[i];
                            }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor(make_result(
      a.shape(), std::move(out),
      {a.ptr(), b.ptr()},
      [](Node& self) {
        const auto& dc = self.grad;
        const auto& av = self.parents[0]->values;
        const auto& bv = self.parents[1]->values;
        if (double* da = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * bv[i];
        if (double* db = grad_of(self.parents[1]))
          for (std::size_t i = 0; i < dc.size(); ++i) db[i] += dc[i] * av[i];
      }));
}

Tensor divide(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "divide");
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  return Tensor(make_result(
      a.shape(), std::move(out),
      {a.ptr(), b.ptr()},
      [](Node& self) {
        const auto& dc = self.grad;
        const auto& av = self.parents[0]->values;
        const auto& bv = self.parents[1]->values;
        if (double* da = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] / bv[i];
        if (double* db = grad_of(self.parents[1]))
          for (std::size_t i = 0; i < dc.size(); ++i)
            db[i] -= dc[i] * av[i] / (bv[i] * bv[i]);
      }));
}

Tensor clamp_min(const Tensor& x, double floor) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(xv[i], floor);
  return Tensor(make_result(x.shape(), std::move(out), {x.ptr()},
                            [floor](Node& self) {
                              if (double* dx = grad_of(self.parents[0])) {
                                const auto& xv = self.parents[0]->values;
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  if (xv[i] > floor) dx[i] += self.grad[i];
                              }
                            }));
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
  return Tensor(make_result(x.shape(), std::move(out), {x.ptr()},
                            [](Node& self) {
                              if (double* dx = grad_of(self.parents[0]))
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  dx[i] += self.grad[i] * self.values[i];
                            }));
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (xv[i] <= 0.0) throw Error("log: nonpositive input");
    out[i] = std::log(xv[i]);
  }
  return Tensor(make_result(x.shape(), std::move(out), {x.ptr()},
                            [](Node& self) {
                              if (double* dx = grad_of(self.parents[0])) {
                                const auto& xv = self.parents[0]->values;
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  dx[i] += self.grad[i] / xv[i];
                              }
                            }));
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double cdf = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
    out[i] = xv[i] * cdf;
  }
  return Tensor(make_result(
      x.shape(), std::move(out), {x.ptr()}, [](Node& self) {
        if (double* dx = grad_of(self.parents[0])) {
          const auto& xv = self.parents[0]->values;
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            double v = xv[i];
            double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            dx[i] += self.grad[i] * (cdf + v * pdf);
          }
        }
      }));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.ndim() != 2) throw Error("layer_norm: input must be 2-D");
  int m = x.dim(0), n = x.dim(1);
  if (gain.ndim() != 1 || gain.dim(0) != n || bias.ndim() != 1 || bias.dim(0) != n)
    throw Error("layer_norm: gain/bias length must equal row width");

  std::vector<double> out(x.size());
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (int i = 0; i < m; ++i) {
    const double* row = xv.data() + static_cast<std::size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    double inv = 1.0 / std::sqrt(var + eps);
    double* orow = out.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) orow[j] = (row[j] - mu) * inv * gv[j] + bv[j];
  }
  return Tensor(make_result(
      x.shape(), std::move(out),
      {x.ptr(), gain.ptr(),
       bias.ptr()},
      [m, n, eps](Node& self) {
        const auto& dc = self.grad;
        const auto& xv = self.parents[0]->values;
        const auto& gv = self.parents[1]->values;
        double* dx = grad_of(self.parents[0]);
        double* dg = grad_of(self.parents[1]);
        double* db = grad_of(self.parents[2]);
        for (int i = 0; i < m; ++i) {
          const double* row = xv.data() + static_cast<std::size_t>(i) * n;
          const double* drow = dc.data() + static_cast<std::size_t>(i) * n;
          double mu = 0.0;
          for (int j = 0; j < n; ++j) mu += row[j];
          mu /= n;
          double var = 0.0;
          for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
          var /= n;
          double inv = 1.0 / std::sqrt(var + eps);
          if (dg || db) {
            for (int j = 0; j < n; ++j) {
              double xhat = (row[j] - mu) * inv;
              if (dg) dg[j] += drow[j] * xhat;
              if (db) db[j] += drow[j];
            }
          }
          if (dx) {
            // dL/dx via the standard layernorm backward
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int j = 0; j < n; ++j) {
              double dy = drow[j] * gv[j];
              double xhat = (row[j] - mu) * inv;
              sum_dy += dy;
              sum_dy_xhat += dy * xhat;
            }
            double* dxrow = dx + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
              double dy = drow[j] * gv[j];
              double xhat = (row[j] - mu) * inv;
              dxrow[j] += inv * (dy - sum_dy / n - xhat * sum_dy_xhat / n);
            }
          }
        }
      }));
}

Tensor softmax_rows(const Tensor& x) {
  int m = x.rows(), n = x.cols();
  std::vector<double> out = x.values();
  for (int i = 0; i < m; ++i)
    kernels::softmax_inplace(out.data() + static_cast<std::size_t>(i) * n, n);
  return Tensor(make_result(
      x.shape(), std::move(out), {x.ptr()}, [m, n](Node& self) {
        if (double* dx = grad_of(self.parents[0])) {
          const auto& y = self.values;
          const auto& dy = self.grad;
          for (int i = 0; i < m; ++i) {
            const double* yr = y.data() + static_cast<std::size_t>(i) * n;
            const double* dyr = dy.data() + static_cast<std::size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += yr[j] * dyr[j];
            double* dxr = dx + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
          }
        }
      }));
}

namespace {

// Shared forward for the fused cross-entropy family. Writes per-row CE into
// `ce`; keeps softcopy of probabilities out of the graph (recomputed in
// backward from stored logits).
double row_cross_entropy(const double* logits, int n, int target) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double lse = 0.0;
  for (int i = 0; i < n; ++i) lse += std::exp(logits[i] - mx);
  lse = mx + std::log(lse);
  return lse - logits[target];
}

}  // namespace

Tensor softmax_cross_entropy(const Tensor& logits, int target) {
  if (logits.ndim() != 1) throw Error("softmax_cross_entropy: logits must be 1-D");
  int n = logits.dim(0);
  if (target < 0 || target >= n)
    throw Error("softmax_cross_entropy: target out of range");
  double ce = row_cross_entropy(logits.values().data(), n, target);
  return Tensor(make_result(
      {}, {ce}, {logits.ptr()}, [n, target](Node& self) {
        if (double* dx = grad_of(self.parents[0])) {
          std::vector<double> p = self.parents[0]->values;
          kernels::softmax_inplace(p.data(), n);
          double g = self.grad[0];
          for (int i = 0; i < n; ++i) dx[i] += g * p[i];
          dx[target] -= g;
        }
      }));
}

Tensor softmax_cross_entropy_rows(const Tensor& logits,
                                  const std::vector<int>& targets) {
  if (logits.ndim() != 2) throw Error("softmax_cross_entropy_rows: logits must be 2-D");
  int m = logits.dim(0), n = logits.dim(1);
  if (static_cast<int>(targets.size()) != m)
    throw Error("softmax_cross_entropy_rows: target count mismatch");
  std::vector<double> out(m);
  for (int i = 0; i < m; ++i) {
    if (targets[i] < 0 || targets[i] >= n)
      throw Error("softmax_cross_entropy_rows: target out of range");
    out[i] = row_cross_entropy(logits.values().data() + static_cast<std::size_t>(i) * n,
                               n, targets[i]);
  }
  return Tensor(make_result(
      {m}, std::move(out), {logits.ptr()},
      [m, n, targets](Node& self) {
        if (double* dx = grad_of(self.parents[0])) {
          std::vector<double> p(n);
          for (int i = 0; i < m; ++i) {
            const double* lr =
                self.parents[0]->values.data() + static_cast<std::size_t>(i) * n;
            std::copy(lr, lr + n, p.begin());
            kernels::softmax_inplace(p.data(), n);
            double g = self.grad[i];
            double* dxr = dx + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) dxr[j] += g * p[j];
            dxr[targets[i]] -= g;
          }
        }
      }));
}

Tensor softmax_cross_entropy_soft(const Tensor& logits,
                                  const std::vector<double>& target_dist) {
  if (logits.ndim() != 1) throw Error("softmax_cross_entropy_soft: logits must be 1-D");
  int n = logits.dim(0);
  if (static_cast<int>(target_dist.size()) != n)
    throw Error("softmax_cross_entropy_soft: target length mismatch");
  const auto& lv = logits.values();
  double mx = lv[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, lv[i]);
  double lse = 0.0;
  for (int i = 0; i < n; ++i) lse += std::exp(lv[i] - mx);
  lse = mx + std::log(lse);
  double ce = 0.0;
  for (int i = 0; i < n; ++i) ce += target_dist[i] * (lse - lv[i]);
  return Tensor(make_result(
      {}, {ce}, {logits.ptr()}, [n, target_dist](Node& self) {
        if (double* dx = grad_of(self.parents[0])) {
          std::vector<double> p = self.parents[0]->values;
          kernels::softmax_inplace(p.data(), n);
          double g = self.grad[0];
          for (int i = 0; i < n; ++i) dx[i] += g * (p[i] - target_dist[i]);
        }
      }));
}

Tensor gather_rows(const Tensor& m, const std::vector<int>& indices) {
  if (m.ndim() != 2) throw Error("gather_rows: input must be 2-D");
  int rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(indices.size() * static_cast<std::size_t>(cols));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    int r = indices[i];
    if (r < 0 || r >= rows) throw Error("gather_rows: index out of range");
    std::copy_n(m.values().data() + static_cast<std::size_t>(r) * cols, cols,
                out.data() + i * cols);
  }
  return Tensor(make_result(
      {static_cast<int>(indices.size()), cols}, std::move(out),
      {m.ptr()}, [cols, indices](Node& self) {
        if (double* dm = grad_of(self.parents[0])) {
          for (std::size_t i = 0; i < indices.size(); ++i) {
            const double* g = self.grad.data() + i * cols;
            double* dst = dm + static_cast<std::size_t>(indices[i]) * cols;
            for (int j = 0; j < cols; ++j) dst[j] += g[j];
          }
        }
      }));
}

Tensor gather(const Tensor& v, const std::vector<int>& indices) {
  if (v.ndim() != 1) throw Error("gather: input must be 1-D");
  int n = v.dim(0);
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n) throw Error("gather: index out of range");
    out[i] = v.values()[static_cast<std::size_t>(indices[i])];
  }
  return Tensor(make_result(
      {static_cast<int>(indices.size())}, std::move(out),
      {v.ptr()}, [indices](Node& self) {
        if (double* dv = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < indices.size(); ++i)
            dv[static_cast<std::size_t>(indices[i])] += self.grad[i];
      }));
}

Tensor gather_entries(const Tensor& m, const std::vector<int>& cols) {
  if (m.ndim() != 2) throw Error("gather_entries: input must be 2-D");
  int rows = m.dim(0), width = m.dim(1);
  if (static_cast<int>(cols.size()) != rows)
    throw Error("gather_entries: one column index per row required");
  std::vector<double> out(cols.size());
  for (int i = 0; i < rows; ++i) {
    if (cols[i] < 0 || cols[i] >= width)
      throw Error("gather_entries: index out of range");
    out[i] = m.values()[static_cast<std::size_t>(i) * width + cols[i]];
  }
  return Tensor(make_result(
      {rows}, std::move(out), {m.ptr()},
      [width, cols](Node& self) {
        if (double* dm = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < cols.size(); ++i)
            dm[i * width + cols[i]] += self.grad[i];
      }));
}

Tensor slice_cols(const Tensor& m, int start, int len) {
  if (m.ndim() != 2) throw Error("slice_cols: input must be 2-D");
  int rows = m.dim(0), width = m.dim(1);
  if (start < 0 || len < 0 || start + len > width)
    throw Error("slice_cols: out of range");
  std::vector<double> out(static_cast<std::size_t>(rows) * len);
  for (int i = 0; i < rows; ++i)
    std::copy_n(m.values().data() + static_cast<std::size_t>(i) * width + start, len,
                out.data() + static_cast<std::size_t>(i) * len);
  return Tensor(make_result(
      {rows, len}, std::move(out), {m.ptr()},
      [rows, width, start, len](Node& self) {
        if (double* dm = grad_of(self.parents[0]))
          for (int i = 0; i < rows; ++i) {
            const double* g = self.grad.data() + static_cast<std::size_t>(i) * len;
            double* dst = dm + static_cast<std::size_t>(i) * width + start;
            for (int j = 0; j < len; ++j) dst[j] += g[j];
          }
      }));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw Error("concat_rows: column widths differ");
  int cols = a.dim(1);
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  std::size_t split = a.size();
  return Tensor(make_result(
      {a.dim(0) + b.dim(0), cols}, std::move(out),
      {a.ptr(), b.ptr()},
      [split](Node& self) {
        if (double* da = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < split; ++i) da[i] += self.grad[i];
        if (double* db = grad_of(self.parents[1]))
          for (std::size_t i = split; i < self.grad.size(); ++i)
            db[i - split] += self.grad[i];
      }));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("concat_cols: empty input");
  int rows = parts[0].dim(0);
  int total = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<int> widths;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != rows) throw Error("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
    parents.push_back(p.ptr());
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * total);
  int off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    int w = widths[pi];
    for (int i = 0; i < rows; ++i)
      std::copy_n(parts[pi].values().data() + static_cast<std::size_t>(i) * w, w,
                  out.data() + static_cast<std::size_t>(i) * total + off);
    off += w;
  }
  return Tensor(make_result(
      {rows, total}, std::move(out), std::move(parents),
      [rows, total, widths](Node& self) {
        int off = 0;
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
          int w = widths[pi];
          if (double* dp = grad_of(self.parents[pi]))
            for (int i = 0; i < rows; ++i) {
              const double* g =
                  self.grad.data() + static_cast<std::size_t>(i) * total + off;
              double* dst = dp + static_cast<std::size_t>(i) * w;
              for (int j = 0; j < w; ++j) dst[j] += g[j];
            }
          off += w;
        }
      }));
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (detail::shape_count(shape) != x.size())
    throw Error("reshape: element count mismatch");
  return Tensor(make_result(std::move(shape), x.values(),
                            {x.ptr()}, [](Node& self) {
                              if (double* dx = grad_of(self.parents[0]))
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  dx[i] += self.grad[i];
                            }));
}

Tensor dot(const Tensor& u, const Tensor& v) {
  if (u.ndim() != 1 || v.ndim() != 1 || u.dim(0) != v.dim(0))
    throw Error("dot: operands must be equal-length vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u.values()[i] * v.values()[i];
  return Tensor(make_result(
      {}, {s}, {u.ptr(), v.ptr()},
      [](Node& self) {
        double g = self.grad[0];
        const auto& uv = self.parents[0]->values;
        const auto& vv = self.parents[1]->values;
        if (double* du = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < uv.size(); ++i) du[i] += g * vv[i];
        if (double* dv = grad_of(self.parents[1]))
          for (std::size_t i = 0; i < vv.size(); ++i) dv[i] += g * uv[i];
      }));
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  if (u.ndim() != 1 || v.ndim() != 1 || u.dim(0) != v.dim(0))
    throw Error("cosine_similarity: operands must be equal-length vectors");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u.values()[i] * u.values()[i];
    vv += v.values()[i] * v.values()[i];
    uv += u.values()[i] * v.values()[i];
  }
  if (uu == 0.0 || vv == 0.0)
    throw Error("cosine_similarity: zero-norm input");
  double nu = std::sqrt(uu), nv = std::sqrt(vv);
  double c = uv / (nu * nv);
  return Tensor(make_result(
      {}, {c}, {u.ptr(), v.ptr()},
      [nu, nv, c](Node& self) {
        double g = self.grad[0];
        const auto& uvals = self.parents[0]->values;
        const auto& vvals = self.parents[1]->values;
        if (double* du = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < uvals.size(); ++i)
            du[i] += g * (vvals[i] / (nu * nv) - c * uvals[i] / (nu * nu));
        if (double* dv = grad_of(self.parents[1]))
          for (std::size_t i = 0; i < vvals.size(); ++i)
            dv[i] += g * (uvals[i] / (nu * nv) - c * vvals[i] / (nv * nv));
      }));
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tensor(make_result({}, {s}, {x.ptr()}, [](Node& self) {
    if (double* dx = grad_of(self.parents[0]))
      for (std::size_t i = 0; i < self.parents[0]->size(); ++i)
        dx[i] += self.grad[0];
  }));
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw Error("mean: empty tensor");
  double s = 0.0;
  for (double v : x.values()) s += v;
  double n = static_cast<double>(x.size());
  return Tensor(make_result({}, {s / n}, {x.ptr()},
                            [n](Node& self) {
                              if (double* dx = grad_of(self.parents[0]))
                                for (std::size_t i = 0; i < self.parents[0]->size(); ++i)
                                  dx[i] += self.grad[0] / n;
                            }));
}

}  // namespace dawgen
