#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace dawgen {

class Tensor;

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::uint64_t id = 0;  // monotone construction order within a process
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grad buffers.
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return values.size(); }
  int rows() const;
  int cols() const;
};

}  // namespace detail

/// Dense 64-bit float tensor participating in a define-by-run reverse-mode
/// graph. The handle is a cheap shared reference; ops build fresh nodes, so
/// the graph is rebuilt on every forward pass. Backward traverses nodes in
/// exact reverse construction order, which makes repeated backward calls on
/// one graph bit-identical.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return node_->values.size(); }
  int rows() const { return node_->rows(); }
  int cols() const { return node_->cols(); }

  const std::vector<double>& values() const { return node_->values; }
  /// Scalar payload; throws unless the tensor holds exactly one element.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Freeze / unfreeze a leaf. Takes effect on the next graph construction.
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void clear_grad() { node_->grad.clear(); }

  /// In-place value update for leaf tensors (parameters between steps).
  /// Must not be called on a tensor produced by an op.
  void set_values(const std::vector<double>& values);
  void add_scaled_inplace(const std::vector<double>& delta, double scale);

  /// Stable identity for gradient-map keys and digests.
  const void* node_id() const { return node_.get(); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Runs reverse-mode accumulation from a scalar loss. Populates the grad
/// buffer of every requires_grad tensor reachable through the graph.
/// Throws if the loss is not scalar or depends on no trainable tensor.
void backward(const Tensor& loss);

// ---- operator set ----
// The set below is exactly what the model forward pass and the tuning
// losses need; nothing more is provided.

/// C = op(A) * op(B); trans flags select the transposed view of an operand.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
              bool trans_b = false);

/// Elementwise a + b. When b is a length-n vector and a is m x n, b is
/// broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);

/// Sum of any number of same-shaped tensors.
Tensor add_n(const std::vector<Tensor>& ts);

/// scale * x + shift, elementwise.
Tensor affine(const Tensor& x, double scale, double shift);

/// Elementwise product / quotient.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

/// max(x, floor) elementwise; hinge is clamp_min(x, 0).
Tensor clamp_min(const Tensor& x, double floor);

/// Elementwise exp / natural log.
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor gelu(const Tensor& x);

/// Row-wise layer normalization with learned gain and bias (length = cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Row-wise softmax with max-subtraction.
Tensor softmax_rows(const Tensor& x);

/// -log softmax(logits)[target] for a single logit vector.
Tensor softmax_cross_entropy(const Tensor& logits, int target);

/// Per-row cross-entropy; logits is m x v, targets has m entries, output is
/// a length-m vector.
Tensor softmax_cross_entropy_rows(const Tensor& logits,
                                  const std::vector<int>& targets);

/// Cross-entropy of a logit vector against a full target distribution.
Tensor softmax_cross_entropy_soft(const Tensor& logits,
                                  const std::vector<double>& target_dist);

/// Row gather; doubles as embedding lookup and as row slicing. Duplicate
/// indices accumulate gradient.
Tensor gather_rows(const Tensor& m, const std::vector<int>& indices);

/// Vector gather: out[i] = v[indices[i]].
Tensor gather(const Tensor& v, const std::vector<int>& indices);

/// One entry per row: out[i] = m[i, cols[i]].
Tensor gather_entries(const Tensor& m, const std::vector<int>& cols);

Tensor slice_cols(const Tensor& m, int start, int len);

/// Concatenation along the sequence (row) axis.
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Row-major view with a new shape; element count must match.
Tensor reshape(const Tensor& x, std::vector<int> shape);

Tensor dot(const Tensor& u, const Tensor& v);

/// Cosine similarity of two equal-length vectors; throws on a zero-norm
/// input (degenerate direction).
Tensor cosine_similarity(const Tensor& u, const Tensor& v);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- raw kernels (also used by non-graph code paths) ----
namespace kernels {
// C = A*B, A is m x k, B is k x n, C is m x n (row-major, overwritten).
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);
// C = A*B^T, A is m x k, B is n x k.
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
// C = A^T*B, A is k x m, B is k x n.
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
void softmax_inplace(double* x, int n);
}  // namespace kernels

}  // namespace dawgen
