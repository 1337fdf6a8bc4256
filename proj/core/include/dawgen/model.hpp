#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dawgen/tensor.hpp"

namespace dawgen {

struct ModelDims {
  int vocab_size = 0;
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 256;
  int max_seq = 128;

  bool operator==(const ModelDims&) const = default;
};

/// Decoder-only transformer over dense f64 tensors. Pre-LN blocks, learned
/// positional embeddings, tied input/output embedding, no attention biases.
/// Forward passes take already-embedded sequences so that soft prompt rows
/// can be spliced in front of token embeddings.
class Model {
 public:
  Model() = default;
  Model(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }

  /// Token + positional embeddings; row t gets position pos_offset + t.
  Tensor embed(const std::vector<int>& ids, int pos_offset = 0) const;

  /// Hidden states after the final layer norm; input rows = sequence.
  Tensor forward_hidden(const Tensor& embedded) const;

  /// Tied unembedding of hidden states.
  Tensor unembed(const Tensor& hidden) const;

  Tensor forward_logits(const Tensor& embedded) const;

  Tensor& token_embedding() { return tok_emb_; }
  const Tensor& token_embedding() const { return tok_emb_; }

  /// All parameter leaves in a fixed documented order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  /// Freezes or unfreezes every backbone parameter.
  void set_trainable(bool trainable);

  /// FNV-1a over dims and raw parameter bytes; detects any drift.
  std::uint64_t digest() const;

 private:
  struct Layer {
    Tensor ln1_g, ln1_b, wq, wk, wv, wo;
    Tensor ln2_g, ln2_b, w1, b1, w2, b2;
  };

  ModelDims dims_;
  Tensor tok_emb_, pos_emb_;
  std::vector<Layer> layers_;
  Tensor lnf_g_, lnf_b_;

  friend class InferenceRun;
};

/// Graph-free incremental forward pass with per-layer key/value caches.
/// Used for decoding and bulk scoring, where no gradients are needed.
/// Applies the same kernels and reduction orders as the graph path, so
/// the two agree to double rounding.
class InferenceRun {
 public:
  /// `prompt` rows (may be undefined) occupy the leading positions as-is;
  /// fed tokens continue from the following position.
  InferenceRun(const Model& m, const Tensor& prompt);

  void feed(int token_id);
  void feed_all(const std::vector<int>& ids);

  /// Unembedded logits at the last fed position.
  std::vector<double> logits() const;
  const std::vector<double>& last_hidden() const { return last_hidden_; }
  int position() const { return pos_; }

 private:
  void feed_row(const double* x);

  const Model* m_;
  std::vector<std::vector<double>> kcache_, vcache_;  // per layer, pos * d
  std::vector<double> last_hidden_;
  int pos_ = 0;
};

/// Renormalized distribution over the task's classes at the answer slot.
std::vector<double> score_labels(const Model& m, const Tensor& prompt,
                                 const std::vector<int>& ids,
                                 const std::vector<int>& verbalizer_ids);

/// Embeds a classification or generation context, splicing `prompt`
/// (n x d embedding rows, may be undefined) before the token rows.
/// Token positions start right after the prompt block.
Tensor embed_with_prompt(const Model& m, const Tensor& prompt,
                         const std::vector<int>& ids);

struct LmOutput {
  Tensor logits;  // (n + T) x V
  Tensor hidden;  // (n + T) x d
};

/// One graph-building forward pass over [prompt; tokens].
LmOutput forward_lm(const Model& m, const Tensor& prompt,
                    const std::vector<int>& ids);

/// Full-vocabulary log-probabilities of each verbalizer at the answer slot
/// of a classification render (the render ends with the mask token; the
/// logits one position earlier predict what fills it).
std::vector<double> class_log_probs(const Model& m, const Tensor& prompt,
                                    const std::vector<int>& ids,
                                    const std::vector<int>& verbalizer_ids);

int predict_class(const Model& m, const Tensor& prompt,
                  const std::vector<int>& ids,
                  const std::vector<int>& verbalizer_ids);

}  // namespace dawgen
