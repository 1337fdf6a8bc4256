#include "dawgen/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dawgen/error.hpp"
#include "dawgen/rng.hpp"

namespace dawgen {

namespace {

Tensor init_normal(std::vector<int> shape, double stddev, Rng& rng) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> vals(n);
  for (auto& v : vals) v = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(vals), true);
}

Tensor causal_mask(int t) {
  std::vector<double> m(static_cast<std::size_t>(t) * t, 0.0);
  for (int i = 0; i < t; ++i)
    for (int j = i + 1; j < t; ++j)
      m[static_cast<std::size_t>(i) * t + j] = -1e30;
  return Tensor::from({t, t}, std::move(m));
}

}  // namespace

Model::Model(const ModelDims& dims, std::uint64_t seed) : dims_(dims) {
  if (dims.vocab_size < 1 || dims.d_model < 1 || dims.n_heads < 1 ||
      dims.n_layers < 1 || dims.d_ff < 1 || dims.max_seq < 1)
    throw Error("model: all dimensions must be positive");
  if (dims.d_model % dims.n_heads != 0)
    throw Error("model: d_model must divide evenly across heads");
  Rng rng(derive_seed(seed, "model-init"));
  const int d = dims.d_model, ff = dims.d_ff;
  tok_emb_ = init_normal({dims.vocab_size, d}, 0.02, rng);
  pos_emb_ = init_normal({dims.max_seq, d}, 0.02, rng);
  layers_.resize(dims.n_layers);
  for (auto& l : layers_) {
    l.ln1_g = Tensor::full({d}, 1.0, true);
    l.ln1_b = Tensor::zeros({d}, true);
    l.wq = init_normal({d, d}, 0.02, rng);
    l.wk = init_normal({d, d}, 0.02, rng);
    l.wv = init_normal({d, d}, 0.02, rng);
    l.wo = init_normal({d, d}, 0.02 / std::sqrt(2.0 * dims.n_layers), rng);
    l.ln2_g = Tensor::full({d}, 1.0, true);
    l.ln2_b = Tensor::zeros({d}, true);
    l.w1 = init_normal({d, ff}, 0.02, rng);
    l.b1 = Tensor::zeros({ff}, true);
    l.w2 = init_normal({ff, d}, 0.02 / std::sqrt(2.0 * dims.n_layers), rng);
    l.b2 = Tensor::zeros({d}, true);
  }
  lnf_g_ = Tensor::full({d}, 1.0, true);
  lnf_b_ = Tensor::zeros({d}, true);
  set_trainable(false);  // backbones start frozen; pretraining unfreezes
}

Tensor Model::embed(const std::vector<int>& ids, int pos_offset) const {
  if (pos_offset < 0 ||
      pos_offset + static_cast<int>(ids.size()) > dims_.max_seq)
    throw Error("embed: sequence does not fit the position table");
  for (int id : ids)
    if (id < 0 || id >= dims_.vocab_size)
      throw Error("embed: token id out of range");
  std::vector<int> positions(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t)
    positions[t] = pos_offset + static_cast<int>(t);
  return add(gather_rows(tok_emb_, ids), gather_rows(pos_emb_, positions));
}

Tensor Model::forward_hidden(const Tensor& embedded) const {
  if (embedded.ndim() != 2 || embedded.cols() != dims_.d_model)
    throw Error("forward: expected a seq x d_model input");
  const int t = embedded.rows();
  const int dh = dims_.d_model / dims_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor mask = causal_mask(t);

  Tensor h = embedded;
  for (const Layer& l : layers_) {
    Tensor u = layer_norm(h, l.ln1_g, l.ln1_b);
    Tensor q = matmul(u, l.wq);
    Tensor k = matmul(u, l.wk);
    Tensor v = matmul(u, l.wv);
    std::vector<Tensor> heads;
    heads.reserve(dims_.n_heads);
    for (int hd = 0; hd < dims_.n_heads; ++hd) {
      Tensor qh = slice_cols(q, hd * dh, dh);
      Tensor kh = slice_cols(k, hd * dh, dh);
      Tensor vh = slice_cols(v, hd * dh, dh);
      Tensor scores = add(affine(matmul(qh, kh, false, true), scale, 0.0), mask);
      heads.push_back(matmul(softmax_rows(scores), vh));
    }
    h = add(h, matmul(concat_cols(heads), l.wo));
    Tensor m = layer_norm(h, l.ln2_g, l.ln2_b);
    Tensor f = add(matmul(gelu(add(matmul(m, l.w1), l.b1)), l.w2), l.b2);
    h = add(h, f);
  }
  return layer_norm(h, lnf_g_, lnf_b_);
}

Tensor Model::unembed(const Tensor& hidden) const {
  return matmul(hidden, tok_emb_, false, true);
}

Tensor Model::forward_logits(const Tensor& embedded) const {
  return unembed(forward_hidden(embedded));
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_emb", tok_emb_);
  out.emplace_back("pos_emb", pos_emb_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    std::string p = "layer" + std::to_string(i) + ".";
    out.emplace_back(p + "ln1_g", l.ln1_g);
    out.emplace_back(p + "ln1_b", l.ln1_b);
    out.emplace_back(p + "wq", l.wq);
    out.emplace_back(p + "wk", l.wk);
    out.emplace_back(p + "wv", l.wv);
    out.emplace_back(p + "wo", l.wo);
    out.emplace_back(p + "ln2_g", l.ln2_g);
    out.emplace_back(p + "ln2_b", l.ln2_b);
    out.emplace_back(p + "w1", l.w1);
    out.emplace_back(p + "b1", l.b1);
    out.emplace_back(p + "w2", l.w2);
    out.emplace_back(p + "b2", l.b2);
  }
  out.emplace_back("final_ln_g", lnf_g_);
  out.emplace_back("final_ln_b", lnf_b_);
  return out;
}

void Model::set_trainable(bool trainable) {
  for (auto& [name, t] : named_parameters()) {
    Tensor tt = t;
    tt.set_requires_grad(trainable);
  }
}

std::uint64_t Model::digest() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  const int dims[6] = {dims_.vocab_size, dims_.d_model, dims_.n_heads,
                       dims_.n_layers,   dims_.d_ff,    dims_.max_seq};
  mix(dims, sizeof(dims));
  for (const auto& [name, t] : named_parameters()) {
    mix(name.data(), name.size());
    mix(t.values().data(), t.values().size() * sizeof(double));
  }
  return h;
}

Tensor embed_with_prompt(const Model& m, const Tensor& prompt,
                         const std::vector<int>& ids) {
  if (!prompt.defined()) return m.embed(ids, 0);
  if (prompt.ndim() != 2 || prompt.cols() != m.dims().d_model)
    throw Error("embed_with_prompt: prompt must be n x d_model");
  return concat_rows(prompt, m.embed(ids, prompt.rows()));
}

LmOutput forward_lm(const Model& m, const Tensor& prompt,
                    const std::vector<int>& ids) {
  Tensor hidden = m.forward_hidden(embed_with_prompt(m, prompt, ids));
  return {m.unembed(hidden), hidden};
}

InferenceRun::InferenceRun(const Model& m, const Tensor& prompt) : m_(&m) {
  const auto& d = m.dims_;
  kcache_.resize(d.n_layers);
  vcache_.resize(d.n_layers);
  for (auto& c : kcache_) c.reserve(static_cast<std::size_t>(d.max_seq) * d.d_model);
  for (auto& c : vcache_) c.reserve(static_cast<std::size_t>(d.max_seq) * d.d_model);
  last_hidden_.resize(d.d_model);
  if (prompt.defined()) {
    if (prompt.ndim() != 2 || prompt.cols() != d.d_model)
      throw Error("inference: prompt must be n x d_model");
    for (int r = 0; r < prompt.rows(); ++r)
      feed_row(prompt.values().data() + static_cast<std::size_t>(r) * d.d_model);
  }
}

void InferenceRun::feed(int token_id) {
  const auto& dm = m_->dims_;
  if (token_id < 0 || token_id >= dm.vocab_size)
    throw Error("inference: token id out of range");
  const int d = dm.d_model;
  std::vector<double> x(d);
  const double* te = m_->tok_emb_.values().data() + static_cast<std::size_t>(token_id) * d;
  const double* pe = m_->pos_emb_.values().data() + static_cast<std::size_t>(pos_) * d;
  for (int j = 0; j < d; ++j) x[j] = te[j] + pe[j];
  feed_row(x.data());
}

void InferenceRun::feed_all(const std::vector<int>& ids) {
  for (int id : ids) feed(id);
}

namespace {

// Same reduction order as the layer_norm graph op.
void ln_row(const double* x, const std::vector<double>& g,
            const std::vector<double>& b, double* out, int n, double eps = 1e-5) {
  double mu = 0.0;
  for (int j = 0; j < n; ++j) mu += x[j];
  mu /= n;
  double var = 0.0;
  for (int j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
  var /= n;
  double inv = 1.0 / std::sqrt(var + eps);
  for (int j = 0; j < n; ++j) out[j] = (x[j] - mu) * inv * g[j] + b[j];
}

}  // namespace

void InferenceRun::feed_row(const double* xin) {
  const auto& dm = m_->dims_;
  if (pos_ >= dm.max_seq) throw Error("inference: position table exhausted");
  const int d = dm.d_model, ff = dm.d_ff;
  const int nh = dm.n_heads, dh = d / nh;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int t = pos_ + 1;  // cache length after this row

  std::vector<double> x(xin, xin + d);
  std::vector<double> u(d), q(d), ctx(d), tmp(std::max(d, ff));
  for (int li = 0; li < dm.n_layers; ++li) {
    const auto& l = m_->layers_[static_cast<std::size_t>(li)];
    ln_row(x.data(), l.ln1_g.values(), l.ln1_b.values(), u.data(), d);
    kernels::matmul_nn(u.data(), l.wq.values().data(), q.data(), 1, d, d);
    auto& kc = kcache_[static_cast<std::size_t>(li)];
    auto& vc = vcache_[static_cast<std::size_t>(li)];
    kc.resize(static_cast<std::size_t>(t) * d);
    vc.resize(static_cast<std::size_t>(t) * d);
    kernels::matmul_nn(u.data(), l.wk.values().data(),
                       kc.data() + static_cast<std::size_t>(pos_) * d, 1, d, d);
    kernels::matmul_nn(u.data(), l.wv.values().data(),
                       vc.data() + static_cast<std::size_t>(pos_) * d, 1, d, d);
    std::vector<double> attn(static_cast<std::size_t>(t));
    for (int hd = 0; hd < nh; ++hd) {
      const double* qh = q.data() + hd * dh;
      for (int s = 0; s < t; ++s) {
        const double* kh = kc.data() + static_cast<std::size_t>(s) * d + hd * dh;
        double acc = 0.0;
        for (int j = 0; j < dh; ++j) acc += qh[j] * kh[j];
        attn[static_cast<std::size_t>(s)] = acc * scale;
      }
      kernels::softmax_inplace(attn.data(), t);
      double* ch = ctx.data() + hd * dh;
      std::fill(ch, ch + dh, 0.0);
      for (int s = 0; s < t; ++s) {
        const double* vh = vc.data() + static_cast<std::size_t>(s) * d + hd * dh;
        double a = attn[static_cast<std::size_t>(s)];
        for (int j = 0; j < dh; ++j) ch[j] += a * vh[j];
      }
    }
    kernels::matmul_nn(ctx.data(), l.wo.values().data(), tmp.data(), 1, d, d);
    for (int j = 0; j < d; ++j) x[j] += tmp[j];

    ln_row(x.data(), l.ln2_g.values(), l.ln2_b.values(), u.data(), d);
    kernels::matmul_nn(u.data(), l.w1.values().data(), tmp.data(), 1, d, ff);
    const auto& b1 = l.b1.values();
    for (int j = 0; j < ff; ++j) {
      double z = tmp[j] + b1[j];
      tmp[j] = z * 0.5 * (1.0 + std::erf(z * 0.7071067811865476));
    }
    std::vector<double> f(d);
    kernels::matmul_nn(tmp.data(), l.w2.values().data(), f.data(), 1, ff, d);
    const auto& b2 = l.b2.values();
    for (int j = 0; j < d; ++j) x[j] += f[j] + b2[j];
  }
  ln_row(x.data(), m_->lnf_g_.values(), m_->lnf_b_.values(), last_hidden_.data(), d);
  ++pos_;
}

std::vector<double> InferenceRun::logits() const {
  if (pos_ == 0) throw Error("inference: nothing fed yet");
  const auto& dm = m_->dims_;
  std::vector<double> out(static_cast<std::size_t>(dm.vocab_size));
  kernels::matmul_nt(last_hidden_.data(), m_->tok_emb_.values().data(), out.data(),
                     1, dm.d_model, dm.vocab_size);
  return out;
}

std::vector<double> class_log_probs(const Model& m, const Tensor& prompt,
                                    const std::vector<int>& ids,
                                    const std::vector<int>& verbalizer_ids) {
  if (ids.size() < 2) throw Error("class_log_probs: render too short");
  InferenceRun run(m, prompt);
  run.feed_all(std::vector<int>(ids.begin(), ids.end() - 1));
  std::vector<double> lr = run.logits();
  const int v = static_cast<int>(lr.size());
  double mx = *std::max_element(lr.begin(), lr.end());
  double lse = 0.0;
  for (double z : lr) lse += std::exp(z - mx);
  lse = mx + std::log(lse);
  std::vector<double> out;
  out.reserve(verbalizer_ids.size());
  for (int id : verbalizer_ids) {
    if (id < 0 || id >= v) throw Error("class_log_probs: verbalizer id out of range");
    out.push_back(lr[static_cast<std::size_t>(id)] - lse);
  }
  return out;
}

std::vector<double> score_labels(const Model& m, const Tensor& prompt,
                                 const std::vector<int>& ids,
                                 const std::vector<int>& verbalizer_ids) {
  auto lp = class_log_probs(m, prompt, ids, verbalizer_ids);
  double mx = *std::max_element(lp.begin(), lp.end());
  double sum = 0.0;
  for (double& z : lp) {
    z = std::exp(z - mx);
    sum += z;
  }
  for (double& z : lp) z /= sum;
  return lp;
}

int predict_class(const Model& m, const Tensor& prompt,
                  const std::vector<int>& ids,
                  const std::vector<int>& verbalizer_ids) {
  auto lp = class_log_probs(m, prompt, ids, verbalizer_ids);
  return static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
}

}  // namespace dawgen
