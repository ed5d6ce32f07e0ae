#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asrep/numerics.hpp"
#include "asrep/rng.hpp"

namespace asrep {

struct ModelDims {
  int vocab_size = 0;  // real items use ids 1..vocab_size; 0 is padding
  int d = 64;          // embedding width
  int n = 100;         // window length
  int layers = 2;
  int heads = 1;
  int d_ff = 0;        // 0 means d

  int head_dim() const { return d / heads; }

  void validate() const {
    if (vocab_size < 1) throw std::invalid_argument("model dims: vocab_size must be >= 1");
    if (d < 1 || n < 1 || layers < 0) throw std::invalid_argument("model dims: bad d/n/layers");
    if (heads < 1 || d % heads != 0) throw std::invalid_argument("model dims: heads must divide d");
    if (d_ff < 1) throw std::invalid_argument("model dims: d_ff must be >= 1");
  }
};

struct ParamGroup {
  std::string name;
  size_t offset = 0;
  size_t count = 0;
};

// All parameters live in one flat array so the optimizer, checkpointing and
// gradient buffers are single contiguous vectors. Layout (also the checkpoint
// order): item embeddings (|V|+1 rows, row 0 = padding, pinned at zero),
// position embeddings (n rows), then per layer: ln1 gain/bias, Wq, Wk, Wv, Wo,
// ln2 gain/bias, FFN W1, b1, W2, b2. Projection matrices are row-major d x d
// with head i owning output rows [i*head_dim, (i+1)*head_dim).
template <typename T>
struct ModelParams {
  ModelDims dims;
  std::vector<T> flat;

  size_t item_emb = 0;
  size_t pos_emb = 0;
  struct LayerOffsets {
    size_t ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1, w2, b2;
  };
  std::vector<LayerOffsets> layer;
  std::vector<ParamGroup> groups;

  static ModelParams make(ModelDims dims) {
    if (dims.d_ff <= 0) dims.d_ff = dims.d;
    dims.validate();
    ModelParams p;
    p.dims = dims;
    size_t off = 0;
    auto group = [&](const std::string& name, size_t count) {
      p.groups.push_back({name, off, count});
      const size_t at = off;
      off += count;
      return at;
    };
    const size_t d = dims.d, dff = dims.d_ff;
    p.item_emb = group("item_embeddings", (static_cast<size_t>(dims.vocab_size) + 1) * d);
    p.pos_emb = group("position_embeddings", static_cast<size_t>(dims.n) * d);
    p.layer.resize(dims.layers);
    for (int l = 0; l < dims.layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      LayerOffsets& lo = p.layer[l];
      lo.ln1_gain = group(pre + "ln1_gain", d);
      lo.ln1_bias = group(pre + "ln1_bias", d);
      lo.wq = group(pre + "attn_wq", d * d);
      lo.wk = group(pre + "attn_wk", d * d);
      lo.wv = group(pre + "attn_wv", d * d);
      lo.wo = group(pre + "attn_wo", d * d);
      lo.ln2_gain = group(pre + "ln2_gain", d);
      lo.ln2_bias = group(pre + "ln2_bias", d);
      lo.w1 = group(pre + "ffn_w1", dff * d);
      lo.b1 = group(pre + "ffn_b1", dff);
      lo.w2 = group(pre + "ffn_w2", d * dff);
      lo.b2 = group(pre + "ffn_b2", d);
    }
    p.flat.assign(off, T(0));
    return p;
  }

  // Truncated normal (std 0.02) for embeddings and weight matrices, layer-norm
  // gains 1, all biases 0. The padding embedding row stays pinned at zero.
  void init_random(uint64_t seed) {
    Rng rng(substream_seed(seed, "init"));
    auto fill_normal = [&](size_t off, size_t count) {
      for (size_t i = 0; i < count; ++i) flat[off + i] = static_cast<T>(rng.truncated_normal(0.02));
    };
    fill_normal(item_emb, (static_cast<size_t>(dims.vocab_size) + 1) * dims.d);
    for (int j = 0; j < dims.d; ++j) flat[item_emb + j] = T(0);
    fill_normal(pos_emb, static_cast<size_t>(dims.n) * dims.d);
    const size_t d = dims.d, dff = dims.d_ff;
    for (const LayerOffsets& lo : layer) {
      for (size_t i = 0; i < d; ++i) flat[lo.ln1_gain + i] = T(1);
      fill_normal(lo.wq, d * d);
      fill_normal(lo.wk, d * d);
      fill_normal(lo.wv, d * d);
      fill_normal(lo.wo, d * d);
      for (size_t i = 0; i < d; ++i) flat[lo.ln2_gain + i] = T(1);
      fill_normal(lo.w1, dff * d);
      fill_normal(lo.w2, d * dff);
    }
  }

  size_t param_count() const { return flat.size(); }
  const T* at(size_t off) const { return flat.data() + off; }
  T* at(size_t off) { return flat.data() + off; }
  const T* item_row(int id) const { return at(item_emb + static_cast<size_t>(id) * dims.d); }
  const T* pos_row(int t) const { return at(pos_emb + static_cast<size_t>(t) * dims.d); }
};

// Causal + padding mask: position s may feed position t iff s <= t and s holds
// a real item. Row-major n x n, 1 = allowed.
inline void causal_padding_mask(std::span<const int> window, std::vector<uint8_t>& mask) {
  const int n = static_cast<int>(window.size());
  mask.assign(static_cast<size_t>(n) * n, 0);
  for (int t = 0; t < n; ++t) {
    for (int s = 0; s <= t; ++s) {
      if (window[s] != 0) mask[static_cast<size_t>(t) * n + s] = 1;
    }
  }
}

template <typename T>
struct LayerActs {
  Matrix<T> ln1_out, q, k, v, ctx, attn_out, x_mid, ln2_out, ffn_pre, ffn_out, x_out;
  Matrix<T> probs;         // (heads*n) x n, row head*n + t
  Matrix<T> drop1, drop2;  // dropout masks, filled in train mode only
  std::vector<T> ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;

  void configure(const ModelDims& dims) {
    const int n = dims.n, d = dims.d;
    if (ln1_out.rows == n && ln1_out.cols == d && ffn_pre.cols == dims.d_ff &&
        probs.rows == dims.heads * n) {
      return;
    }
    for (Matrix<T>* m : {&ln1_out, &q, &k, &v, &ctx, &attn_out, &x_mid, &ln2_out, &ffn_out,
                         &x_out, &drop1, &drop2}) {
      m->resize(n, d);
    }
    ffn_pre.resize(n, dims.d_ff);
    probs.resize(dims.heads * n, n);
    for (std::vector<T>* vec : {&ln1_mean, &ln1_rstd, &ln2_mean, &ln2_rstd}) {
      vec->assign(n, T(0));
    }
  }
};

// Everything encode_forward records for one window, reusable across calls.
template <typename T>
struct Activations {
  ModelDims dims;
  bool train_mode = false;
  std::vector<int> window;
  int start = 0;  // first real position; n when the window is all padding
  std::vector<uint8_t> mask;
  std::vector<uint8_t> row_any, col_any;
  Matrix<T> x0;
  std::vector<LayerActs<T>> layers;

  void configure(const ModelDims& d) {
    dims = d;
    if (x0.rows != d.n || x0.cols != d.d) x0.resize(d.n, d.d);
    if (static_cast<int>(layers.size()) != d.layers) layers.resize(d.layers);
    for (auto& la : layers) la.configure(d);
    if (static_cast<int>(window.size()) != d.n) window.assign(d.n, 0);
    row_any.assign(d.n, 0);
    col_any.assign(d.n, 0);
  }

  const Matrix<T>& hidden() const { return layers.empty() ? x0 : layers.back().x_out; }
};

namespace detail {

// y = W x for row-major W (out_dim x in_dim).
template <typename T>
void matvec(const T* w, const T* x, int out_dim, int in_dim, T* y) {
  for (int i = 0; i < out_dim; ++i) {
    const T* row = w + static_cast<size_t>(i) * in_dim;
    T acc = T(0);
    for (int j = 0; j < in_dim; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

template <typename T>
T dot(const T* a, const T* b, int d) {
  T acc = T(0);
  for (int j = 0; j < d; ++j) acc += a[j] * b[j];
  return acc;
}

inline void mask_coverage(const uint8_t* mask, int n, std::vector<uint8_t>& row_any,
                          std::vector<uint8_t>& col_any) {
  std::fill(row_any.begin(), row_any.end(), 0);
  std::fill(col_any.begin(), col_any.end(), 0);
  for (int t = 0; t < n; ++t) {
    const uint8_t* row = mask + static_cast<size_t>(t) * n;
    for (int s = 0; s < n; ++s) {
      if (row[s]) {
        row_any[t] = 1;
        col_any[s] = 1;
      }
    }
  }
}

template <typename T>
void attention_forward(const ModelParams<T>& p, int l, const Matrix<T>& x, const uint8_t* mask,
                       std::vector<uint8_t>& row_any, std::vector<uint8_t>& col_any,
                       LayerActs<T>& la) {
  const int n = p.dims.n, d = p.dims.d, heads = p.dims.heads, dh = p.dims.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  mask_coverage(mask, n, row_any, col_any);
  const T* wq = p.at(p.layer[l].wq);
  const T* wk = p.at(p.layer[l].wk);
  const T* wv = p.at(p.layer[l].wv);
  const T* wo = p.at(p.layer[l].wo);
  for (int t = 0; t < n; ++t) {
    if (row_any[t]) {
      matvec(wq, x.row(t), d, d, la.q.row(t));
      std::fill(la.ctx.row(t), la.ctx.row(t) + d, T(0));
    }
    if (col_any[t]) {
      matvec(wk, x.row(t), d, d, la.k.row(t));
      matvec(wv, x.row(t), d, d, la.v.row(t));
    }
  }
  for (int head = 0; head < heads; ++head) {
    const int hoff = head * dh;
    for (int t = 0; t < n; ++t) {
      if (!row_any[t]) continue;
      const uint8_t* mrow = mask + static_cast<size_t>(t) * n;
      T* prow = la.probs.row(head * n + t);
      std::fill(prow, prow + n, T(0));
      const T* qh = la.q.row(t) + hoff;
      T mx = -std::numeric_limits<T>::infinity();
      for (int s = 0; s < n; ++s) {
        if (!mrow[s]) continue;
        const T sc = scale * dot(qh, la.k.row(s) + hoff, dh);
        prow[s] = sc;
        if (sc > mx) mx = sc;
      }
      T sum = T(0);
      for (int s = 0; s < n; ++s) {
        if (!mrow[s]) continue;
        prow[s] = std::exp(prow[s] - mx);
        sum += prow[s];
      }
      const T inv = T(1) / sum;
      T* crow = la.ctx.row(t) + hoff;
      for (int s = 0; s < n; ++s) {
        if (!mrow[s]) continue;
        prow[s] *= inv;
        const T* vh = la.v.row(s) + hoff;
        for (int j = 0; j < dh; ++j) crow[j] += prow[s] * vh[j];
      }
    }
  }
  for (int t = 0; t < n; ++t) {
    if (row_any[t]) {
      matvec(wo, la.ctx.row(t), d, d, la.attn_out.row(t));
    } else {
      std::fill(la.attn_out.row(t), la.attn_out.row(t) + d, T(0));
    }
  }
}

template <typename T>
void ffn_forward_row(const ModelParams<T>& p, int l, const T* x, T* pre, T* out) {
  const int d = p.dims.d, dff = p.dims.d_ff;
  const T* w1 = p.at(p.layer[l].w1);
  const T* b1 = p.at(p.layer[l].b1);
  const T* w2 = p.at(p.layer[l].w2);
  const T* b2 = p.at(p.layer[l].b2);
  for (int i = 0; i < dff; ++i) {
    pre[i] = b1[i] + dot(w1 + static_cast<size_t>(i) * d, x, d);
  }
  for (int j = 0; j < d; ++j) {
    const T* w2row = w2 + static_cast<size_t>(j) * dff;
    T acc = b2[j];
    for (int i = 0; i < dff; ++i) {
      if (pre[i] > T(0)) acc += w2row[i] * pre[i];
    }
    out[j] = acc;
  }
}

}  // namespace detail

// Row t = item_embedding[window[t]] + position_embedding[t]. The padding row
// is pinned at zero, so padding positions carry the position embedding alone.
template <typename T>
void embed_into(const ModelParams<T>& p, std::span<const int> window, Matrix<T>& out) {
  const int n = p.dims.n, d = p.dims.d;
  if (static_cast<int>(window.size()) != n) {
    throw std::invalid_argument("embed_sequence: window length != n");
  }
  for (int t = 0; t < n; ++t) {
    const int id = window[t];
    if (id < 0 || id > p.dims.vocab_size) {
      throw std::out_of_range("embed_sequence: item id out of range");
    }
    const T* e = p.item_row(id);
    const T* pos = p.pos_row(t);
    T* row = out.row(t);
    for (int j = 0; j < d; ++j) row[j] = e[j] + pos[j];
  }
}

template <typename T>
Matrix<T> embed_sequence(std::span<const int> window, const ModelParams<T>& p) {
  Matrix<T> out(p.dims.n, p.dims.d);
  embed_into(p, window, out);
  return out;
}

// Standalone attention with an arbitrary mask; rows with no allowed positions
// output zero.
template <typename T>
Matrix<T> multi_head_attention(const Matrix<T>& x, const ModelParams<T>& p, int l,
                               std::span<const uint8_t> mask) {
  const int n = p.dims.n;
  if (x.rows != n || x.cols != p.dims.d || static_cast<int>(mask.size()) != n * n) {
    throw std::invalid_argument("multi_head_attention: shape mismatch");
  }
  LayerActs<T> la;
  la.configure(p.dims);
  std::vector<uint8_t> row_any, col_any;
  row_any.assign(n, 0);
  col_any.assign(n, 0);
  detail::attention_forward(p, l, x, mask.data(), row_any, col_any, la);
  return la.attn_out;
}

// Position-wise W2 ReLU(W1 x + b1) + b2.
template <typename T>
Matrix<T> feed_forward(const Matrix<T>& x, const ModelParams<T>& p, int l) {
  if (x.rows != p.dims.n || x.cols != p.dims.d) {
    throw std::invalid_argument("feed_forward: shape mismatch");
  }
  Matrix<T> out(p.dims.n, p.dims.d);
  std::vector<T> pre(p.dims.d_ff);
  for (int t = 0; t < x.rows; ++t) {
    detail::ffn_forward_row(p, l, x.row(t), pre.data(), out.row(t));
  }
  return out;
}

// Full encoder pass: embedding, then L pre-norm residual blocks
// (norm -> sublayer -> dropout -> residual) with the causal+padding mask in
// every attention layer. acts keeps everything the backward pass needs.
// dropout_rng must be non-null when train_mode is on with a positive rate.
template <typename T>
void encode_forward(const ModelParams<T>& p, std::span<const int> window, bool train_mode,
                    T dropout_rate, Rng* dropout_rng, Activations<T>& acts) {
  const int n = p.dims.n, d = p.dims.d;
  acts.configure(p.dims);
  acts.train_mode = train_mode;
  std::copy(window.begin(), window.end(), acts.window.begin());
  acts.start = n;
  for (int t = 0; t < n; ++t) {
    if (window[t] != 0) {
      acts.start = t;
      break;
    }
  }
  causal_padding_mask(window, acts.mask);
  embed_into(p, window, acts.x0);
  if (train_mode && dropout_rate > T(0) && dropout_rng == nullptr) {
    throw std::invalid_argument("encode_forward: dropout requires an RNG in train mode");
  }
  const Matrix<T>* xin = &acts.x0;
  for (int l = 0; l < p.dims.layers; ++l) {
    LayerActs<T>& la = acts.layers[l];
    const T* g1 = p.at(p.layer[l].ln1_gain);
    const T* b1 = p.at(p.layer[l].ln1_bias);
    for (int t = 0; t < n; ++t) {
      layer_norm_row(xin->row(t), d, g1, b1, la.ln1_out.row(t), &la.ln1_mean[t], &la.ln1_rstd[t]);
    }
    detail::attention_forward(p, l, la.ln1_out, acts.mask.data(), acts.row_any, acts.col_any, la);
    if (train_mode) {
      dropout_inplace(la.attn_out.data.data(), n * d, dropout_rate, *dropout_rng,
                      la.drop1.data.data());
    }
    for (int t = 0; t < n; ++t) {
      const T* a = xin->row(t);
      const T* s = la.attn_out.row(t);
      T* o = la.x_mid.row(t);
      for (int j = 0; j < d; ++j) o[j] = a[j] + s[j];
    }
    const T* g2 = p.at(p.layer[l].ln2_gain);
    const T* b2 = p.at(p.layer[l].ln2_bias);
    for (int t = 0; t < n; ++t) {
      layer_norm_row(la.x_mid.row(t), d, g2, b2, la.ln2_out.row(t), &la.ln2_mean[t],
                     &la.ln2_rstd[t]);
      detail::ffn_forward_row(p, l, la.ln2_out.row(t), la.ffn_pre.row(t), la.ffn_out.row(t));
    }
    if (train_mode) {
      dropout_inplace(la.ffn_out.data.data(), n * d, dropout_rate, *dropout_rng,
                      la.drop2.data.data());
    }
    for (int t = 0; t < n; ++t) {
      const T* a = la.x_mid.row(t);
      const T* s = la.ffn_out.row(t);
      T* o = la.x_out.row(t);
      for (int j = 0; j < d; ++j) o[j] = a[j] + s[j];
    }
    xin = &la.x_out;
  }
}

// Inference-mode convenience wrapper.
template <typename T>
Matrix<T> encode(const ModelParams<T>& p, std::span<const int> window, bool train_mode = false) {
  Activations<T> acts;
  encode_forward(p, window, train_mode, T(0), nullptr, acts);
  return acts.hidden();
}

// Weight-tied scoring: logits[v] = dot(hidden_row, item_embedding[v]) for
// v in [1, |V|]; slot 0 (padding) is pinned at -inf so it never ranks.
template <typename T>
std::vector<T> score_items(const T* hidden_row, const ModelParams<T>& p) {
  std::vector<T> logits(static_cast<size_t>(p.dims.vocab_size) + 1);
  logits[0] = -std::numeric_limits<T>::infinity();
  for (int v = 1; v <= p.dims.vocab_size; ++v) {
    logits[v] = detail::dot(hidden_row, p.item_row(v), p.dims.d);
  }
  return logits;
}

// Greedy readout over real items; ties go to the smallest id.
template <typename T>
int argmax_item(const T* hidden_row, const ModelParams<T>& p) {
  int best = 1;
  T best_score = detail::dot(hidden_row, p.item_row(1), p.dims.d);
  for (int v = 2; v <= p.dims.vocab_size; ++v) {
    const T s = detail::dot(hidden_row, p.item_row(v), p.dims.d);
    if (s > best_score) {
      best_score = s;
      best = v;
    }
  }
  return best;
}

// Scratch buffers for encode_backward, reusable across calls.
template <typename T>
struct EncoderScratch {
  Matrix<T> dx, dsub, dln, dq, dk, dv, dctx;
  std::vector<T> dscore, dff, drow;
  std::vector<uint8_t> row_any, col_any;

  void configure(const ModelDims& dims) {
    if (dx.rows == dims.n && dx.cols == dims.d && static_cast<int>(dff.size()) == dims.d_ff) {
      return;
    }
    for (Matrix<T>* m : {&dx, &dsub, &dln, &dq, &dk, &dv, &dctx}) m->resize(dims.n, dims.d);
    dscore.assign(dims.n, T(0));
    dff.assign(dims.d_ff, T(0));
    drow.assign(dims.d, T(0));
    row_any.assign(dims.n, 0);
    col_any.assign(dims.n, 0);
  }
};

namespace detail {

template <typename T>
void attention_backward(const ModelParams<T>& p, int l, const Matrix<T>& x, const uint8_t* mask,
                        const LayerActs<T>& la, const Matrix<T>& datt, Matrix<T>& dx_out,
                        std::span<T> grads, EncoderScratch<T>& sc) {
  const int n = p.dims.n, d = p.dims.d, heads = p.dims.heads, dh = p.dims.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  mask_coverage(mask, n, sc.row_any, sc.col_any);
  const T* wq = p.at(p.layer[l].wq);
  const T* wk = p.at(p.layer[l].wk);
  const T* wv = p.at(p.layer[l].wv);
  const T* wo = p.at(p.layer[l].wo);
  T* gwq = grads.data() + p.layer[l].wq;
  T* gwk = grads.data() + p.layer[l].wk;
  T* gwv = grads.data() + p.layer[l].wv;
  T* gwo = grads.data() + p.layer[l].wo;
  for (int t = 0; t < n; ++t) {
    if (sc.row_any[t]) {
      std::fill(sc.dq.row(t), sc.dq.row(t) + d, T(0));
      std::fill(sc.dctx.row(t), sc.dctx.row(t) + d, T(0));
    }
    if (sc.col_any[t]) {
      std::fill(sc.dk.row(t), sc.dk.row(t) + d, T(0));
      std::fill(sc.dv.row(t), sc.dv.row(t) + d, T(0));
    }
  }
  // output projection: attn_out_t = Wo ctx_t
  for (int t = 0; t < n; ++t) {
    if (!sc.row_any[t]) continue;
    const T* g = datt.row(t);
    const T* c = la.ctx.row(t);
    T* dc = sc.dctx.row(t);
    for (int i = 0; i < d; ++i) {
      const T gi = g[i];
      if (gi == T(0)) continue;
      const T* worow = wo + static_cast<size_t>(i) * d;
      T* gworow = gwo + static_cast<size_t>(i) * d;
      for (int j = 0; j < d; ++j) {
        gworow[j] += gi * c[j];
        dc[j] += gi * worow[j];
      }
    }
  }
  // softmax attention backward per head and query row
  for (int head = 0; head < heads; ++head) {
    const int hoff = head * dh;
    for (int t = 0; t < n; ++t) {
      if (!sc.row_any[t]) continue;
      const uint8_t* mrow = mask + static_cast<size_t>(t) * n;
      const T* prow = la.probs.row(head * n + t);
      const T* dc = sc.dctx.row(t) + hoff;
      T pdot = T(0);
      for (int s = 0; s < n; ++s) {
        if (!mrow[s]) continue;
        const T dp = dot(dc, la.v.row(s) + hoff, dh);
        sc.dscore[s] = dp;
        pdot += prow[s] * dp;
        T* dvs = sc.dv.row(s) + hoff;
        for (int j = 0; j < dh; ++j) dvs[j] += prow[s] * dc[j];
      }
      const T* qh = la.q.row(t) + hoff;
      T* dqh = sc.dq.row(t) + hoff;
      for (int s = 0; s < n; ++s) {
        if (!mrow[s]) continue;
        const T ds = scale * prow[s] * (sc.dscore[s] - pdot);
        if (ds == T(0)) continue;
        const T* kh = la.k.row(s) + hoff;
        T* dkh = sc.dk.row(s) + hoff;
        for (int j = 0; j < dh; ++j) {
          dqh[j] += ds * kh[j];
          dkh[j] += ds * qh[j];
        }
      }
    }
  }
  // projections: q_t = Wq x_t, k_s = Wk x_s, v_s = Wv x_s
  for (int t = 0; t < n; ++t) {
    T* dxr = dx_out.row(t);
    std::fill(dxr, dxr + d, T(0));
    const T* xr = x.row(t);
    if (sc.row_any[t]) {
      const T* dqr = sc.dq.row(t);
      for (int i = 0; i < d; ++i) {
        const T gi = dqr[i];
        if (gi == T(0)) continue;
        const T* wrow = wq + static_cast<size_t>(i) * d;
        T* growq = gwq + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
          growq[j] += gi * xr[j];
          dxr[j] += gi * wrow[j];
        }
      }
    }
    if (sc.col_any[t]) {
      const T* dkr = sc.dk.row(t);
      const T* dvr = sc.dv.row(t);
      for (int i = 0; i < d; ++i) {
        const T gk = dkr[i];
        if (gk != T(0)) {
          const T* wrow = wk + static_cast<size_t>(i) * d;
          T* grow = gwk + static_cast<size_t>(i) * d;
          for (int j = 0; j < d; ++j) {
            grow[j] += gk * xr[j];
            dxr[j] += gk * wrow[j];
          }
        }
        const T gv = dvr[i];
        if (gv != T(0)) {
          const T* wrow = wv + static_cast<size_t>(i) * d;
          T* grow = gwv + static_cast<size_t>(i) * d;
          for (int j = 0; j < d; ++j) {
            grow[j] += gv * xr[j];
            dxr[j] += gv * wrow[j];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Backward through everything encode_forward recorded, accumulating into a
// flat gradient buffer laid out like ModelParams::flat. d_hidden rows at
// positions before the first real item must be zero (every loss in this
// project only reads real positions); their forward paths are dead ends and
// are skipped. Requires train-mode activations so dropout masks are present.
template <typename T>
void encode_backward(const ModelParams<T>& p, const Activations<T>& acts,
                     const Matrix<T>& d_hidden, std::span<T> grads, EncoderScratch<T>& sc) {
  if (!acts.train_mode) {
    throw std::logic_error("encode_backward: needs activations from a train-mode forward pass");
  }
  if (grads.size() != p.flat.size()) {
    throw std::invalid_argument("encode_backward: gradient buffer size mismatch");
  }
  const int n = p.dims.n, d = p.dims.d, dff = p.dims.d_ff;
  sc.configure(p.dims);
  const int start = acts.start;
  for (int t = 0; t < n; ++t) {
    const T* src = d_hidden.row(t);
    std::copy(src, src + d, sc.dx.row(t));
  }
  for (int l = p.dims.layers - 1; l >= 0; --l) {
    const LayerActs<T>& la = acts.layers[l];
    const Matrix<T>& xin = (l == 0) ? acts.x0 : acts.layers[l - 1].x_out;
    const T* g1 = p.at(p.layer[l].ln1_gain);
    const T* g2 = p.at(p.layer[l].ln2_gain);
    const T* w1 = p.at(p.layer[l].w1);
    const T* w2 = p.at(p.layer[l].w2);
    T* gw1 = grads.data() + p.layer[l].w1;
    T* gb1 = grads.data() + p.layer[l].b1;
    T* gw2 = grads.data() + p.layer[l].w2;
    T* gb2 = grads.data() + p.layer[l].b2;
    T* gln1g = grads.data() + p.layer[l].ln1_gain;
    T* gln1b = grads.data() + p.layer[l].ln1_bias;
    T* gln2g = grads.data() + p.layer[l].ln2_gain;
    T* gln2b = grads.data() + p.layer[l].ln2_bias;
    // FFN sublayer: x_out = x_mid + drop2 * FFN(ln2(x_mid))
    for (int t = start; t < n; ++t) {
      const T* dxr = sc.dx.row(t);
      const T* m2 = la.drop2.row(t);
      const T* pre = la.ffn_pre.row(t);
      const T* ln2r = la.ln2_out.row(t);
      std::fill(sc.dff.begin(), sc.dff.end(), T(0));
      for (int j = 0; j < d; ++j) {
        const T g = dxr[j] * m2[j];
        if (g == T(0)) continue;
        gb2[j] += g;
        const T* w2row = w2 + static_cast<size_t>(j) * dff;
        T* gw2row = gw2 + static_cast<size_t>(j) * dff;
        for (int i = 0; i < dff; ++i) {
          if (pre[i] > T(0)) gw2row[i] += g * pre[i];
          sc.dff[i] += g * w2row[i];
        }
      }
      std::fill(sc.drow.begin(), sc.drow.end(), T(0));
      for (int i = 0; i < dff; ++i) {
        if (pre[i] <= T(0)) continue;
        const T gp = sc.dff[i];
        if (gp == T(0)) continue;
        gb1[i] += gp;
        const T* w1row = w1 + static_cast<size_t>(i) * d;
        T* gw1row = gw1 + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
          gw1row[j] += gp * ln2r[j];
          sc.drow[j] += gp * w1row[j];
        }
      }
      layer_norm_row_backward(sc.drow.data(), la.x_mid.row(t), la.ln2_mean[t], la.ln2_rstd[t], g2,
                              d, sc.dx.row(t), gln2g, gln2b);
    }
    // attention sublayer: x_mid = xin + drop1 * Attn(ln1(xin))
    for (int t = start; t < n; ++t) {
      const T* dxr = sc.dx.row(t);
      const T* m1 = la.drop1.row(t);
      T* out = sc.dsub.row(t);
      for (int j = 0; j < d; ++j) out[j] = dxr[j] * m1[j];
    }
    detail::attention_backward(p, l, la.ln1_out, acts.mask.data(), la, sc.dsub, sc.dln, grads, sc);
    for (int t = start; t < n; ++t) {
      layer_norm_row_backward(sc.dln.row(t), xin.row(t), la.ln1_mean[t], la.ln1_rstd[t], g1, d,
                              sc.dx.row(t), gln1g, gln1b);
    }
  }
  T* gitem = grads.data() + p.item_emb;
  T* gpos = grads.data() + p.pos_emb;
  for (int t = start; t < n; ++t) {
    const T* dxr = sc.dx.row(t);
    const int id = acts.window[t];
    T* gp = gpos + static_cast<size_t>(t) * d;
    for (int j = 0; j < d; ++j) gp[j] += dxr[j];
    if (id > 0) {
      T* ge = gitem + static_cast<size_t>(id) * d;
      for (int j = 0; j < d; ++j) ge[j] += dxr[j];
    }
  }
}

}  // namespace asrep
