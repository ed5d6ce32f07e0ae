#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "asrep/dataset.hpp"
#include "asrep/encoder.hpp"
#include "asrep/numerics.hpp"
#include "asrep/rng.hpp"

namespace asrep {

enum class Direction { forward, reverse };

struct TrainConfig {
  Direction direction = Direction::forward;
  int epochs = 1;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double dropout = 0.0;
  int negatives_per_position = 1;
  uint64_t seed = 42;
  // Keep the epoch with the best validation Recall@5 (needs a valid_fn).
  bool keep_best_valid = false;
  // Fine-tuning computes the loss at every valid position of the augmented
  // window, pseudo-prior targets included; flip off to exclude them.
  bool loss_on_pseudo = true;
  std::string epoch_log_path;  // CSV: epoch,train_loss,valid_recall@5,wall_seconds
  // Gradients are accumulated into this many chunk buffers merged in fixed
  // order, so parallel runs reproduce the serial result bit for bit.
  int grad_chunks = 16;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("train config: dropout in [0,1)");
    if (negatives_per_position < 1) {
      throw std::invalid_argument("train config: negatives_per_position must be >= 1");
    }
    if (grad_chunks < 1) throw std::invalid_argument("train config: grad_chunks must be >= 1");
  }
};

// Per-position arrays are count x n row-major; negatives add a third axis.
struct TrainingBatch {
  int count = 0;
  int n = 0;
  int negs_per_pos = 1;
  std::vector<int> windows;
  std::vector<int> targets;      // 0 where no target
  std::vector<int> negatives;    // count x n x negs_per_pos
  std::vector<uint8_t> valid;
  std::vector<uint64_t> dropout_seed;  // one substream per example
  int valid_total = 0;
};

// Builds shifted next-item examples. Forward: window = pad_truncate of all
// items but the last, target at each position is the following item. Reverse:
// the sequence is reversed first, then the identical construction applies, so
// the predicted "next" item is the prior item in real time. One uniform
// negative per valid position, resampled until it differs from the target.
// example_uid_base keys the per-example RNG substreams; pass a counter that
// keeps growing across batches and epochs.
inline TrainingBatch make_batch(std::span<const AugmentedSequence> seqs, Direction direction,
                                int n, int vocab_size, uint64_t seed, uint64_t example_uid_base,
                                int negs_per_pos = 1, bool loss_on_pseudo = true) {
  if (n < 1) throw std::invalid_argument("make_batch: n must be >= 1");
  if (vocab_size < 2) throw std::invalid_argument("make_batch: need at least 2 items to sample negatives");
  TrainingBatch b;
  b.count = static_cast<int>(seqs.size());
  b.n = n;
  b.negs_per_pos = negs_per_pos;
  b.windows.assign(static_cast<size_t>(b.count) * n, 0);
  b.targets.assign(static_cast<size_t>(b.count) * n, 0);
  b.negatives.assign(static_cast<size_t>(b.count) * n * negs_per_pos, 0);
  b.valid.assign(static_cast<size_t>(b.count) * n, 0);
  b.dropout_seed.assign(b.count, 0);
  std::vector<int> items;
  for (int e = 0; e < b.count; ++e) {
    const AugmentedSequence& seq = seqs[e];
    const uint64_t uid = example_uid_base + static_cast<uint64_t>(e);
    b.dropout_seed[e] = substream_seed(seed, "dropout", uid);
    items.assign(seq.items.begin(), seq.items.end());
    if (direction == Direction::reverse) std::reverse(items.begin(), items.end());
    const int len = static_cast<int>(items.size());
    if (len < 2) continue;
    // window positions [n - w, n) hold items[off .. off + w); target of the
    // position holding items[i] is items[i + 1]
    const int w = std::min(len - 1, n);
    const int off = (len - 1) - w;
    int* win = b.windows.data() + static_cast<size_t>(e) * n;
    int* tgt = b.targets.data() + static_cast<size_t>(e) * n;
    uint8_t* val = b.valid.data() + static_cast<size_t>(e) * n;
    int* neg = b.negatives.data() + static_cast<size_t>(e) * n * negs_per_pos;
    Rng neg_rng(substream_seed(seed, "negatives", uid));
    for (int j = 0; j < w; ++j) {
      const int pos = n - w + j;
      const int src_index = off + j;
      win[pos] = items[src_index];
      const int target = items[src_index + 1];
      // in the forward pass over an augmented sequence, items[i]'s target sits
      // at original index i+1; pseudo-prior targets have index < prefix_len
      if (!loss_on_pseudo && direction == Direction::forward &&
          src_index + 1 < seq.prefix_len) {
        continue;
      }
      tgt[pos] = target;
      val[pos] = 1;
      ++b.valid_total;
      for (int q = 0; q < negs_per_pos; ++q) {
        int draw = target;
        while (draw == target) {
          draw = static_cast<int>(neg_rng.below(static_cast<uint64_t>(vocab_size))) + 1;
        }
        neg[static_cast<size_t>(pos) * negs_per_pos + q] = draw;
      }
    }
  }
  return b;
}

// Per-thread buffers for one gradient-accumulation chunk.
template <typename T>
struct LossChunk {
  Activations<T> acts;
  EncoderScratch<T> scratch;
  Matrix<T> d_hidden;
  std::vector<T> grads;
  double loss_sum = 0.0;

  void configure(const ModelParams<T>& p) {
    acts.configure(p.dims);
    if (d_hidden.rows != p.dims.n || d_hidden.cols != p.dims.d) {
      d_hidden.resize(p.dims.n, p.dims.d);
    }
    grads.assign(p.flat.size(), T(0));
    loss_sum = 0.0;
  }
};

namespace detail {

// Forward, loss and backward for examples [begin, end) of a batch. Gradients
// accumulate into chunk.grads unscaled; the caller divides by valid_total.
template <typename T>
void loss_chunk(const ModelParams<T>& p, const TrainingBatch& batch, int begin, int end,
                T dropout_rate, bool train_mode, bool with_grads, LossChunk<T>& chunk) {
  const int n = batch.n, d = p.dims.d;
  for (int e = begin; e < end; ++e) {
    const int* win = batch.windows.data() + static_cast<size_t>(e) * n;
    const uint8_t* val = batch.valid.data() + static_cast<size_t>(e) * n;
    bool any = false;
    for (int t = 0; t < n; ++t) any = any || val[t];
    if (!any) continue;
    Rng drop_rng(batch.dropout_seed[e]);
    encode_forward(p, std::span<const int>(win, static_cast<size_t>(n)), train_mode, dropout_rate,
                   &drop_rng, chunk.acts);
    const Matrix<T>& hidden = chunk.acts.hidden();
    if (with_grads) chunk.d_hidden.zero();
    const int* tgt = batch.targets.data() + static_cast<size_t>(e) * n;
    const int* neg = batch.negatives.data() + static_cast<size_t>(e) * n * batch.negs_per_pos;
    for (int t = 0; t < n; ++t) {
      if (!val[t]) continue;
      const T* h = hidden.row(t);
      const int pos_id = tgt[t];
      const T pos_logit = detail::dot(h, p.item_row(pos_id), d);
      double loss = static_cast<double>(neg_log_sigmoid(pos_logit));
      // d/dx of -log sigmoid(x) is sigmoid(x) - 1
      const T pos_coef = T(1) / (T(1) + std::exp(-pos_logit)) - T(1);
      T* dh = with_grads ? chunk.d_hidden.row(t) : nullptr;
      if (with_grads) {
        const T* epos = p.item_row(pos_id);
        T* gpos = chunk.grads.data() + p.item_emb + static_cast<size_t>(pos_id) * d;
        for (int j = 0; j < d; ++j) {
          dh[j] += pos_coef * epos[j];
          gpos[j] += pos_coef * h[j];
        }
      }
      const T neg_scale = T(1) / static_cast<T>(batch.negs_per_pos);
      for (int q = 0; q < batch.negs_per_pos; ++q) {
        const int neg_id = neg[static_cast<size_t>(t) * batch.negs_per_pos + q];
        const T neg_logit = detail::dot(h, p.item_row(neg_id), d);
        loss += static_cast<double>(neg_log_sigmoid(-neg_logit)) / batch.negs_per_pos;
        if (with_grads) {
          // d/dx of -log(1 - sigmoid(x)) is sigmoid(x)
          const T neg_coef = neg_scale / (T(1) + std::exp(-neg_logit));
          const T* eneg = p.item_row(neg_id);
          T* gneg = chunk.grads.data() + p.item_emb + static_cast<size_t>(neg_id) * d;
          for (int j = 0; j < d; ++j) {
            dh[j] += neg_coef * eneg[j];
            gneg[j] += neg_coef * h[j];
          }
        }
      }
      chunk.loss_sum += loss;
    }
    if (with_grads) {
      encode_backward(p, chunk.acts, chunk.d_hidden, std::span<T>(chunk.grads), chunk.scratch);
    }
  }
}

}  // namespace detail

// Mean sampled-BCE loss over valid positions and, when grads_out is non-empty,
// the full parameter gradient. Work is split over a fixed number of chunks
// merged in chunk order, so the result is independent of thread scheduling.
// grads_out must be zeroed by the caller and sized like params.flat.
template <typename T>
double training_loss(const ModelParams<T>& p, const TrainingBatch& batch, T dropout_rate,
                     bool train_mode, std::span<T> grads_out, std::vector<LossChunk<T>>& chunks,
                     int n_chunks) {
  const bool with_grads = !grads_out.empty();
  if (with_grads && grads_out.size() != p.flat.size()) {
    throw std::invalid_argument("training_loss: gradient buffer size mismatch");
  }
  if (batch.valid_total == 0) return 0.0;
  n_chunks = std::max(1, std::min(n_chunks, batch.count));
  if (static_cast<int>(chunks.size()) < n_chunks) chunks.resize(n_chunks);
  const int per = (batch.count + n_chunks - 1) / n_chunks;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (int c = 0; c < n_chunks; ++c) {
    chunks[c].configure(p);
    const int begin = c * per;
    const int end = std::min(batch.count, begin + per);
    if (begin < end) {
      detail::loss_chunk(p, batch, begin, end, dropout_rate, train_mode, with_grads, chunks[c]);
    }
  }
  double loss_sum = 0.0;
  for (int c = 0; c < n_chunks; ++c) loss_sum += chunks[c].loss_sum;
  const double inv = 1.0 / batch.valid_total;
  if (with_grads) {
    for (int c = 0; c < n_chunks; ++c) {
      const std::vector<T>& g = chunks[c].grads;
      for (size_t i = 0; i < grads_out.size(); ++i) grads_out[i] += g[i];
    }
    const T scale = static_cast<T>(inv);
    for (size_t i = 0; i < grads_out.size(); ++i) grads_out[i] *= scale;
  }
  return loss_sum * inv;
}

// Convenience overload: serial loss and gradients for one batch.
template <typename T>
double training_loss(const ModelParams<T>& p, const TrainingBatch& batch, std::span<T> grads_out) {
  std::vector<LossChunk<T>> chunks;
  return training_loss(p, batch, T(0), true, grads_out, chunks, 1);
}

struct EpochLogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_recall5 = 0.0;
  double wall_seconds = 0.0;
};

template <typename T>
struct TrainResult {
  ModelParams<T> params;
  std::vector<EpochLogRow> log;
  int best_epoch = 0;
  double best_valid = 0.0;
  bool diverged = false;
};

// Epochs of shuffled mini-batches of make_batch + training_loss + adam_step.
// valid_fn (may be empty) returns validation Recall@5 for the current params.
// With keep_best_valid the returned params are the best epoch's snapshot,
// otherwise the final epoch's. A non-finite epoch loss aborts the run and
// returns the last finite epoch's params.
template <typename T>
TrainResult<T> train(const std::vector<AugmentedSequence>& corpus, ModelParams<T> params,
                     const TrainConfig& cfg,
                     const std::function<double(const ModelParams<T>&)>& valid_fn = {}) {
  cfg.validate();
  const int n = params.dims.n;
  const int vocab = params.dims.vocab_size;
  TrainResult<T> result;
  std::ofstream log_out;
  if (!cfg.epoch_log_path.empty()) {
    log_out.open(cfg.epoch_log_path);
    if (!log_out) throw std::runtime_error("train: cannot open epoch log " + cfg.epoch_log_path);
    log_out << "epoch,train_loss,valid_recall@5,wall_seconds\n";
  }
  AdamState<T> adam(params.flat.size(), cfg.learning_rate);
  std::vector<T> grads(params.flat.size(), T(0));
  std::vector<LossChunk<T>> chunks;
  std::vector<uint32_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<uint32_t>(i);
  std::vector<AugmentedSequence> slab(std::min<size_t>(corpus.size(), cfg.batch_size));
  ModelParams<T> last_good = params;
  ModelParams<T> best = params;
  double best_valid = -1.0;
  int best_epoch = 0;
  uint64_t example_uid = 0;
  const size_t pad_row_len = static_cast<size_t>(params.dims.d);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start_time = std::chrono::steady_clock::now();
    Rng shuffle_rng(substream_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
    shuffle(order, shuffle_rng);
    double loss_weighted = 0.0;
    int64_t valid_seen = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const size_t batch_len = std::min<size_t>(cfg.batch_size, order.size() - at);
      slab.resize(batch_len);
      for (size_t i = 0; i < batch_len; ++i) slab[i] = corpus[order[at + i]];
      TrainingBatch batch = make_batch(slab, cfg.direction, n, vocab, cfg.seed, example_uid,
                                       cfg.negatives_per_position, cfg.loss_on_pseudo);
      example_uid += batch_len;
      if (batch.valid_total == 0) continue;
      std::fill(grads.begin(), grads.end(), T(0));
      const double loss = training_loss(params, batch, static_cast<T>(cfg.dropout), true,
                                        std::span<T>(grads), chunks, cfg.grad_chunks);
      loss_weighted += loss * batch.valid_total;
      valid_seen += batch.valid_total;
      adam_step(params.flat, grads, adam);
      // the padding embedding row receives no gradient, but keep it pinned
      std::fill(params.flat.begin() + params.item_emb,
                params.flat.begin() + params.item_emb + pad_row_len, T(0));
    }
    const double epoch_loss = valid_seen > 0 ? loss_weighted / valid_seen : 0.0;
    if (!std::isfinite(epoch_loss)) {
      result.diverged = true;
      params = last_good;
      break;
    }
    last_good = params;
    double valid_metric = 0.0;
    if (valid_fn) {
      valid_metric = valid_fn(params);
      if (valid_metric > best_valid) {
        best_valid = valid_metric;
        best_epoch = epoch;
        best = params;
      }
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    result.log.push_back({epoch, epoch_loss, valid_metric, wall});
    if (log_out) {
      log_out << epoch << ',' << epoch_loss << ',' << valid_metric << ',' << wall << '\n';
      log_out.flush();
    }
  }
  result.best_epoch = best_epoch;
  result.best_valid = best_valid;
  if (cfg.keep_best_valid && valid_fn && best_epoch > 0) {
    result.params = std::move(best);
  } else {
    result.params = std::move(params);
  }
  return result;
}

}  // namespace asrep
