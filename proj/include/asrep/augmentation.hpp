#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "asrep/dataset.hpp"
#include "asrep/encoder.hpp"
#include "asrep/rng.hpp"

namespace asrep {

struct AugmentConfig {
  int k = 15;         // pseudo-prior items generated per short sequence
  int m = 18;         // sequences of length <= m qualify
  bool greedy = true; // greedy argmax decoding; sampling is opt-in
  double temperature = 1.0;
  uint64_t seed = 42; // sampling mode only

  void validate() const {
    if (k < 0) throw std::invalid_argument("augment config: k must be >= 0");
    if (m < 1) throw std::invalid_argument("augment config: m must be >= 1");
    if (!greedy && temperature <= 0.0) {
      throw std::invalid_argument("augment config: temperature must be positive");
    }
  }
};

// One step of prior inference: reverse the sequence, pad to the window,
// encode, read the last position and take the argmax item. The window
// keeps the last n of the reversed items, i.e. the n earliest real items.
// sampler, when given, draws from softmax(logits / temperature) instead.
template <typename T>
int generate_prior_item(const ModelParams<T>& params, std::span<const int> items,
                        Activations<T>& acts, Rng* sampler = nullptr,
                        double temperature = 1.0) {
  if (items.empty()) throw std::invalid_argument("generate_prior_item: empty sequence");
  std::vector<int> reversed(items.rbegin(), items.rend());
  const std::vector<int> window = pad_truncate(reversed, params.dims.n);
  encode_forward(params, window, false, T(0), nullptr, acts);
  const T* h = acts.hidden().row(params.dims.n - 1);
  if (!sampler) return argmax_item(h, params);
  std::vector<T> logits = score_items(h, params);
  std::span<T> real(logits.data() + 1, logits.size() - 1);
  for (T& v : real) v = static_cast<T>(static_cast<double>(v) / temperature);
  softmax_inplace(real);
  double u = sampler->uniform();
  for (size_t i = 0; i < real.size(); ++i) {
    u -= static_cast<double>(real[i]);
    if (u <= 0.0) return static_cast<int>(i) + 1;
  }
  return params.dims.vocab_size;
}

template <typename T>
int generate_prior_item(const ModelParams<T>& params, std::span<const int> items) {
  Activations<T> acts;
  return generate_prior_item(params, items, acts);
}

// Recursive prefix construction: each generated item is prepended and takes
// part in the next generation step.
template <typename T>
AugmentedSequence augment_sequence(const ModelParams<T>& params, const Sequence& seq, int k,
                                   Activations<T>& acts, Rng* sampler = nullptr,
                                   double temperature = 1.0) {
  AugmentedSequence out{seq.user_id, seq.items, k};
  for (int step = 0; step < k; ++step) {
    const int v = generate_prior_item(params, out.items, acts, sampler, temperature);
    out.items.insert(out.items.begin(), v);
  }
  return out;
}

template <typename T>
AugmentedSequence augment_sequence(const ModelParams<T>& params, const Sequence& seq, int k) {
  Activations<T> acts;
  return augment_sequence(params, seq, k, acts);
}

// Sequences of length <= m get k pseudo-prior items; longer ones pass through
// untouched with prefix_len 0. Order is preserved and params are never
// mutated; generation parallelizes across sequences.
template <typename T>
std::vector<AugmentedSequence> augment_corpus(const ModelParams<T>& params,
                                              const std::vector<Sequence>& corpus,
                                              const AugmentConfig& cfg) {
  cfg.validate();
  std::vector<AugmentedSequence> out(corpus.size());
  const int count = static_cast<int>(corpus.size());
#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    Activations<T> acts;
#ifdef _OPENMP
#pragma omp for schedule(dynamic, 16)
#endif
    for (int i = 0; i < count; ++i) {
      const Sequence& seq = corpus[i];
      if (static_cast<int>(seq.items.size()) <= cfg.m && cfg.k > 0) {
        if (cfg.greedy) {
          out[i] = augment_sequence(params, seq, cfg.k, acts);
        } else {
          Rng sampler(substream_seed(cfg.seed, "augment-sample", static_cast<uint64_t>(seq.user_id)));
          out[i] = augment_sequence(params, seq, cfg.k, acts, &sampler, cfg.temperature);
        }
      } else {
        out[i] = {seq.user_id, seq.items, 0};
      }
    }
  }
  return out;
}

}  // namespace asrep
