#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "asrep/dataset.hpp"
#include "asrep/encoder.hpp"
#include "asrep/rng.hpp"

namespace asrep {

struct RankedCase {
  int user_id = 0;
  int rank = 0;              // 1 is best, among 1 + negatives candidates
  int original_seq_len = 0;  // train-prefix length, keys the length buckets
};

struct BucketReport {
  std::string label;
  int min_len = 0;
  int max_len = 0;  // 0 means unbounded
  int cases = 0;
  double recall_at_5 = 0.0;
  double ndcg_at_5 = 0.0;
  double mrr = 0.0;
};

struct LengthPoint {
  int length = 0;
  int cases = 0;
  double recall_at_5 = 0.0;
};

struct EvalReport {
  int cases = 0;
  double recall_at_5 = 0.0;
  double ndcg_at_5 = 0.0;
  double mrr = 0.0;
  std::vector<BucketReport> buckets;     // [1-7], [8-19], [20+]
  std::vector<LengthPoint> per_length;   // fine-grained series
};

enum class EvalSplit { validation, test };

struct EvalConfig {
  EvalSplit split = EvalSplit::test;
  uint64_t seed = 42;
  int negatives = 100;
  // Use the augmented corpus rows (pseudo prefix + train items) as inference
  // context for users whose train sequence qualified for augmentation.
  bool augmented_inference = false;
  // 0 evaluates every user; otherwise a seeded subsample of this many users
  // (used for cheap per-epoch validation probes).
  int max_users = 0;
};

// count distinct items uniform over the vocabulary, excluding everything in
// exclude (the user's full sequence plus the ground truth).
std::vector<int> sample_negatives(const std::vector<int>& exclude, int count, int vocab_size,
                                  Rng& rng);

// Pessimistic rank: 1 + number of other candidates scoring >= the truth.
template <typename Score>
int pessimistic_rank(Score gt_score, std::span<const Score> other_scores) {
  int rank = 1;
  for (Score s : other_scores) {
    if (s >= gt_score) ++rank;
  }
  return rank;
}

EvalReport compute_metrics(std::span<const RankedCase> cases);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_per_length_csv(const EvalReport& report, const std::string& path);

// Scores ground truth + negatives from the encoder's last-position hidden
// state; ties are counted against the ground truth.
template <typename T>
RankedCase rank_candidates(const ModelParams<T>& params, std::span<const int> window,
                           int ground_truth, std::span<const int> negatives,
                           Activations<T>& acts, int original_seq_len = 0, int user_id = 0) {
  encode_forward(params, window, false, T(0), nullptr, acts);
  const T* h = acts.hidden().row(params.dims.n - 1);
  const T gt_score = detail::dot(h, params.item_row(ground_truth), params.dims.d);
  int rank = 1;
  for (int neg : negatives) {
    if (detail::dot(h, params.item_row(neg), params.dims.d) >= gt_score) ++rank;
  }
  return {user_id, rank, original_seq_len};
}

// Leave-one-out evaluation over a split. Validation ranks the held-out
// second-to-last item against the train prefix; test appends the validation
// item to the window first (standard chaining). Negatives come from per-user
// substreams keyed only by (seed, split, user), so two models evaluated with
// the same seed rank against identical candidate sets. aug, when given, must
// be index-aligned with corpus.train.
template <typename T>
EvalReport evaluate(const ModelParams<T>& params, const SplitCorpus& corpus,
                    const std::vector<AugmentedSequence>* aug, const EvalConfig& cfg) {
  if (corpus.train.empty()) throw std::invalid_argument("evaluate: empty split corpus");
  if (aug && aug->size() != corpus.train.size()) {
    throw std::invalid_argument("evaluate: augmented corpus size mismatch");
  }
  std::vector<uint32_t> users(corpus.train.size());
  for (size_t i = 0; i < users.size(); ++i) users[i] = static_cast<uint32_t>(i);
  if (cfg.max_users > 0 && cfg.max_users < static_cast<int>(users.size())) {
    Rng pick(substream_seed(cfg.seed, "eval-subsample"));
    shuffle(users, pick);
    users.resize(cfg.max_users);
  }
  const char* split_tag = cfg.split == EvalSplit::validation ? "negs-valid" : "negs-test";
  std::vector<RankedCase> cases(users.size());
  const int count = static_cast<int>(users.size());
#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    Activations<T> acts;
    std::vector<int> history;
    std::vector<int> exclude;
#ifdef _OPENMP
#pragma omp for schedule(dynamic, 64)
#endif
    for (int i = 0; i < count; ++i) {
      const size_t u = users[i];
      const Sequence& train_seq = corpus.train[u];
      const bool use_aug = cfg.augmented_inference && aug && (*aug)[u].prefix_len > 0;
      const std::vector<int>& base = use_aug ? (*aug)[u].items : train_seq.items;
      history.assign(base.begin(), base.end());
      int ground_truth = corpus.valid_target[u];
      if (cfg.split == EvalSplit::test) {
        history.push_back(corpus.valid_target[u]);
        ground_truth = corpus.test_target[u];
      }
      exclude.assign(train_seq.items.begin(), train_seq.items.end());
      exclude.push_back(corpus.valid_target[u]);
      exclude.push_back(corpus.test_target[u]);
      Rng neg_rng(substream_seed(cfg.seed, split_tag, static_cast<uint64_t>(train_seq.user_id)));
      const std::vector<int> negatives =
          sample_negatives(exclude, cfg.negatives, params.dims.vocab_size, neg_rng);
      const std::vector<int> window = pad_truncate(history, params.dims.n);
      cases[i] = rank_candidates(params, window, ground_truth, negatives, acts,
                                 static_cast<int>(train_seq.items.size()), train_seq.user_id);
    }
  }
  return compute_metrics(cases);
}

}  // namespace asrep
