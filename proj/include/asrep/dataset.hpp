#pragma once

#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace asrep {

// One implicit-feedback event. Ratings and review text are dropped at parse
// time; the presence of the interaction is the signal.
struct Interaction {
  std::string user;
  std::string item;
  int64_t timestamp = 0;
};

enum class InputFormat { json_lines, tsv };

struct ParseOptions {
  InputFormat format = InputFormat::json_lines;
  // Field names for json-lines records; defaults match Amazon review dumps.
  std::string user_field = "reviewerID";
  std::string item_field = "asin";
  std::string time_field = "unixReviewTime";
};

struct ParseStats {
  size_t total_lines = 0;
  size_t malformed = 0;
  size_t parsed = 0;
};

// Dense item ids start at 1; id 0 is reserved for padding and maps to no item.
struct Vocabulary {
  std::unordered_map<std::string, int> item_to_id;
  std::vector<std::string> id_to_item{""};  // index 0 is the padding slot

  int size() const { return static_cast<int>(id_to_item.size()) - 1; }
};

struct Sequence {
  int user_id = 0;
  std::vector<int> items;
};

// A training-corpus row. prefix_len counts pseudo-prior items sitting ahead of
// the original sequence; raw corpora carry 0.
struct AugmentedSequence {
  int user_id = 0;
  std::vector<int> items;
  int prefix_len = 0;
};

struct BuiltCorpus {
  std::vector<Sequence> sequences;   // one per user, first-occurrence order
  std::vector<std::string> user_names;  // user_names[user_id] = raw user string
  Vocabulary vocab;
};

// Per-user leave-one-out split, parallel arrays indexed like train.
struct SplitCorpus {
  std::vector<Sequence> train;     // untouched prefix, length T_u - 2
  std::vector<int> valid_target;   // second-to-last item
  std::vector<int> test_target;    // last item
  size_t excluded = 0;             // sequences shorter than 3, dropped
};

// Reads one Interaction per valid line, preserving input order. Malformed
// lines are counted; more than half malformed is a fatal ingestion error.
std::vector<Interaction> parse_interactions(std::istream& in, const ParseOptions& opts,
                                            ParseStats* stats = nullptr);
std::vector<Interaction> parse_interactions_file(const std::string& path,
                                                 const ParseOptions& opts,
                                                 ParseStats* stats = nullptr);

// Groups interactions per user and sorts each user's items by timestamp
// ascending, ties broken by input order (stable sort). Dense item ids are
// assigned in first-occurrence order starting at 1; user ids likewise from 0.
BuiltCorpus build_sequences(const std::vector<Interaction>& interactions);

// Last item held out for test, second-to-last for validation. Sequences with
// fewer than 3 items are excluded and counted.
SplitCorpus split_leave_one_out(const std::vector<Sequence>& sequences);

// Keeps the last n items; shorter inputs are left-padded with id 0 so real
// items occupy the rightmost positions.
std::vector<int> pad_truncate(std::span<const int> items, int n);

// Text persistence: "raw_item<TAB>dense_id" per line.
void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

// Corpus rows as "user_id<TAB>prefix_len<TAB>comma-separated item ids".
void save_corpus(const std::vector<AugmentedSequence>& corpus, const std::string& path);
std::vector<AugmentedSequence> load_corpus(const std::string& path);

inline std::vector<AugmentedSequence> as_augmented(const std::vector<Sequence>& seqs) {
  std::vector<AugmentedSequence> out;
  out.reserve(seqs.size());
  for (const Sequence& s : seqs) out.push_back({s.user_id, s.items, 0});
  return out;
}

}  // namespace asrep
