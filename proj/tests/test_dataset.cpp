#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "asrep/dataset.hpp"
#include "doctest.h"

using namespace asrep;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("json lines parsing keeps order and reads the amazon fields") {
  std::istringstream in(
      R"({"reviewerID": "u1", "asin": "itemA", "unixReviewTime": 100, "overall": 5.0})"
      "\n"
      R"({"reviewerID": "u2", "asin": "itemB", "unixReviewTime": "200"})"
      "\n"
      R"({"reviewerID": "u1", "asin": "itemC", "unixReviewTime": 50})"
      "\n");
  ParseStats stats;
  const std::vector<Interaction> rows = parse_interactions(in, ParseOptions{}, &stats);
  REQUIRE(rows.size() == 3);
  CHECK(stats.total_lines == 3);
  CHECK(stats.malformed == 0);
  CHECK(rows[0].user == "u1");
  CHECK(rows[0].item == "itemA");
  CHECK(rows[0].timestamp == 100);
  CHECK(rows[1].timestamp == 200);  // numeric string accepted
  CHECK(rows[2].item == "itemC");
}

TEST_CASE("json lines parsing skips malformed records but keeps count") {
  std::istringstream in(
      R"({"reviewerID": "u1", "asin": "a", "unixReviewTime": 1})"
      "\n"
      "not json at all\n"
      R"({"reviewerID": "u1", "unixReviewTime": 2})"
      "\n"
      "\n"  // blank lines are ignored, not malformed
      R"({"reviewerID": "u2", "asin": "b", "unixReviewTime": 3})"
      "\n");
  ParseStats stats;
  const std::vector<Interaction> rows = parse_interactions(in, ParseOptions{}, &stats);
  CHECK(rows.size() == 2);
  CHECK(stats.malformed == 2);
}

TEST_CASE("mostly malformed input is fatal") {
  std::istringstream in(
      "garbage\n"
      "more garbage\n"
      R"({"reviewerID": "u1", "asin": "a", "unixReviewTime": 1})"
      "\n");
  CHECK_THROWS_AS(parse_interactions(in, ParseOptions{}), std::runtime_error);
}

TEST_CASE("tsv parsing reads user, item, timestamp") {
  ParseOptions opts;
  opts.format = InputFormat::tsv;
  std::istringstream in(
      "u1\ta\t100\n"
      "u2\tb\t200\textra ignored\n"
      "u1\tc\t150\r\n");
  ParseStats stats;
  const std::vector<Interaction> rows = parse_interactions(in, opts, &stats);
  REQUIRE(rows.size() == 3);
  CHECK(stats.malformed == 0);
  CHECK(rows[1].user == "u2");
  CHECK(rows[2].timestamp == 150);
}

TEST_CASE("build_sequences assigns ids by first occurrence and sorts by time") {
  std::vector<Interaction> rows = {
      {"u1", "b", 20}, {"u2", "a", 5}, {"u1", "a", 10}, {"u1", "c", 30}, {"u2", "c", 50},
  };
  const BuiltCorpus built = build_sequences(rows);
  CHECK(built.vocab.size() == 3);
  // b first seen -> id 1, a -> 2, c -> 3.
  CHECK(built.vocab.item_to_id.at("b") == 1);
  CHECK(built.vocab.item_to_id.at("a") == 2);
  CHECK(built.vocab.item_to_id.at("c") == 3);
  CHECK(built.vocab.id_to_item[0].empty());
  REQUIRE(built.sequences.size() == 2);
  CHECK(built.user_names[0] == "u1");
  CHECK(built.user_names[1] == "u2");
  // u1 sorted by timestamp: a(10), b(20), c(30) -> ids 2, 1, 3.
  CHECK(built.sequences[0].items == std::vector<int>{2, 1, 3});
  CHECK(built.sequences[1].items == std::vector<int>{2, 3});
}

TEST_CASE("equal timestamps keep input order") {
  std::vector<Interaction> rows = {{"u", "x", 7}, {"u", "y", 7}, {"u", "z", 7}};
  const BuiltCorpus built = build_sequences(rows);
  CHECK(built.sequences[0].items == std::vector<int>{1, 2, 3});
}

TEST_CASE("leave-one-out split holds out the last two items") {
  std::vector<Sequence> seqs = {
      {0, {1, 2, 3, 4, 5}},
      {1, {6, 7}},  // too short, excluded
      {2, {8, 9, 10}},
  };
  const SplitCorpus split = split_leave_one_out(seqs);
  REQUIRE(split.train.size() == 2);
  CHECK(split.excluded == 1);
  CHECK(split.train[0].items == std::vector<int>{1, 2, 3});
  CHECK(split.valid_target[0] == 4);
  CHECK(split.test_target[0] == 5);
  CHECK(split.train[1].items == std::vector<int>{8});
  CHECK(split.valid_target[1] == 9);
  CHECK(split.test_target[1] == 10);
  CHECK(split.train[1].user_id == 2);
}

TEST_CASE("pad_truncate left-pads short input and keeps the most recent items") {
  const std::vector<int> items = {4, 5, 6};
  CHECK(pad_truncate(items, 5) == std::vector<int>{0, 0, 4, 5, 6});
  CHECK(pad_truncate(items, 3) == std::vector<int>{4, 5, 6});
  CHECK(pad_truncate(items, 2) == std::vector<int>{5, 6});
  CHECK(pad_truncate(std::vector<int>{}, 3) == std::vector<int>{0, 0, 0});
}

TEST_CASE("vocabulary round trips through disk") {
  Vocabulary vocab;
  vocab.item_to_id = {{"alpha", 1}, {"beta", 2}, {"gamma", 3}};
  vocab.id_to_item = {"", "alpha", "beta", "gamma"};
  const std::string path = temp_path("asrep_test_vocab.tsv");
  save_vocabulary(vocab, path);
  const Vocabulary loaded = load_vocabulary(path);
  CHECK(loaded.size() == 3);
  CHECK(loaded.item_to_id.at("beta") == 2);
  CHECK(loaded.id_to_item[3] == "gamma");
  std::remove(path.c_str());
}

TEST_CASE("corpus rows round trip with prefix lengths") {
  std::vector<AugmentedSequence> corpus = {
      {0, {5, 1, 2, 3}, 1},
      {1, {9}, 0},
      {7, {4, 4, 4, 4, 4}, 3},
  };
  const std::string path = temp_path("asrep_test_corpus.tsv");
  save_corpus(corpus, path);

  // The on-disk format is line oriented with comma-separated item ids.
  {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    CHECK(first == "0\t1\t5,1,2,3");
  }

  const std::vector<AugmentedSequence> loaded = load_corpus(path);
  REQUIRE(loaded.size() == 3);
  for (size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded[i].user_id == corpus[i].user_id);
    CHECK(loaded[i].prefix_len == corpus[i].prefix_len);
    CHECK(loaded[i].items == corpus[i].items);
  }
  std::remove(path.c_str());
}

TEST_CASE("as_augmented wraps raw sequences with zero prefix") {
  const std::vector<Sequence> seqs = {{3, {1, 2}}, {4, {5}}};
  const std::vector<AugmentedSequence> aug = as_augmented(seqs);
  REQUIRE(aug.size() == 2);
  CHECK(aug[0].user_id == 3);
  CHECK(aug[0].items == std::vector<int>{1, 2});
  CHECK(aug[0].prefix_len == 0);
  CHECK(aug[1].prefix_len == 0);
}
