#include "asrep/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace asrep {

std::vector<int> sample_negatives(const std::vector<int>& exclude, int count, int vocab_size,
                                  Rng& rng) {
  std::unordered_set<int> taboo(exclude.begin(), exclude.end());
  if (vocab_size <= count + static_cast<int>(taboo.size())) {
    throw std::invalid_argument("sample_negatives: vocabulary too small for " +
                                std::to_string(count) + " negatives");
  }
  std::vector<int> out;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    const int draw = static_cast<int>(rng.below(static_cast<uint64_t>(vocab_size))) + 1;
    if (taboo.insert(draw).second) out.push_back(draw);
  }
  return out;
}

EvalReport compute_metrics(std::span<const RankedCase> cases) {
  if (cases.empty()) throw std::invalid_argument("compute_metrics: empty case list");
  EvalReport report;
  report.buckets = {{"1-7", 1, 7, 0, 0, 0, 0}, {"8-19", 8, 19, 0, 0, 0, 0}, {"20+", 20, 0, 0, 0, 0, 0}};
  std::map<int, std::pair<int, int>> by_length;  // length -> (cases, hits@5)
  auto accumulate = [](double& recall, double& ndcg, double& mrr, int rank) {
    if (rank <= 5) {
      recall += 1.0;
      ndcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
    }
    mrr += 1.0 / static_cast<double>(rank);
  };
  for (const RankedCase& c : cases) {
    if (c.rank < 1) throw std::invalid_argument("compute_metrics: rank must be >= 1");
    ++report.cases;
    accumulate(report.recall_at_5, report.ndcg_at_5, report.mrr, c.rank);
    for (BucketReport& b : report.buckets) {
      if (c.original_seq_len >= b.min_len && (b.max_len == 0 || c.original_seq_len <= b.max_len)) {
        ++b.cases;
        accumulate(b.recall_at_5, b.ndcg_at_5, b.mrr, c.rank);
      }
    }
    auto& lp = by_length[c.original_seq_len];
    ++lp.first;
    if (c.rank <= 5) ++lp.second;
  }
  report.recall_at_5 /= report.cases;
  report.ndcg_at_5 /= report.cases;
  report.mrr /= report.cases;
  for (BucketReport& b : report.buckets) {
    if (b.cases > 0) {
      b.recall_at_5 /= b.cases;
      b.ndcg_at_5 /= b.cases;
      b.mrr /= b.cases;
    }
  }
  for (const auto& [length, counts] : by_length) {
    report.per_length.push_back(
        {length, counts.first, static_cast<double>(counts.second) / counts.first});
  }
  return report;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_report_csv: cannot open " + path);
  out << "metric,value,bucket\n";
  auto emit = [&](const std::string& bucket, double recall, double ndcg, double mrr, int cases) {
    out << "recall@5," << recall << ',' << bucket << '\n';
    out << "ndcg@5," << ndcg << ',' << bucket << '\n';
    out << "mrr," << mrr << ',' << bucket << '\n';
    out << "cases," << cases << ',' << bucket << '\n';
  };
  emit("all", report.recall_at_5, report.ndcg_at_5, report.mrr, report.cases);
  for (const BucketReport& b : report.buckets) {
    emit(b.label, b.recall_at_5, b.ndcg_at_5, b.mrr, b.cases);
  }
  if (!out) throw std::runtime_error("write_report_csv: write failed for " + path);
}

void write_per_length_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_per_length_csv: cannot open " + path);
  out << "length,case_count,recall@5\n";
  for (const LengthPoint& p : report.per_length) {
    out << p.length << ',' << p.cases << ',' << p.recall_at_5 << '\n';
  }
  if (!out) throw std::runtime_error("write_per_length_csv: write failed for " + path);
}

}  // namespace asrep
