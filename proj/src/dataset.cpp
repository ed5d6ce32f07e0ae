#include "asrep/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace asrep {

namespace {

bool parse_int64(std::string_view s, int64_t* out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, *out);
  return ec == std::errc() && ptr == last;
}

bool parse_json_line(const std::string& line, const ParseOptions& opts, Interaction* out) {
  nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
  if (!rec.is_object()) return false;
  auto user = rec.find(opts.user_field);
  auto item = rec.find(opts.item_field);
  auto time = rec.find(opts.time_field);
  if (user == rec.end() || item == rec.end() || time == rec.end()) return false;
  if (!user->is_string() || !item->is_string()) return false;
  int64_t ts = 0;
  if (time->is_number_integer()) {
    ts = time->get<int64_t>();
  } else if (time->is_string() && parse_int64(time->get<std::string>(), &ts)) {
    // some dumps carry the timestamp as a string
  } else {
    return false;
  }
  out->user = user->get<std::string>();
  out->item = item->get<std::string>();
  out->timestamp = ts;
  return !out->user.empty() && !out->item.empty() && out->timestamp >= 0;
}

bool parse_tsv_line(const std::string& line, Interaction* out) {
  const size_t t1 = line.find('\t');
  if (t1 == std::string::npos) return false;
  const size_t t2 = line.find('\t', t1 + 1);
  if (t2 == std::string::npos) return false;
  size_t t3 = line.find('\t', t2 + 1);
  if (t3 == std::string::npos) t3 = line.size();
  out->user = line.substr(0, t1);
  out->item = line.substr(t1 + 1, t2 - t1 - 1);
  std::string_view ts_field(line.data() + t2 + 1, t3 - t2 - 1);
  while (!ts_field.empty() && (ts_field.back() == '\r' || ts_field.back() == ' ')) {
    ts_field.remove_suffix(1);
  }
  int64_t ts = 0;
  if (!parse_int64(ts_field, &ts)) return false;
  out->timestamp = ts;
  return !out->user.empty() && !out->item.empty() && ts >= 0;
}

}  // namespace

std::vector<Interaction> parse_interactions(std::istream& in, const ParseOptions& opts,
                                            ParseStats* stats) {
  if (!in.good()) throw std::runtime_error("parse_interactions: unreadable stream");
  std::vector<Interaction> out;
  ParseStats local;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++local.total_lines;
    Interaction rec;
    const bool ok = opts.format == InputFormat::json_lines ? parse_json_line(line, opts, &rec)
                                                           : parse_tsv_line(line, &rec);
    if (ok) {
      out.push_back(std::move(rec));
      ++local.parsed;
    } else {
      ++local.malformed;
    }
  }
  if (local.total_lines > 0 && local.malformed * 2 > local.total_lines) {
    throw std::runtime_error("parse_interactions: " + std::to_string(local.malformed) + " of " +
                             std::to_string(local.total_lines) +
                             " lines malformed; wrong format or field names?");
  }
  if (stats) *stats = local;
  return out;
}

std::vector<Interaction> parse_interactions_file(const std::string& path,
                                                 const ParseOptions& opts, ParseStats* stats) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_interactions: cannot open " + path);
  return parse_interactions(in, opts, stats);
}

BuiltCorpus build_sequences(const std::vector<Interaction>& interactions) {
  if (interactions.empty()) {
    throw std::invalid_argument("build_sequences: empty interaction list");
  }
  BuiltCorpus out;
  std::unordered_map<std::string, int> user_to_id;
  struct Event {
    int64_t timestamp;
    int item;
  };
  std::vector<std::vector<Event>> per_user;
  for (const Interaction& rec : interactions) {
    auto [uit, user_fresh] = user_to_id.try_emplace(rec.user, static_cast<int>(per_user.size()));
    if (user_fresh) {
      per_user.emplace_back();
      out.user_names.push_back(rec.user);
    }
    auto [iit, item_fresh] =
        out.vocab.item_to_id.try_emplace(rec.item, static_cast<int>(out.vocab.id_to_item.size()));
    if (item_fresh) out.vocab.id_to_item.push_back(rec.item);
    per_user[uit->second].push_back({rec.timestamp, iit->second});
  }
  out.sequences.resize(per_user.size());
  for (size_t u = 0; u < per_user.size(); ++u) {
    auto& events = per_user[u];
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    Sequence& seq = out.sequences[u];
    seq.user_id = static_cast<int>(u);
    seq.items.reserve(events.size());
    for (const Event& e : events) seq.items.push_back(e.item);
  }
  return out;
}

SplitCorpus split_leave_one_out(const std::vector<Sequence>& sequences) {
  SplitCorpus out;
  for (const Sequence& seq : sequences) {
    const size_t t = seq.items.size();
    if (t < 3) {
      ++out.excluded;
      continue;
    }
    Sequence prefix;
    prefix.user_id = seq.user_id;
    prefix.items.assign(seq.items.begin(), seq.items.end() - 2);
    out.train.push_back(std::move(prefix));
    out.valid_target.push_back(seq.items[t - 2]);
    out.test_target.push_back(seq.items[t - 1]);
  }
  return out;
}

std::vector<int> pad_truncate(std::span<const int> items, int n) {
  if (n < 1) throw std::invalid_argument("pad_truncate: n must be >= 1");
  std::vector<int> out(static_cast<size_t>(n), 0);
  const size_t len = items.size();
  if (len >= static_cast<size_t>(n)) {
    std::copy(items.end() - n, items.end(), out.begin());
  } else {
    std::copy(items.begin(), items.end(), out.begin() + (n - len));
  }
  return out;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_vocabulary: cannot open " + path);
  for (size_t id = 1; id < vocab.id_to_item.size(); ++id) {
    out << vocab.id_to_item[id] << '\t' << id << '\n';
  }
  if (!out) throw std::runtime_error("save_vocabulary: write failed for " + path);
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_vocabulary: cannot open " + path);
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("load_vocabulary: bad line in " + path);
    const std::string raw = line.substr(0, tab);
    int64_t id = 0;
    if (!parse_int64(std::string_view(line).substr(tab + 1), &id) ||
        id != static_cast<int64_t>(vocab.id_to_item.size())) {
      throw std::runtime_error("load_vocabulary: non-contiguous ids in " + path);
    }
    vocab.item_to_id.emplace(raw, static_cast<int>(id));
    vocab.id_to_item.push_back(raw);
  }
  return vocab;
}

void save_corpus(const std::vector<AugmentedSequence>& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_corpus: cannot open " + path);
  for (const AugmentedSequence& seq : corpus) {
    out << seq.user_id << '\t' << seq.prefix_len << '\t';
    for (size_t i = 0; i < seq.items.size(); ++i) {
      if (i) out << ',';
      out << seq.items[i];
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_corpus: write failed for " + path);
}

std::vector<AugmentedSequence> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
  std::vector<AugmentedSequence> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    AugmentedSequence seq;
    std::string ids;
    if (!(row >> seq.user_id >> seq.prefix_len >> ids)) {
      throw std::runtime_error("load_corpus: bad line in " + path);
    }
    size_t pos = 0;
    while (pos < ids.size()) {
      size_t comma = ids.find(',', pos);
      if (comma == std::string::npos) comma = ids.size();
      int64_t id = 0;
      if (!parse_int64(std::string_view(ids).substr(pos, comma - pos), &id)) {
        throw std::runtime_error("load_corpus: bad item id in " + path);
      }
      seq.items.push_back(static_cast<int>(id));
      pos = comma + 1;
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

}  // namespace asrep
