#include "asrep/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "asrep/augmentation.hpp"
#include "asrep/checkpoint.hpp"
#include "asrep/training.hpp"

namespace fs = std::filesystem;

namespace asrep {

namespace {

using Real = float;

uint64_t fnv1a64_update(uint64_t h, const char* data, size_t len) {
  for (size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::string fmt_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: expected a boolean, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::istringstream in(v);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out << ',';
    out << v[i];
  }
  return out.str();
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

struct StageTimer {
  RunManifest& manifest;
  std::string name;
  std::chrono::steady_clock::time_point begin = std::chrono::steady_clock::now();
  StageTimer(RunManifest& m, std::string stage) : manifest(m), name(std::move(stage)) {}
  ~StageTimer() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
    manifest.stage_seconds.emplace_back(name, secs);
  }
};

void add_artifact(RunManifest& manifest, const std::string& name, const std::string& path,
                  bool diagnostic = false) {
  manifest.artifacts.push_back({name, path, file_checksum(path), diagnostic});
}

void write_manifest(RunManifest& manifest, const std::string& path) {
  uint64_t combined = 0xcbf29ce484222325ULL;
  for (const ManifestEntry& e : manifest.artifacts) {
    if (e.diagnostic) continue;
    const std::string token = e.name + ":" + hex64(e.checksum) + ";";
    combined = fnv1a64_update(combined, token.data(), token.size());
  }
  manifest.content_hash = combined;
  std::ostringstream out;
  out << "[config]\n";
  for (const auto& [key, value] : manifest.config) out << key << " = " << value << '\n';
  out << "[artifacts]\n";
  for (const ManifestEntry& e : manifest.artifacts) {
    out << e.name << '\t' << e.path << '\t' << hex64(e.checksum) << '\n';
  }
  out << "[stages]\n";
  for (const auto& [name, secs] : manifest.stage_seconds) out << name << '\t' << secs << '\n';
  out << "[content]\n";
  out << "run_content_hash = " << hex64(manifest.content_hash) << '\n';
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("manifest: cannot open " + tmp);
    const std::string body = out.str();
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw std::runtime_error("manifest: write failed for " + tmp);
  }
  fs::rename(tmp, path);
  manifest.path = path;
}

void write_lengths_csv(const std::vector<Sequence>& sequences, const std::string& path) {
  std::map<int, int> hist;
  for (const Sequence& s : sequences) ++hist[static_cast<int>(s.items.size())];
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ingest: cannot open " + path);
  out << "length,sequence_count\n";
  for (const auto& [len, count] : hist) out << len << ',' << count << '\n';
}

// Reverse-view validation probe for pre-training: hold out each user's
// earliest item and rank it given the reversed remainder of the train prefix.
SplitCorpus reverse_probe_split(const SplitCorpus& split) {
  SplitCorpus rev;
  for (size_t i = 0; i < split.train.size(); ++i) {
    const Sequence& s = split.train[i];
    if (s.items.size() < 2) continue;
    Sequence r;
    r.user_id = s.user_id;
    r.items.assign(s.items.rbegin(), s.items.rend() - 1);
    rev.train.push_back(std::move(r));
    rev.valid_target.push_back(s.items.front());
    rev.test_target.push_back(s.items.front());
  }
  return rev;
}

ModelDims dims_from(const PipelineConfig& cfg, int vocab_size) {
  ModelDims dims;
  dims.vocab_size = vocab_size;
  dims.d = cfg.d;
  dims.n = cfg.n;
  dims.layers = cfg.layers;
  dims.heads = cfg.heads;
  dims.d_ff = cfg.d_ff > 0 ? cfg.d_ff : cfg.d;
  return dims;
}

void check_dims(const ModelDims& got, const ModelDims& want, const std::string& path) {
  if (got.vocab_size != want.vocab_size || got.d != want.d || got.n != want.n ||
      got.layers != want.layers || got.heads != want.heads || got.d_ff != want.d_ff) {
    throw std::runtime_error("checkpoint " + path + " does not match the configured dimensions");
  }
}

}  // namespace

uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_checksum: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64_update(h, buf, static_cast<size_t>(in.gcount()));
  }
  return h;
}

void PipelineConfig::validate() const {
  if (dataset_path.empty()) throw std::invalid_argument("config: dataset_path is required");
  if (format != "json-lines" && format != "tsv") {
    throw std::invalid_argument("config: format must be json-lines or tsv");
  }
  if (mode != "asrep" && mode != "re-train" && mode != "no-augment-baseline") {
    throw std::invalid_argument("config: mode must be asrep, re-train or no-augment-baseline");
  }
  if (n < 1 || d < 1 || layers < 0 || heads < 1) throw std::invalid_argument("config: bad model dims");
  if (d % heads != 0) throw std::invalid_argument("config: heads must divide d");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("config: dropout in [0,1)");
  if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be positive");
  if (pretrain_epochs < 1 || finetune_epochs < 1 || batch_size < 1) {
    throw std::invalid_argument("config: epochs and batch_size must be >= 1");
  }
  if (k < 0 || m < 1) throw std::invalid_argument("config: k >= 0 and m >= 1 required");
  if (eval_negatives < 1) throw std::invalid_argument("config: eval_negatives must be >= 1");
  if (out_dir.empty()) throw std::invalid_argument("config: out_dir is required");
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (key == "dataset_path") dataset_path = value;
  else if (key == "format") format = value;
  else if (key == "user_field") user_field = value;
  else if (key == "item_field") item_field = value;
  else if (key == "time_field") time_field = value;
  else if (key == "n") n = std::stoi(value);
  else if (key == "d") d = std::stoi(value);
  else if (key == "layers") layers = std::stoi(value);
  else if (key == "heads") heads = std::stoi(value);
  else if (key == "d_ff") d_ff = std::stoi(value);
  else if (key == "dropout") dropout = std::stod(value);
  else if (key == "learning_rate") learning_rate = std::stod(value);
  else if (key == "pretrain_epochs") pretrain_epochs = std::stoi(value);
  else if (key == "finetune_epochs") finetune_epochs = std::stoi(value);
  else if (key == "batch_size") batch_size = std::stoi(value);
  else if (key == "negatives_per_position") negatives_per_position = std::stoi(value);
  else if (key == "k") k = std::stoi(value);
  else if (key == "m") m = std::stoi(value);
  else if (key == "greedy_decoding") greedy_decoding = parse_bool(value);
  else if (key == "temperature") temperature = std::stod(value);
  else if (key == "mode") mode = value;
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "out_dir") out_dir = value;
  else if (key == "augmented_inference") augmented_inference = parse_bool(value);
  else if (key == "loss_on_pseudo") loss_on_pseudo = parse_bool(value);
  else if (key == "keep_best_valid") keep_best_valid = parse_bool(value);
  else if (key == "eval_negatives") eval_negatives = std::stoi(value);
  else if (key == "valid_sample_users") valid_sample_users = std::stoi(value);
  else if (key == "grad_chunks") grad_chunks = std::stoi(value);
  else if (key == "threads") threads = std::stoi(value);
  else if (key == "sweep_k") sweep_k = parse_int_list(value);
  else if (key == "sweep_m") sweep_m = parse_int_list(value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  PipelineConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: line " + std::to_string(line_no) + " of " + path +
                               " is not 'key = value'");
    }
    cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return cfg;
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::snapshot() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("dataset_path", dataset_path);
  kv.emplace_back("format", format);
  kv.emplace_back("user_field", user_field);
  kv.emplace_back("item_field", item_field);
  kv.emplace_back("time_field", time_field);
  kv.emplace_back("n", std::to_string(n));
  kv.emplace_back("d", std::to_string(d));
  kv.emplace_back("layers", std::to_string(layers));
  kv.emplace_back("heads", std::to_string(heads));
  kv.emplace_back("d_ff", std::to_string(d_ff));
  kv.emplace_back("dropout", fmt_double(dropout));
  kv.emplace_back("learning_rate", fmt_double(learning_rate));
  kv.emplace_back("pretrain_epochs", std::to_string(pretrain_epochs));
  kv.emplace_back("finetune_epochs", std::to_string(finetune_epochs));
  kv.emplace_back("batch_size", std::to_string(batch_size));
  kv.emplace_back("negatives_per_position", std::to_string(negatives_per_position));
  kv.emplace_back("k", std::to_string(k));
  kv.emplace_back("m", std::to_string(m));
  kv.emplace_back("greedy_decoding", greedy_decoding ? "true" : "false");
  kv.emplace_back("temperature", fmt_double(temperature));
  kv.emplace_back("mode", mode);
  kv.emplace_back("seed", std::to_string(seed));
  kv.emplace_back("out_dir", out_dir);
  kv.emplace_back("augmented_inference", augmented_inference ? "true" : "false");
  kv.emplace_back("loss_on_pseudo", loss_on_pseudo ? "true" : "false");
  kv.emplace_back("keep_best_valid", keep_best_valid ? "true" : "false");
  kv.emplace_back("eval_negatives", std::to_string(eval_negatives));
  kv.emplace_back("valid_sample_users", std::to_string(valid_sample_users));
  kv.emplace_back("grad_chunks", std::to_string(grad_chunks));
  kv.emplace_back("threads", std::to_string(threads));
  kv.emplace_back("sweep_k", join_ints(sweep_k));
  kv.emplace_back("sweep_m", join_ints(sweep_m));
  return kv;
}

namespace {

struct StageHashes {
  uint64_t dataset = 0;
  uint64_t pretrain = 0;
  uint64_t augment = 0;
  uint64_t model = 0;  // fine-tuned or baseline checkpoint
  uint64_t runjob = 0;
};

StageHashes stage_hashes(const PipelineConfig& cfg) {
  StageHashes h;
  const uint64_t content = file_checksum(cfg.dataset_path);
  h.dataset = fnv1a64(hex64(content) + "|" + cfg.format + "|" + cfg.user_field + "|" +
                      cfg.item_field + "|" + cfg.time_field);
  std::ostringstream model_key;
  model_key << "d=" << cfg.d << ";n=" << cfg.n << ";L=" << cfg.layers << ";h=" << cfg.heads
            << ";dff=" << (cfg.d_ff > 0 ? cfg.d_ff : cfg.d);
  std::ostringstream train_key;
  train_key << ";lr=" << fmt_double(cfg.learning_rate) << ";dropout=" << fmt_double(cfg.dropout)
            << ";batch=" << cfg.batch_size << ";negs=" << cfg.negatives_per_position
            << ";chunks=" << cfg.grad_chunks << ";seed=" << cfg.seed;
  h.pretrain = fnv1a64(hex64(h.dataset) + "|reverse|" + model_key.str() + train_key.str() +
                       ";epochs=" + std::to_string(cfg.pretrain_epochs));
  std::ostringstream aug_key;
  aug_key << hex64(h.pretrain) << "|augment;k=" << cfg.k << ";m=" << cfg.m
          << ";greedy=" << (cfg.greedy_decoding ? 1 : 0)
          << ";temperature=" << fmt_double(cfg.temperature);
  h.augment = fnv1a64(aug_key.str());
  std::ostringstream probe_key;
  probe_key << ";keep_best=" << (cfg.keep_best_valid ? 1 : 0)
            << ";eval_negs=" << cfg.eval_negatives << ";probe_users=" << cfg.valid_sample_users
            << ";aug_inference=" << (cfg.augmented_inference ? 1 : 0);
  if (cfg.mode == "no-augment-baseline") {
    h.model = fnv1a64(hex64(h.dataset) + "|forward-baseline|" + model_key.str() + train_key.str() +
                      ";epochs=" + std::to_string(cfg.finetune_epochs) + probe_key.str());
  } else {
    const std::string init = cfg.mode == "asrep" ? "warm" : "fresh";
    h.model = fnv1a64(hex64(h.augment) + "|finetune-" + init + "|" + train_key.str() +
                      ";epochs=" + std::to_string(cfg.finetune_epochs) +
                      ";loss_on_pseudo=" + (cfg.loss_on_pseudo ? "1" : "0") + probe_key.str());
  }
  std::ostringstream run_key;
  for (const auto& [key, value] : cfg.snapshot()) {
    if (key == "out_dir" || key == "threads" || key == "sweep_k" || key == "sweep_m") continue;
    run_key << key << '=' << value << ';';
  }
  run_key << "dataset=" << hex64(h.dataset);
  h.runjob = fnv1a64(run_key.str());
  return h;
}

}  // namespace

RunResult run(const PipelineConfig& cfg, Stage until) {
  cfg.validate();
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
  fs::create_directories(cfg.out_dir);
  RunResult result;
  RunManifest& manifest = result.manifest;
  manifest.config = cfg.snapshot();
  const StageHashes hashes = stage_hashes(cfg);
  const std::string out = cfg.out_dir + "/";
  const std::string manifest_path = out + "manifest-" + hex64(hashes.runjob) + ".txt";

  // ingest
  const std::string vocab_path = out + "vocab-" + hex64(hashes.dataset) + ".tsv";
  const std::string corpus_path = out + "corpus-" + hex64(hashes.dataset) + ".tsv";
  const std::string lengths_path = out + "lengths-" + hex64(hashes.dataset) + ".csv";
  Vocabulary vocab;
  std::vector<Sequence> sequences;
  {
    StageTimer timer(manifest, "ingest");
    if (fs::exists(vocab_path) && fs::exists(corpus_path)) {
      vocab = load_vocabulary(vocab_path);
      for (const AugmentedSequence& row : load_corpus(corpus_path)) {
        sequences.push_back({row.user_id, row.items});
      }
    } else {
      ParseOptions opts;
      opts.format = cfg.format == "tsv" ? InputFormat::tsv : InputFormat::json_lines;
      opts.user_field = cfg.user_field;
      opts.item_field = cfg.item_field;
      opts.time_field = cfg.time_field;
      const std::vector<Interaction> interactions =
          parse_interactions_file(cfg.dataset_path, opts);
      BuiltCorpus built = build_sequences(interactions);
      vocab = std::move(built.vocab);
      sequences = std::move(built.sequences);
      save_vocabulary(vocab, vocab_path);
      save_corpus(as_augmented(sequences), corpus_path);
      write_lengths_csv(sequences, lengths_path);
    }
  }
  add_artifact(manifest, "vocab", vocab_path);
  add_artifact(manifest, "corpus", corpus_path);
  if (fs::exists(lengths_path)) add_artifact(manifest, "length_histogram", lengths_path);
  const SplitCorpus split = split_leave_one_out(sequences);
  if (split.train.empty()) throw std::runtime_error("run: no usable sequences after splitting");
  const ModelDims dims = dims_from(cfg, vocab.size());
  if (until == Stage::ingest) {
    write_manifest(manifest, manifest_path);
    return result;
  }

  const bool baseline = cfg.mode == "no-augment-baseline";
  ModelParams<Real> pretrained;
  if (!baseline) {
    const std::string ckpt = out + "pretrain-" + hex64(hashes.pretrain) + ".ckpt";
    const std::string log = out + "pretrain-log-" + hex64(hashes.pretrain) + ".csv";
    StageTimer timer(manifest, "pretrain");
    if (fs::exists(ckpt)) {
      pretrained = load_checkpoint<Real>(ckpt);
      check_dims(pretrained.dims, dims, ckpt);
    } else {
      ModelParams<Real> params = ModelParams<Real>::make(dims);
      params.init_random(substream_seed(cfg.seed, "pretrain-init"));
      const SplitCorpus probe = reverse_probe_split(split);
      EvalConfig probe_cfg;
      probe_cfg.split = EvalSplit::validation;
      probe_cfg.seed = cfg.seed;
      probe_cfg.negatives = cfg.eval_negatives;
      probe_cfg.max_users = cfg.valid_sample_users;
      TrainConfig tc;
      tc.direction = Direction::reverse;
      tc.epochs = cfg.pretrain_epochs;
      tc.batch_size = cfg.batch_size;
      tc.learning_rate = cfg.learning_rate;
      tc.dropout = cfg.dropout;
      tc.negatives_per_position = cfg.negatives_per_position;
      tc.seed = substream_seed(cfg.seed, "pretrain");
      tc.keep_best_valid = false;  // augmentation reads the final epoch
      tc.grad_chunks = cfg.grad_chunks;
      tc.epoch_log_path = log;
      std::function<double(const ModelParams<Real>&)> valid_fn;
      if (!probe.train.empty()) {
        valid_fn = [&](const ModelParams<Real>& p) {
          return evaluate(p, probe, nullptr, probe_cfg).recall_at_5;
        };
      }
      TrainResult<Real> trained =
          train(as_augmented(split.train), std::move(params), tc, valid_fn);
      pretrained = std::move(trained.params);
      save_checkpoint(pretrained, ckpt);
    }
    add_artifact(manifest, "pretrain_checkpoint", ckpt);
    if (fs::exists(log)) add_artifact(manifest, "pretrain_log", log, true);
  }
  if (until == Stage::pretrain) {
    write_manifest(manifest, manifest_path);
    return result;
  }

  std::vector<AugmentedSequence> train_rows;
  if (!baseline) {
    const std::string aug_path = out + "augmented-" + hex64(hashes.augment) + ".tsv";
    StageTimer timer(manifest, "augment");
    if (fs::exists(aug_path)) {
      train_rows = load_corpus(aug_path);
      if (train_rows.size() != split.train.size()) {
        throw std::runtime_error("run: augmented corpus " + aug_path +
                                 " does not match the split (stale artifact?)");
      }
    } else {
      AugmentConfig ac;
      ac.k = cfg.k;
      ac.m = cfg.m;
      ac.greedy = cfg.greedy_decoding;
      ac.temperature = cfg.temperature;
      ac.seed = cfg.seed;
      train_rows = augment_corpus(pretrained, split.train, ac);
      save_corpus(train_rows, aug_path);
    }
    add_artifact(manifest, "augmented_corpus", aug_path);
  } else {
    train_rows = as_augmented(split.train);
  }
  if (until == Stage::augment) {
    write_manifest(manifest, manifest_path);
    return result;
  }

  const std::vector<AugmentedSequence>* eval_aug = baseline ? nullptr : &train_rows;
  const bool aug_inference = !baseline && cfg.augmented_inference;
  const std::string model_path = out + "model-" + hex64(hashes.model) + ".ckpt";
  const std::string train_log = out + "train-log-" + hex64(hashes.model) + ".csv";
  ModelParams<Real> model;
  {
    StageTimer timer(manifest, baseline ? "train" : "finetune");
    if (fs::exists(model_path)) {
      model = load_checkpoint<Real>(model_path);
      check_dims(model.dims, dims, model_path);
    } else {
      ModelParams<Real> params;
      if (cfg.mode == "asrep") {
        params = pretrained;  // warm start, fresh optimizer
      } else {
        params = ModelParams<Real>::make(dims);
        params.init_random(substream_seed(cfg.seed, "finetune-init"));
      }
      EvalConfig probe_cfg;
      probe_cfg.split = EvalSplit::validation;
      probe_cfg.seed = cfg.seed;
      probe_cfg.negatives = cfg.eval_negatives;
      probe_cfg.augmented_inference = aug_inference;
      probe_cfg.max_users = cfg.valid_sample_users;
      TrainConfig tc;
      tc.direction = Direction::forward;
      tc.epochs = cfg.finetune_epochs;
      tc.batch_size = cfg.batch_size;
      tc.learning_rate = cfg.learning_rate;
      tc.dropout = cfg.dropout;
      tc.negatives_per_position = cfg.negatives_per_position;
      tc.seed = substream_seed(cfg.seed, "finetune");
      tc.keep_best_valid = cfg.keep_best_valid;
      tc.loss_on_pseudo = cfg.loss_on_pseudo;
      tc.grad_chunks = cfg.grad_chunks;
      tc.epoch_log_path = train_log;
      const std::function<double(const ModelParams<Real>&)> valid_fn =
          [&](const ModelParams<Real>& p) {
            return evaluate(p, split, eval_aug, probe_cfg).recall_at_5;
          };
      TrainResult<Real> trained = train(train_rows, std::move(params), tc, valid_fn);
      model = std::move(trained.params);
      save_checkpoint(model, model_path);
    }
  }
  add_artifact(manifest, "model_checkpoint", model_path);
  if (fs::exists(train_log)) add_artifact(manifest, "train_log", train_log, true);
  result.model_checkpoint = model_path;
  if (until == Stage::finetune) {
    write_manifest(manifest, manifest_path);
    return result;
  }

  const std::string report_valid_path = out + "report-valid-" + hex64(hashes.runjob) + ".csv";
  const std::string report_test_path = out + "report-test-" + hex64(hashes.runjob) + ".csv";
  const std::string per_length_path = out + "per-length-test-" + hex64(hashes.runjob) + ".csv";
  {
    StageTimer timer(manifest, "evaluate");
    EvalConfig ec;
    ec.seed = cfg.seed;
    ec.negatives = cfg.eval_negatives;
    ec.augmented_inference = aug_inference;
    ec.split = EvalSplit::validation;
    result.valid_report = evaluate(model, split, eval_aug, ec);
    ec.split = EvalSplit::test;
    result.test_report = evaluate(model, split, eval_aug, ec);
    write_report_csv(result.valid_report, report_valid_path);
    write_report_csv(result.test_report, report_test_path);
    write_per_length_csv(result.test_report, per_length_path);
  }
  add_artifact(manifest, "report_valid", report_valid_path);
  add_artifact(manifest, "report_test", report_test_path);
  add_artifact(manifest, "per_length_test", per_length_path);
  write_manifest(manifest, manifest_path);
  return result;
}

std::string sweep(const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.mode == "no-augment-baseline") {
    throw std::invalid_argument("sweep: meaningless for the no-augment baseline");
  }
  fs::create_directories(cfg.out_dir);
  std::ostringstream rows;
  rows << "k,m,valid_recall@5,test_recall@5,test_ndcg@5,test_mrr\n";
  uint64_t grid_hash = 0xcbf29ce484222325ULL;
  for (int m : cfg.sweep_m) {
    for (int k : cfg.sweep_k) {
      PipelineConfig point = cfg;
      point.k = k;
      point.m = m;
      const RunResult res = run(point);
      rows << k << ',' << m << ',' << res.valid_report.recall_at_5 << ','
           << res.test_report.recall_at_5 << ',' << res.test_report.ndcg_at_5 << ','
           << res.test_report.mrr << '\n';
      const std::string token = hex64(res.manifest.content_hash);
      grid_hash = fnv1a64_update(grid_hash, token.data(), token.size());
    }
  }
  const std::string path = cfg.out_dir + "/sweep-" + hex64(grid_hash) + ".csv";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("sweep: cannot open " + path);
  out << rows.str();
  return path;
}

}  // namespace asrep
