#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "asrep/dataset.hpp"
#include "asrep/encoder.hpp"
#include "asrep/evaluation.hpp"

namespace asrep {

// Resolved run configuration. Defaults mirror the Beauty best set
// (n=100, d=128, L=2, dropout 0.7, M=18, k=15).
struct PipelineConfig {
  std::string dataset_path;
  std::string format = "json-lines";  // or "tsv"
  std::string user_field = "reviewerID";
  std::string item_field = "asin";
  std::string time_field = "unixReviewTime";

  int n = 100;
  int d = 128;
  int layers = 2;
  int heads = 1;
  int d_ff = 0;  // 0 means d

  double dropout = 0.7;
  double learning_rate = 1e-3;
  int pretrain_epochs = 100;
  int finetune_epochs = 100;
  int batch_size = 128;
  int negatives_per_position = 1;

  int k = 15;
  int m = 18;
  bool greedy_decoding = true;
  double temperature = 1.0;

  std::string mode = "asrep";  // asrep | re-train | no-augment-baseline
  uint64_t seed = 42;
  std::string out_dir = "out";

  bool augmented_inference = true;
  bool loss_on_pseudo = true;
  bool keep_best_valid = true;
  int eval_negatives = 100;
  int valid_sample_users = 10000;  // per-epoch validation probe size, 0 = all
  int grad_chunks = 16;
  int threads = 0;  // 0 keeps the OpenMP default

  std::vector<int> sweep_k = {1, 3, 5, 7, 9, 11, 13, 15, 17, 19};
  std::vector<int> sweep_m = {6, 10, 14, 18};

  void validate() const;
  void set(const std::string& key, const std::string& value);
  static PipelineConfig from_file(const std::string& path);
  // Resolved key/value view, also the manifest config snapshot.
  std::vector<std::pair<std::string, std::string>> snapshot() const;
};

struct ManifestEntry {
  std::string name;
  std::string path;
  uint64_t checksum = 0;   // FNV-1a 64 of the file bytes
  bool diagnostic = false;  // timing logs: listed but outside the content hash
};

struct RunManifest {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<ManifestEntry> artifacts;
  std::vector<std::pair<std::string, double>> stage_seconds;
  uint64_t content_hash = 0;  // combined over non-diagnostic artifact checksums
  std::string path;
};

struct RunResult {
  RunManifest manifest;
  EvalReport valid_report;
  EvalReport test_report;
  std::string model_checkpoint;
};

enum class Stage { ingest, pretrain, augment, finetune, evaluate };

// Executes the configured mode up to and including `until`, reusing any stage
// artifact already present in out_dir (content-addressed file names, so a
// changed config never collides with stale outputs). Always returns the
// manifest; reports are filled when `until` covers evaluation.
RunResult run(const PipelineConfig& cfg, Stage until = Stage::evaluate);

// Grid over (k, m) reusing the shared pre-trained checkpoint; emits one CSV
// row per combination and returns the CSV path.
std::string sweep(const PipelineConfig& cfg);

uint64_t file_checksum(const std::string& path);

}  // namespace asrep
