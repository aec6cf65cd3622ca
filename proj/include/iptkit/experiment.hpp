#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iptkit/encoder.hpp"
#include "iptkit/pipeline.hpp"

namespace iptkit {

struct SplitPaths {
  std::filesystem::path train, dev, test;
};

struct TaskConfig {
  std::string kind = "seqc";  // seqc | mcc
  SplitPaths paths;
  std::size_t num_classes = 2;
};

/// Experiment file (JSON). Unknown keys are rejected by name. Relative
/// paths resolve against the file's directory.
struct ExperimentConfig {
  std::uint64_t seed = 13;
  std::filesystem::path output_dir;  // empty: $IPTKIT_OUTPUT_DIR, then "runs"
  std::optional<SplitPaths> treebank;
  std::optional<TaskConfig> task;
  std::optional<std::filesystem::path> base_checkpoint;
  std::size_t vocab_size = 1000;
  EncoderConfig encoder;  // vocab_size is taken from the tokenizer
  AdapterConfig adapter;
  TrainSchedule intermediate;
  TrainSchedule downstream;
  std::vector<Arm> arms{Arm::none, Arm::parsing, Arm::mlm};
  double mlm_rate = 0.15;
  bool use_mst = true;
  bool strict_train = true;  // invalid training trees are errors
  bool strict_eval = false;  // invalid dev/test trees are skipped with a warning

  /// Throws ConfigError naming the offending key or missing file.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// Hex FNV-1a of the canonical JSON form.
  std::string hash() const;
  std::filesystem::path resolved_output_dir() const;
};

/// Schedule keys: max_epochs, batch_size, eval_every, patience, lr, mode.
TrainSchedule schedule_from_json(const nlohmann::json& j, TrainSchedule defaults,
                                 const std::string& context);
nlohmann::json schedule_to_json(const TrainSchedule& s);

std::string fnv1a_hex(const std::string& bytes);

/// Reads and tree-filters a CoNLL-U file; `warnings` collects skipped
/// sentences in lenient mode.
std::vector<Sentence> load_treebank(const std::filesystem::path& path, bool strict,
                                    std::vector<std::string>* warnings = nullptr);

std::vector<nlohmann::json> load_jsonl(const std::filesystem::path& path);

/// Words used to learn the tokenizer: treebank training forms plus the text
/// fields of the downstream training file.
std::vector<std::vector<std::string>> tokenizer_corpus(const ExperimentConfig& cfg, bool strict);

/// The starting point of every stage: the configured base checkpoint, or a
/// fresh encoder over a tokenizer learned from `tokenizer_corpus`.
Checkpoint make_base(const ExperimentConfig& cfg);

/// One treebank split, strict or lenient according to whether it is the
/// training file. Skipped sentences are reported through `log`.
std::vector<Sentence> load_split(const ExperimentConfig& cfg, const std::filesystem::path& path,
                                 const Logger& log = {});

std::unique_ptr<DownstreamTask> load_downstream(const ExperimentConfig& cfg, const Vocab& vocab);

std::vector<std::vector<int>> encode_ids(const std::vector<Sentence>& sentences, const Vocab& vocab);

struct ArmsRun {
  std::vector<ArmResult> results;
  std::string csv;
  nlohmann::json report;  // seed, config_hash and per-arm summaries
};

/// Every configured arm from the same base checkpoint.
ArmsRun run_arms(const ExperimentConfig& cfg, const Logger& log = {});

}  // namespace iptkit
