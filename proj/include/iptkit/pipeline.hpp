#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iptkit/decode.hpp"
#include "iptkit/encoder.hpp"
#include "iptkit/heads.hpp"
#include "iptkit/metrics.hpp"
#include "iptkit/tokenizer.hpp"
#include "iptkit/treebank.hpp"

namespace iptkit {

enum class TrainMode { standard, adapter };

struct TrainSchedule {
  std::size_t max_epochs = 30;
  std::size_t batch_size = 8;
  std::size_t eval_every = 250;  // U: update steps between dev measurements
  std::size_t patience = 10;     // measurements without improvement
  double lr = 1e-5;
  TrainMode mode = TrainMode::standard;

  void validate() const;
};

/// True iff the last `patience` measurements hold no value strictly below
/// the best measurement that precedes them.
bool should_stop(const std::vector<double>& dev_loss_history, std::size_t patience = 10);

/// Deterministic child seed for a named stage.
std::uint64_t fork_seed(std::uint64_t master, std::string_view tag);

// ---- stage tasks --------------------------------------------------------

/// One intermediate or downstream objective: owns its data, attaches its
/// head, and produces per-example training losses and a dev loss.
class StageTask {
 public:
  virtual ~StageTask() = default;
  virtual std::string head() const = 0;
  /// Registers the head on `model` unless it is already present.
  virtual void attach(Model& model, Rng& rng) const = 0;
  virtual std::size_t train_size() const = 0;
  virtual std::size_t dev_size() const = 0;
  virtual Var train_loss(ForwardPass& pass, std::size_t index) = 0;
  /// Mean eval-mode loss over the dev split.
  virtual double dev_loss(const Model& model) const = 0;
};

struct ParseExample {
  Encoding encoding;
  std::vector<std::size_t> heads;
  std::vector<std::size_t> rels;
};

/// Tokenizes gold sentences. Labels missing from `labels` map to its
/// unknown slot. Throws when a sentence exceeds `max_len` subwords.
std::vector<ParseExample> make_parse_examples(const std::vector<Sentence>& sentences,
                                              const Vocab& vocab, const LabelInventory& labels,
                                              std::size_t max_len);

class ParseTask : public StageTask {
 public:
  ParseTask(std::vector<ParseExample> train, std::vector<ParseExample> dev,
            std::size_t num_classes);
  std::string head() const override { return "parse"; }
  void attach(Model& model, Rng& rng) const override;
  std::size_t train_size() const override { return train_.size(); }
  std::size_t dev_size() const override { return dev_.size(); }
  Var train_loss(ForwardPass& pass, std::size_t index) override;
  double dev_loss(const Model& model) const override;

 private:
  std::vector<ParseExample> train_, dev_;
  std::size_t num_classes_;
};

/// Masks drawn from a per-sentence seed derived from `seed` and the index,
/// so they are identical on every call.
std::vector<MlmBatch> fixed_masks(const std::vector<std::vector<int>>& ids, double rate,
                                  std::uint64_t seed);

struct MlmEval {
  double loss = 0.0;
  double accuracy = 0.0;  // percent over all masked positions
};
MlmEval mlm_evaluate(const Model& model, const std::vector<MlmBatch>& batches);

/// Training masks are redrawn on every visit; dev masks are fixed.
class MlmTask : public StageTask {
 public:
  MlmTask(std::vector<std::vector<int>> train, std::vector<std::vector<int>> dev, double rate,
          std::uint64_t dev_mask_seed);
  std::string head() const override { return "mlm"; }
  void attach(Model& model, Rng& rng) const override;
  std::size_t train_size() const override { return train_.size(); }
  std::size_t dev_size() const override { return dev_.size(); }
  Var train_loss(ForwardPass& pass, std::size_t index) override;
  double dev_loss(const Model& model) const override;

  const std::vector<MlmBatch>& dev_masks() const noexcept { return dev_masks_; }
  /// Masks used by the most recent train_loss call.
  const MlmBatch& last_train_mask() const noexcept { return last_; }

 private:
  std::vector<std::vector<int>> train_, dev_;
  std::vector<MlmBatch> dev_masks_;
  double rate_;
  MlmBatch last_;
};

enum class Split { train, dev, test };

/// A classification task scored by accuracy.
class DownstreamTask : public StageTask {
 public:
  virtual std::string name() const = 0;
  virtual double evaluate(const Model& model, Split split) const = 0;
};

struct SeqcExample {
  PairEncoding input;
  std::size_t label = 0;
};

/// JSON-lines rows {text_a, text_b?, label}.
std::vector<SeqcExample> make_seqc_examples(const std::vector<nlohmann::json>& rows,
                                            const Vocab& vocab, std::size_t num_classes,
                                            std::size_t max_len);

class SeqcTask : public DownstreamTask {
 public:
  SeqcTask(std::vector<SeqcExample> train, std::vector<SeqcExample> dev,
           std::vector<SeqcExample> test, std::size_t num_classes);
  std::string head() const override { return "seqc"; }
  std::string name() const override { return "seqc"; }
  void attach(Model& model, Rng& rng) const override;
  std::size_t train_size() const override { return train_.size(); }
  std::size_t dev_size() const override { return dev_.size(); }
  Var train_loss(ForwardPass& pass, std::size_t index) override;
  double dev_loss(const Model& model) const override;
  double evaluate(const Model& model, Split split) const override;

 private:
  std::vector<SeqcExample> train_, dev_, test_;
  std::size_t num_classes_;
};

struct MccExample {
  std::vector<PairEncoding> answers;
  std::size_t correct = 0;
};

/// JSON-lines rows {premise, question?, answers: [...], correct}. The
/// premise and question form the first segment, each answer the second.
std::vector<MccExample> make_mcc_examples(const std::vector<nlohmann::json>& rows,
                                          const Vocab& vocab, std::size_t max_len);

class MccTask : public DownstreamTask {
 public:
  MccTask(std::vector<MccExample> train, std::vector<MccExample> dev, std::vector<MccExample> test);
  std::string head() const override { return "mcc"; }
  std::string name() const override { return "mcc"; }
  void attach(Model& model, Rng& rng) const override;
  std::size_t train_size() const override { return train_.size(); }
  std::size_t dev_size() const override { return dev_.size(); }
  Var train_loss(ForwardPass& pass, std::size_t index) override;
  double dev_loss(const Model& model) const override;
  double evaluate(const Model& model, Split split) const override;

 private:
  std::vector<MccExample> train_, dev_, test_;
};

// ---- training -----------------------------------------------------------

struct StageResult {
  std::vector<double> dev_history;  // step 0, every U steps, and the end
  std::vector<std::size_t> measured_at;
  std::size_t steps = 0;
  std::size_t best_step = 0;
  double best_dev_loss = 0.0;
  bool early_stopped = false;
  std::string rng_state;

  nlohmann::json to_json() const;
};

using Logger = std::function<void(const std::string&)>;

/// Trains `task`'s head (attached if missing) and, in standard mode, the
/// whole model; in adapter mode only adapters and heads. On return `model`
/// holds the parameters of the best dev measurement. Throws on empty
/// splits and aborts on a non-finite loss or gradient.
StageResult train_stage(Model& model, StageTask& task, const TrainSchedule& schedule,
                        std::uint64_t seed, const Logger& log = {});

// ---- checkpoints --------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string stage;  // base | ipt | ilmt | downstream
  Model model;
  Vocab vocab;
  std::optional<LabelInventory> labels;
  std::string rng_state;
  nlohmann::json info = nlohmann::json::object();
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- parser evaluation -------------------------------------------------

/// Copies of `gold` with predicted heads and relations.
std::vector<Sentence> parse_sentences(const Model& model, const Vocab& vocab,
                                      const LabelInventory& labels,
                                      const std::vector<Sentence>& gold, bool use_mst);

/// Predictions are scored against `gold`; tree_rate reflects the decoder.
ParseEval evaluate_parser(const Model& model, const Vocab& vocab, const LabelInventory& labels,
                          const std::vector<Sentence>& gold, bool use_mst);

// ---- sequences ----------------------------------------------------------

enum class Arm { none, parsing, mlm, adapter_parsing };
std::string arm_name(Arm arm);
Arm parse_arm(std::string_view name);

struct SequenceInputs {
  const Checkpoint* base = nullptr;  // encoder and vocabulary every arm starts from
  ParseTask* ipt = nullptr;
  MlmTask* ilmt = nullptr;
  DownstreamTask* downstream = nullptr;
  TrainSchedule intermediate;
  TrainSchedule downstream_schedule;
  AdapterConfig adapter;
  std::uint64_t seed = 0;
  Logger log;
};

struct ArmResult {
  Arm arm = Arm::none;
  std::optional<StageResult> intermediate;
  StageResult downstream;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::optional<Checkpoint> checkpoint;
};

/// Runs the arm's intermediate stage (if any) then the downstream stage.
/// Intermediate heads are dropped before downstream training, which always
/// updates every encoder parameter.
ArmResult run_sequence(Arm arm, const SequenceInputs& in);

/// One row per arm: arm,task,seed,config_hash,<stage stats>,dev_accuracy,test_accuracy.
std::string arms_csv(const std::vector<ArmResult>& results, const std::string& task,
                     std::uint64_t seed, const std::string& config_hash);

}  // namespace iptkit
