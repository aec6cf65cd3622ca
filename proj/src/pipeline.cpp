#include "iptkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "iptkit/container.hpp"
#include "iptkit/error.hpp"
#include "iptkit/optim.hpp"
#include "iptkit/parser.hpp"

namespace iptkit {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class T>
const std::vector<T>& pick_split(Split s, const std::vector<T>& train, const std::vector<T>& dev,
                                 const std::vector<T>& test) {
  switch (s) {
    case Split::train: return train;
    case Split::dev: return dev;
    case Split::test: return test;
  }
  return test;
}

Var cls_vector(ForwardPass& pass, const PairEncoding& in) {
  std::vector<Var> states = encode(pass, in.ids, in.segments);
  return head_dropout(pass, slice_rows(states.back(), 0, 1));
}

Tensor eval_cls(const Model& model, const PairEncoding& in) {
  LayerStates states = encode_eval(model, in.ids, in.segments);
  const Tensor& top = states.back();
  Tensor cls({1, top.cols()});
  std::copy(top.data(), top.data() + top.cols(), cls.data());
  return cls;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::size_t require_index(const nlohmann::json& row, const char* key, std::size_t line) {
  if (!row.contains(key) || !row.at(key).is_number_integer() || row.at(key).get<long long>() < 0) {
    throw ParseError(std::string("field '") + key + "' must be a non-negative integer", line);
  }
  return row.at(key).get<std::size_t>();
}

std::string require_text(const nlohmann::json& row, const char* key, std::size_t line) {
  if (!row.contains(key) || !row.at(key).is_string()) {
    throw ParseError(std::string("field '") + key + "' must be a string", line);
  }
  return row.at(key).get<std::string>();
}

}  // namespace

void TrainSchedule::validate() const {
  if (batch_size == 0) throw ConfigError("schedule: batch_size must be at least 1");
  if (eval_every == 0) throw ConfigError("schedule: eval_every must be at least 1");
  if (patience == 0) throw ConfigError("schedule: patience must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("schedule: lr must be positive");
}

bool should_stop(const std::vector<double>& history, std::size_t patience) {
  if (patience == 0) throw ConfigError("should_stop: patience must be at least 1");
  if (history.size() <= patience) return false;
  const auto split = history.end() - static_cast<std::ptrdiff_t>(patience);
  const double best_before = *std::min_element(history.begin(), split);
  return std::none_of(split, history.end(), [&](double v) { return v < best_before; });
}

std::uint64_t fork_seed(std::uint64_t master, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master ^ splitmix64(h));
}

// ---- parsing ------------------------------------------------------------

std::vector<ParseExample> make_parse_examples(const std::vector<Sentence>& sentences,
                                              const Vocab& vocab, const LabelInventory& labels,
                                              std::size_t max_len) {
  std::vector<ParseExample> out;
  out.reserve(sentences.size());
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    ParseExample ex;
    ex.encoding = encode_words(sentences[s].forms(), vocab);
    if (ex.encoding.ids.size() > max_len) {
      throw Error("sentence " + std::to_string(s + 1) + " needs " +
                  std::to_string(ex.encoding.ids.size()) + " subwords, max_len is " +
                  std::to_string(max_len));
    }
    for (const auto& t : sentences[s].tokens) {
      ex.heads.push_back(static_cast<std::size_t>(t.head));
      ex.rels.push_back(labels.index_of(t.deprel));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

ParseTask::ParseTask(std::vector<ParseExample> train, std::vector<ParseExample> dev,
                     std::size_t num_classes)
    : train_(std::move(train)), dev_(std::move(dev)), num_classes_(num_classes) {}

void ParseTask::attach(Model& model, Rng& rng) const {
  if (model.params().has_prefix("parse/")) {
    if (parser_relations(model) != num_classes_) throw Error("parser head has the wrong label count");
    return;
  }
  attach_parser(model, num_classes_, rng);
}

Var ParseTask::train_loss(ForwardPass& pass, std::size_t index) {
  const ParseExample& ex = train_.at(index);
  ParseVars v = parser_forward(pass, ex.encoding);
  return parsing_loss(v.arc, v.rel, ex.heads, ex.rels);
}

double ParseTask::dev_loss(const Model& model) const {
  double total = 0.0;
  for (const auto& ex : dev_) {
    Tape tape;
    ForwardPass pass(tape, model, nullptr, TrainScope::all, Mode::eval, nullptr);
    ParseVars v = parser_forward(pass, ex.encoding);
    total += parsing_loss(v.arc, v.rel, ex.heads, ex.rels).value()[0];
  }
  return total / static_cast<double>(dev_.size());
}

// ---- masked LM ----------------------------------------------------------

std::vector<MlmBatch> fixed_masks(const std::vector<std::vector<int>>& ids, double rate,
                                  std::uint64_t seed) {
  std::vector<MlmBatch> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Rng rng(fork_seed(seed, "mask/" + std::to_string(i)));
    out.push_back(mlm_mask(ids[i], rate, rng));
  }
  return out;
}

MlmEval mlm_evaluate(const Model& model, const std::vector<MlmBatch>& batches) {
  if (batches.empty()) throw Error("mlm_evaluate: no sentences");
  MlmEval ev;
  std::size_t hits = 0, total = 0;
  for (const auto& b : batches) {
    Tape tape;
    ForwardPass pass(tape, model, nullptr, TrainScope::all, Mode::eval, nullptr);
    std::vector<Var> states = encode(pass, b.input_ids);
    Var logits = mlm_logits(pass, states.back(), b.positions);
    ev.loss += cross_entropy(logits, b.targets).value()[0];
    const auto pred = argmax_rows(logits.value());
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == b.targets[i];
    total += pred.size();
  }
  ev.loss /= static_cast<double>(batches.size());
  ev.accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(total);
  return ev;
}

MlmTask::MlmTask(std::vector<std::vector<int>> train, std::vector<std::vector<int>> dev,
                 double rate, std::uint64_t dev_mask_seed)
    : train_(std::move(train)), dev_(std::move(dev)), rate_(rate) {
  dev_masks_ = fixed_masks(dev_, rate_, dev_mask_seed);
}

void MlmTask::attach(Model& model, Rng& rng) const {
  if (!model.params().has_prefix("mlm/")) attach_mlm(model, rng);
}

Var MlmTask::train_loss(ForwardPass& pass, std::size_t index) {
  last_ = mlm_mask(train_.at(index), rate_, pass.rng());
  std::vector<Var> states = encode(pass, last_.input_ids);
  return mlm_loss(pass, head_dropout(pass, states.back()), last_);
}

double MlmTask::dev_loss(const Model& model) const { return mlm_evaluate(model, dev_masks_).loss; }

// ---- sequence classification -------------------------------------------

std::vector<SeqcExample> make_seqc_examples(const std::vector<nlohmann::json>& rows,
                                            const Vocab& vocab, std::size_t num_classes,
                                            std::size_t max_len) {
  std::vector<SeqcExample> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::size_t line = i + 1;
    SeqcExample ex;
    const auto a = split_words(require_text(row, "text_a", line));
    const auto b = row.contains("text_b") ? split_words(require_text(row, "text_b", line))
                                          : std::vector<std::string>{};
    ex.input = pair_encode(a, b, vocab, max_len);
    ex.label = require_index(row, "label", line);
    if (ex.label >= num_classes) {
      throw ParseError("label " + std::to_string(ex.label) + " outside [0, " +
                           std::to_string(num_classes - 1) + "]",
                       line);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

SeqcTask::SeqcTask(std::vector<SeqcExample> train, std::vector<SeqcExample> dev,
                   std::vector<SeqcExample> test, std::size_t num_classes)
    : train_(std::move(train)), dev_(std::move(dev)), test_(std::move(test)),
      num_classes_(num_classes) {}

void SeqcTask::attach(Model& model, Rng& rng) const {
  if (!model.params().has_prefix("seqc/")) attach_seqc(model, num_classes_, rng);
}

Var SeqcTask::train_loss(ForwardPass& pass, std::size_t index) {
  const SeqcExample& ex = train_.at(index);
  const std::size_t gold[] = {ex.label};
  return cross_entropy(seqc_logits(pass, cls_vector(pass, ex.input)), gold);
}

double SeqcTask::dev_loss(const Model& model) const {
  const Tensor& w = model.params().value("seqc/W");
  const Tensor& b = model.params().value("seqc/b");
  double total = 0.0;
  for (const auto& ex : dev_) {
    const auto p = seqc_forward(eval_cls(model, ex.input), w, b);
    total -= std::log(p.at(ex.label));
  }
  return total / static_cast<double>(dev_.size());
}

double SeqcTask::evaluate(const Model& model, Split split) const {
  const auto& data = pick_split(split, train_, dev_, test_);
  const Tensor& w = model.params().value("seqc/W");
  const Tensor& b = model.params().value("seqc/b");
  std::vector<std::size_t> pred, gold;
  for (const auto& ex : data) {
    const auto p = seqc_forward(eval_cls(model, ex.input), w, b);
    pred.push_back(static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
    gold.push_back(ex.label);
  }
  return accuracy(pred, gold);
}

// ---- multiple choice ----------------------------------------------------

std::vector<MccExample> make_mcc_examples(const std::vector<nlohmann::json>& rows,
                                          const Vocab& vocab, std::size_t max_len) {
  std::vector<MccExample> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::size_t line = i + 1;
    auto first = split_words(require_text(row, "premise", line));
    if (row.contains("question")) {
      for (auto& w : split_words(require_text(row, "question", line))) first.push_back(std::move(w));
    }
    if (!row.contains("answers") || !row.at("answers").is_array() || row.at("answers").size() < 2) {
      throw ParseError("field 'answers' must list at least two strings", line);
    }
    MccExample ex;
    for (const auto& ans : row.at("answers")) {
      if (!ans.is_string()) throw ParseError("answers must be strings", line);
      ex.answers.push_back(pair_encode(first, split_words(ans.get<std::string>()), vocab, max_len));
    }
    ex.correct = require_index(row, "correct", line);
    if (ex.correct >= ex.answers.size()) throw ParseError("'correct' indexes past the answers", line);
    out.push_back(std::move(ex));
  }
  return out;
}

MccTask::MccTask(std::vector<MccExample> train, std::vector<MccExample> dev,
                 std::vector<MccExample> test)
    : train_(std::move(train)), dev_(std::move(dev)), test_(std::move(test)) {}

void MccTask::attach(Model& model, Rng& rng) const {
  if (!model.params().has_prefix("mcc/")) attach_mcc(model, rng);
}

Var MccTask::train_loss(ForwardPass& pass, std::size_t index) {
  const MccExample& ex = train_.at(index);
  std::vector<Var> cls;
  for (const auto& a : ex.answers) cls.push_back(cls_vector(pass, a));
  const std::size_t gold[] = {ex.correct};
  return cross_entropy(mcc_logits(pass, cls), gold);
}

double MccTask::dev_loss(const Model& model) const {
  const auto& p = model.params();
  double total = 0.0;
  for (const auto& ex : dev_) {
    std::vector<Tensor> cls;
    for (const auto& a : ex.answers) cls.push_back(eval_cls(model, a));
    const auto prob = mcc_forward(cls, p.value("mcc/W_h"), p.value("mcc/b_h"), p.value("mcc/W_o"));
    total -= std::log(prob.at(ex.correct));
  }
  return total / static_cast<double>(dev_.size());
}

double MccTask::evaluate(const Model& model, Split split) const {
  const auto& data = pick_split(split, train_, dev_, test_);
  const auto& p = model.params();
  std::vector<std::size_t> pred, gold;
  for (const auto& ex : data) {
    std::vector<Tensor> cls;
    for (const auto& a : ex.answers) cls.push_back(eval_cls(model, a));
    const auto prob = mcc_forward(cls, p.value("mcc/W_h"), p.value("mcc/b_h"), p.value("mcc/W_o"));
    pred.push_back(
        static_cast<std::size_t>(std::max_element(prob.begin(), prob.end()) - prob.begin()));
    gold.push_back(ex.correct);
  }
  return accuracy(pred, gold);
}

// ---- training -----------------------------------------------------------

nlohmann::json StageResult::to_json() const {
  return {{"dev_history", dev_history}, {"measured_at", measured_at},
          {"steps", steps},             {"best_step", best_step},
          {"best_dev_loss", best_dev_loss}, {"early_stopped", early_stopped}};
}

StageResult train_stage(Model& model, StageTask& task, const TrainSchedule& schedule,
                        std::uint64_t seed, const Logger& log) {
  schedule.validate();
  if (task.train_size() == 0 || task.dev_size() == 0) {
    throw Error("train_stage(" + task.head() + "): empty train or dev split");
  }
  const bool adapter_mode = schedule.mode == TrainMode::adapter;
  if (adapter_mode && !model.adapters()) throw ConfigError("adapter mode needs injected adapters");
  const TrainScope scope = adapter_mode ? TrainScope::non_base : TrainScope::all;

  Rng rng(seed);
  task.attach(model, rng);
  Adam opt(AdamConfig{.lr = schedule.lr});
  Gradients grads(model.params());

  StageResult res;
  ParamStore best = model.params();
  auto measure = [&](std::size_t step) {
    const double d = task.dev_loss(model);
    if (!std::isfinite(d)) {
      throw Error("train_stage(" + task.head() + "): dev loss is " + std::to_string(d) +
                  " at step " + std::to_string(step));
    }
    res.dev_history.push_back(d);
    res.measured_at.push_back(step);
    if (res.dev_history.size() == 1 || d < res.best_dev_loss) {
      res.best_dev_loss = d;
      res.best_step = step;
      best = model.params();
    }
    if (log) log(task.head() + " step " + std::to_string(step) + " dev_loss " + fmt("%.6f", d));
  };

  measure(0);
  std::vector<std::size_t> order(task.train_size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < schedule.max_epochs && !res.early_stopped; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size() && !res.early_stopped; b += schedule.batch_size) {
      const std::size_t count = std::min(schedule.batch_size, order.size() - b);
      grads.zero();
      for (std::size_t j = b; j < b + count; ++j) {
        Tape tape;
        ForwardPass pass(tape, model, &grads, scope, Mode::train, &rng);
        Var loss = task.train_loss(pass, order[j]);
        if (!std::isfinite(loss.value()[0])) {
          throw Error("train_stage(" + task.head() + "): non-finite loss on example " +
                      std::to_string(order[j]) + " at step " + std::to_string(step) +
                      ", epoch " + std::to_string(epoch));
        }
        tape.backward(loss);
      }
      grads.scale(1.0 / static_cast<double>(count));
      if (!grads.all_finite()) {
        throw Error("train_stage(" + task.head() + "): non-finite gradient at step " +
                    std::to_string(step));
      }
      opt.step(model.params(), grads);
      ++step;
      if (step % schedule.eval_every == 0) {
        measure(step);
        res.early_stopped = should_stop(res.dev_history, schedule.patience);
      }
    }
  }
  if (res.measured_at.back() != step) measure(step);
  res.steps = step;
  res.rng_state = rng_state(rng);
  model.params() = std::move(best);
  return res;
}

// ---- checkpoints --------------------------------------------------------

std::string encode_checkpoint(const Checkpoint& c) {
  nlohmann::json meta = {
      {"checkpoint_version", kCheckpointVersion},
      {"stage", c.stage},
      {"encoder", c.model.config().to_text()},
      {"adapter_size", c.model.adapters() ? nlohmann::json(c.model.adapters()->size)
                                          : nlohmann::json(nullptr)},
      {"rng_state", c.rng_state},
      {"vocab", c.vocab.to_json()},
      {"labels", c.labels ? nlohmann::json(c.labels->labels()) : nlohmann::json(nullptr)},
      {"info", c.info}};
  return encode_container(c.model.params(), meta);
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Container box = decode_container(bytes);
  const auto& m = box.meta;
  try {
    const int version = m.at("checkpoint_version").get<int>();
    if (version != kCheckpointVersion) {
      throw ParseError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
    }
    std::optional<AdapterConfig> adapters;
    if (!m.at("adapter_size").is_null()) adapters = AdapterConfig{m.at("adapter_size").get<std::size_t>()};
    Checkpoint c{m.at("stage").get<std::string>(),
                 Model(EncoderConfig::from_text(m.at("encoder").get<std::string>()), adapters,
                       std::move(box.params)),
                 Vocab::from_json(m.at("vocab")),
                 std::nullopt,
                 m.at("rng_state").get<std::string>(),
                 m.at("info")};
    if (!m.at("labels").is_null()) c.labels = LabelInventory(m.at("labels").get<std::vector<std::string>>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw Error("cannot write " + path.string());
  const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size();
  std::fclose(f);
  if (!ok) throw Error("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw Error("cannot read " + path.string());
  std::string bytes;
  char buf[1 << 16];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, f)) > 0;) bytes.append(buf, n);
  std::fclose(f);
  return decode_checkpoint(bytes);
}

// ---- parser evaluation -------------------------------------------------

std::vector<Sentence> parse_sentences(const Model& model, const Vocab& vocab,
                                      const LabelInventory& labels,
                                      const std::vector<Sentence>& gold, bool use_mst) {
  std::vector<Sentence> out;
  out.reserve(gold.size());
  for (const auto& s : gold) {
    Sentence p = s;
    if (s.tokens.empty()) {
      out.push_back(std::move(p));
      continue;
    }
    ParseScores sc = score_sentence(model, encode_words(s.forms(), vocab));
    PredictedTree t = use_mst ? mst_decode(sc.arc) : greedy_decode(sc.arc);
    t.rels = assign_labels(sc.rel, t.heads);
    for (std::size_t i = 0; i < p.tokens.size(); ++i) {
      p.tokens[i].head = t.heads[i];
      p.tokens[i].deprel = labels.label(t.rels[i]);
    }
    out.push_back(std::move(p));
  }
  return out;
}

ParseEval evaluate_parser(const Model& model, const Vocab& vocab, const LabelInventory& labels,
                          const std::vector<Sentence>& gold, bool use_mst) {
  return uas_las(parse_sentences(model, vocab, labels, gold, use_mst), gold);
}

// ---- sequences ----------------------------------------------------------

std::string arm_name(Arm arm) {
  switch (arm) {
    case Arm::none: return "none";
    case Arm::parsing: return "parsing";
    case Arm::mlm: return "mlm";
    case Arm::adapter_parsing: return "adapter-parsing";
  }
  return "none";
}

Arm parse_arm(std::string_view name) {
  for (Arm a : {Arm::none, Arm::parsing, Arm::mlm, Arm::adapter_parsing})
    if (arm_name(a) == name) return a;
  throw ConfigError("unknown arm '" + std::string(name) +
                    "' (expected none, parsing, mlm or adapter-parsing)");
}

ArmResult run_sequence(Arm arm, const SequenceInputs& in) {
  if (in.base == nullptr || in.downstream == nullptr) {
    throw ConfigError("run_sequence: base checkpoint and downstream task are required");
  }
  Model model = in.base->model;
  ArmResult r;
  r.arm = arm;
  const std::uint64_t inter_seed = fork_seed(in.seed, "intermediate");
  if (arm == Arm::parsing || arm == Arm::adapter_parsing) {
    if (in.ipt == nullptr) throw ConfigError("arm '" + arm_name(arm) + "' needs treebank data");
    TrainSchedule s = in.intermediate;
    s.mode = TrainMode::standard;
    if (arm == Arm::adapter_parsing) {
      s.mode = TrainMode::adapter;
      if (!model.adapters()) {
        Rng arng(fork_seed(in.seed, "adapters"));
        model.inject_adapters(in.adapter, arng);
      }
    }
    r.intermediate = train_stage(model, *in.ipt, s, inter_seed, in.log);
  } else if (arm == Arm::mlm) {
    if (in.ilmt == nullptr) throw ConfigError("arm 'mlm' needs masked-LM data");
    TrainSchedule s = in.intermediate;
    s.mode = TrainMode::standard;
    r.intermediate = train_stage(model, *in.ilmt, s, inter_seed, in.log);
  }
  model.drop_heads();
  TrainSchedule ds = in.downstream_schedule;
  ds.mode = TrainMode::standard;
  r.downstream = train_stage(model, *in.downstream, ds, fork_seed(in.seed, "downstream"), in.log);
  r.dev_accuracy = in.downstream->evaluate(model, Split::dev);
  r.test_accuracy = in.downstream->evaluate(model, Split::test);
  nlohmann::json info = {{"arm", arm_name(arm)},
                         {"task", in.downstream->name()},
                         {"downstream", r.downstream.to_json()},
                         {"dev_accuracy", r.dev_accuracy},
                         {"test_accuracy", r.test_accuracy}};
  if (r.intermediate) info["intermediate"] = r.intermediate->to_json();
  r.checkpoint = Checkpoint{"downstream", std::move(model), in.base->vocab, std::nullopt,
                            r.downstream.rng_state, info};
  return r;
}

std::string arms_csv(const std::vector<ArmResult>& results, const std::string& task,
                     std::uint64_t seed, const std::string& config_hash) {
  std::string out =
      "arm,task,seed,config_hash,intermediate_steps,intermediate_best_dev_loss,"
      "downstream_steps,downstream_best_dev_loss,dev_accuracy,test_accuracy\n";
  for (const auto& r : results) {
    out += arm_name(r.arm) + "," + task + "," + std::to_string(seed) + "," + config_hash + ",";
    if (r.intermediate) {
      out += std::to_string(r.intermediate->steps) + "," + fmt("%.10g", r.intermediate->best_dev_loss);
    } else {
      out += "0,";
    }
    out += "," + std::to_string(r.downstream.steps) + "," + fmt("%.10g", r.downstream.best_dev_loss) +
           "," + fmt("%.1f", r.dev_accuracy) + "," + fmt("%.1f", r.test_accuracy) + "\n";
  }
  return out;
}

}  // namespace iptkit
