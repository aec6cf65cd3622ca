#include "iptkit/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "iptkit/error.hpp"
#include "iptkit/toydata.hpp"

namespace iptkit {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("unknown key '" + (context.empty() ? key : context + "." + key) +
                        "' (allowed: " + list + ")");
    }
  }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& context) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + (context.empty() ? key : context + "." + key) +
                      "' has the wrong type");
  }
}

std::size_t get_size(const json& j, const std::string& key, const std::string& context) {
  if (!j.at(key).is_number_integer() || j.at(key).get<long long>() < 0) {
    throw ConfigError("key '" + (context.empty() ? key : context + "." + key) +
                      "' must be a non-negative integer");
  }
  return j.at(key).get<std::size_t>();
}

std::filesystem::path existing_path(const json& j, const std::string& key, const std::string& context,
                                    const std::filesystem::path& base) {
  std::filesystem::path p = get<std::string>(j, key, context);
  if (p.is_relative()) p = base / p;
  p = p.lexically_normal();
  if (!std::filesystem::exists(p)) {
    throw ConfigError("file for '" + context + "." + key + "' not found: " + p.string());
  }
  return p;
}

SplitPaths split_paths(const json& j, const std::string& context, const std::filesystem::path& base,
                       std::set<std::string> extra = {}) {
  extra.insert({"train", "dev", "test"});
  check_keys(j, extra, context);
  for (const char* k : {"train", "dev", "test"})
    if (!j.contains(k)) throw ConfigError("missing key '" + context + "." + k + "'");
  return {existing_path(j, "train", context, base), existing_path(j, "dev", context, base),
          existing_path(j, "test", context, base)};
}

json paths_json(const SplitPaths& p) {
  return {{"train", p.train.string()}, {"dev", p.dev.string()}, {"test", p.test.string()}};
}

}  // namespace

TrainSchedule schedule_from_json(const json& j, TrainSchedule s, const std::string& context) {
  check_keys(j, {"max_epochs", "batch_size", "eval_every", "patience", "lr", "mode"}, context);
  if (j.contains("max_epochs")) s.max_epochs = get_size(j, "max_epochs", context);
  if (j.contains("batch_size")) s.batch_size = get_size(j, "batch_size", context);
  if (j.contains("eval_every")) s.eval_every = get_size(j, "eval_every", context);
  if (j.contains("patience")) s.patience = get_size(j, "patience", context);
  if (j.contains("lr")) s.lr = get<double>(j, "lr", context);
  if (j.contains("mode")) {
    const auto m = get<std::string>(j, "mode", context);
    if (m == "standard") s.mode = TrainMode::standard;
    else if (m == "adapter") s.mode = TrainMode::adapter;
    else throw ConfigError("key '" + context + ".mode' must be 'standard' or 'adapter'");
  }
  s.validate();
  return s;
}

json schedule_to_json(const TrainSchedule& s) {
  return {{"max_epochs", s.max_epochs}, {"batch_size", s.batch_size}, {"eval_every", s.eval_every},
          {"patience", s.patience},     {"lr", s.lr},
          {"mode", s.mode == TrainMode::adapter ? "adapter" : "standard"}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base) {
  check_keys(j,
             {"seed", "output_dir", "treebank", "task", "base_checkpoint", "tokenizer", "encoder",
              "adapter", "schedule", "intermediate_schedule", "downstream_schedule", "arms",
              "mlm_rate", "decode", "strict_train", "strict_eval"},
             "");
  ExperimentConfig c;
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", "");
  if (j.contains("output_dir")) {
    c.output_dir = get<std::string>(j, "output_dir", "");
    if (c.output_dir.is_relative()) c.output_dir = (base / c.output_dir).lexically_normal();
  }
  if (j.contains("treebank")) c.treebank = split_paths(j.at("treebank"), "treebank", base);
  if (j.contains("task")) {
    const json& t = j.at("task");
    TaskConfig tc;
    tc.paths = split_paths(t, "task", base, {"kind", "num_classes"});
    if (t.contains("kind")) tc.kind = get<std::string>(t, "kind", "task");
    if (tc.kind != "seqc" && tc.kind != "mcc") throw ConfigError("key 'task.kind' must be 'seqc' or 'mcc'");
    if (t.contains("num_classes")) tc.num_classes = get_size(t, "num_classes", "task");
    if (tc.num_classes < 2) throw ConfigError("key 'task.num_classes' must be at least 2");
    c.task = tc;
  }
  if (j.contains("base_checkpoint")) c.base_checkpoint = existing_path(j, "base_checkpoint", "", base);
  if (j.contains("tokenizer")) {
    check_keys(j.at("tokenizer"), {"vocab_size"}, "tokenizer");
    if (j.at("tokenizer").contains("vocab_size"))
      c.vocab_size = get_size(j.at("tokenizer"), "vocab_size", "tokenizer");
  }
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    check_keys(e, {"layers", "hidden", "heads", "ffn", "max_len", "dropout"}, "encoder");
    if (e.contains("layers")) c.encoder.layers = get_size(e, "layers", "encoder");
    if (e.contains("hidden")) c.encoder.hidden = get_size(e, "hidden", "encoder");
    if (e.contains("heads")) c.encoder.heads = get_size(e, "heads", "encoder");
    if (e.contains("ffn")) c.encoder.ffn = get_size(e, "ffn", "encoder");
    if (e.contains("max_len")) c.encoder.max_len = get_size(e, "max_len", "encoder");
    if (e.contains("dropout")) c.encoder.dropout = get<double>(e, "dropout", "encoder");
  }
  if (j.contains("adapter")) {
    check_keys(j.at("adapter"), {"size"}, "adapter");
    if (j.at("adapter").contains("size")) c.adapter.size = get_size(j.at("adapter"), "size", "adapter");
  }
  TrainSchedule shared;
  if (j.contains("schedule")) shared = schedule_from_json(j.at("schedule"), shared, "schedule");
  c.intermediate = shared;
  c.downstream = shared;
  if (j.contains("intermediate_schedule"))
    c.intermediate = schedule_from_json(j.at("intermediate_schedule"), shared, "intermediate_schedule");
  if (j.contains("downstream_schedule"))
    c.downstream = schedule_from_json(j.at("downstream_schedule"), shared, "downstream_schedule");
  if (j.contains("arms")) {
    if (!j.at("arms").is_array() || j.at("arms").empty()) throw ConfigError("key 'arms' must be a non-empty list");
    c.arms.clear();
    for (const auto& a : j.at("arms")) {
      if (!a.is_string()) throw ConfigError("key 'arms' must list strings");
      c.arms.push_back(parse_arm(a.get<std::string>()));
    }
  }
  if (j.contains("mlm_rate")) c.mlm_rate = get<double>(j, "mlm_rate", "");
  if (!(c.mlm_rate > 0.0 && c.mlm_rate <= 1.0)) throw ConfigError("key 'mlm_rate' must be in (0, 1]");
  if (j.contains("decode")) {
    const auto d = get<std::string>(j, "decode", "");
    if (d != "mst" && d != "greedy") throw ConfigError("key 'decode' must be 'mst' or 'greedy'");
    c.use_mst = d == "mst";
  }
  if (j.contains("strict_train")) c.strict_train = get<bool>(j, "strict_train", "");
  if (j.contains("strict_eval")) c.strict_eval = get<bool>(j, "strict_eval", "");
  // vocab_size is placeholder-checked here and replaced by the tokenizer's.
  EncoderConfig probe = c.encoder;
  probe.vocab_size = kMinVocabSize;
  try {
    probe.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("encoder: ") + e.what());
  }
  if (c.vocab_size < kMinVocabSize) {
    throw ConfigError("key 'tokenizer.vocab_size' must be at least " + std::to_string(kMinVocabSize));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json ExperimentConfig::to_json() const {
  json j = {{"seed", seed},
            {"output_dir", output_dir.string()},
            {"tokenizer", {{"vocab_size", vocab_size}}},
            {"encoder",
             {{"layers", encoder.layers},
              {"hidden", encoder.hidden},
              {"heads", encoder.heads},
              {"ffn", encoder.ffn},
              {"max_len", encoder.max_len},
              {"dropout", encoder.dropout}}},
            {"adapter", {{"size", adapter.size}}},
            {"intermediate_schedule", schedule_to_json(intermediate)},
            {"downstream_schedule", schedule_to_json(downstream)},
            {"mlm_rate", mlm_rate},
            {"decode", use_mst ? "mst" : "greedy"},
            {"strict_train", strict_train},
            {"strict_eval", strict_eval}};
  if (treebank) j["treebank"] = paths_json(*treebank);
  if (task) {
    j["task"] = paths_json(task->paths);
    j["task"]["kind"] = task->kind;
    j["task"]["num_classes"] = task->num_classes;
  }
  if (base_checkpoint) j["base_checkpoint"] = base_checkpoint->string();
  j["arms"] = json::array();
  for (Arm a : arms) j["arms"].push_back(arm_name(a));
  return j;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentConfig::hash() const {
  // Output location does not change results, so it stays out of the hash.
  json j = to_json();
  j.erase("output_dir");
  return fnv1a_hex(j.dump());
}

std::filesystem::path ExperimentConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  if (const char* env = std::getenv("IPTKIT_OUTPUT_DIR"); env && *env) return env;
  return "runs";
}

std::vector<Sentence> load_treebank(const std::filesystem::path& path, bool strict,
                                    std::vector<std::string>* warnings) {
  return filter_trees(read_conllu_file(path.string()), strict, warnings);
}

std::vector<json> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_jsonl(buf.str());
}

std::vector<std::vector<std::string>> tokenizer_corpus(const ExperimentConfig& cfg, bool strict) {
  std::vector<std::vector<std::string>> corpus;
  if (cfg.treebank) {
    for (const auto& s : load_treebank(cfg.treebank->train, strict)) corpus.push_back(s.forms());
  }
  if (cfg.task) {
    for (const auto& row : load_jsonl(cfg.task->paths.train)) {
      for (const char* key : {"text_a", "text_b", "premise", "question"})
        if (row.contains(key) && row.at(key).is_string())
          corpus.push_back(split_words(row.at(key).get<std::string>()));
      if (row.contains("answers") && row.at("answers").is_array())
        for (const auto& a : row.at("answers"))
          if (a.is_string()) corpus.push_back(split_words(a.get<std::string>()));
    }
  }
  if (corpus.empty()) throw ConfigError("no training text: configure a treebank or a task");
  return corpus;
}

Checkpoint make_base(const ExperimentConfig& cfg) {
  if (cfg.base_checkpoint) {
    Checkpoint c = load_checkpoint(*cfg.base_checkpoint);
    c.model.drop_heads();
    return c;
  }
  Vocab vocab = train_bpe(tokenizer_corpus(cfg, cfg.strict_train), cfg.vocab_size);
  EncoderConfig enc = cfg.encoder;
  enc.vocab_size = vocab.size();
  Rng rng(fork_seed(cfg.seed, "base"));
  return Checkpoint{"base", Model(enc, rng), std::move(vocab), std::nullopt, "", json::object()};
}

std::vector<Sentence> load_split(const ExperimentConfig& cfg, const std::filesystem::path& path,
                                 const Logger& log) {
  const bool strict = cfg.treebank && path == cfg.treebank->train ? cfg.strict_train : cfg.strict_eval;
  std::vector<std::string> warnings;
  auto s = load_treebank(path, strict, &warnings);
  if (log)
    for (const auto& w : warnings) log("warning: " + path.string() + ": " + w);
  return s;
}

std::unique_ptr<DownstreamTask> load_downstream(const ExperimentConfig& cfg, const Vocab& vocab) {
  if (!cfg.task) throw ConfigError("missing key 'task'");
  const TaskConfig& t = *cfg.task;
  const std::size_t max_len = cfg.encoder.max_len;
  if (t.kind == "seqc") {
    auto make = [&](const std::filesystem::path& p) {
      return make_seqc_examples(load_jsonl(p), vocab, t.num_classes, max_len);
    };
    return std::make_unique<SeqcTask>(make(t.paths.train), make(t.paths.dev), make(t.paths.test),
                                      t.num_classes);
  }
  auto make = [&](const std::filesystem::path& p) {
    return make_mcc_examples(load_jsonl(p), vocab, max_len);
  };
  return std::make_unique<MccTask>(make(t.paths.train), make(t.paths.dev), make(t.paths.test));
}

std::vector<std::vector<int>> encode_ids(const std::vector<Sentence>& sentences, const Vocab& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(encode_words(s.forms(), vocab).ids);
  return out;
}

ArmsRun run_arms(const ExperimentConfig& cfg, const Logger& log) {
  if (!cfg.task) throw ConfigError("missing key 'task'");
  const Checkpoint base = make_base(cfg);
  auto downstream = load_downstream(cfg, base.vocab);

  bool needs_treebank = false;
  for (Arm a : cfg.arms) needs_treebank = needs_treebank || a != Arm::none;
  if (needs_treebank && !cfg.treebank) throw ConfigError("missing key 'treebank' (needed by the arms)");

  std::unique_ptr<ParseTask> ipt;
  std::unique_ptr<MlmTask> ilmt;
  if (needs_treebank) {
    const auto train = load_split(cfg, cfg.treebank->train, log);
    const auto dev = load_split(cfg, cfg.treebank->dev, log);
    const LabelInventory labels = build_label_inventory(train);
    const std::size_t max_len = base.model.config().max_len;
    ipt = std::make_unique<ParseTask>(make_parse_examples(train, base.vocab, labels, max_len),
                                      make_parse_examples(dev, base.vocab, labels, max_len),
                                      labels.num_classes());
    ilmt = std::make_unique<MlmTask>(encode_ids(train, base.vocab), encode_ids(dev, base.vocab),
                                     cfg.mlm_rate, fork_seed(cfg.seed, "dev-masks"));
  }
  SequenceInputs in;
  in.base = &base;
  in.ipt = ipt.get();
  in.ilmt = ilmt.get();
  in.downstream = downstream.get();
  in.intermediate = cfg.intermediate;
  in.downstream_schedule = cfg.downstream;
  in.adapter = cfg.adapter;
  in.seed = cfg.seed;
  in.log = log;

  ArmsRun run;
  nlohmann::json arms = nlohmann::json::array();
  for (Arm a : cfg.arms) {
    if (log) log("arm " + arm_name(a));
    run.results.push_back(run_sequence(a, in));
    arms.push_back(run.results.back().checkpoint->info);
  }
  run.csv = arms_csv(run.results, downstream->name(), cfg.seed, cfg.hash());
  run.report = {{"command", "finetune"},
                {"seed", cfg.seed},
                {"config_hash", cfg.hash()},
                {"format_version", 1},
                {"arms", arms}};
  return run;
}

}  // namespace iptkit
