// iptkit command-line entry point.
//
// Precedence for every setting: command-line flag, then config file, then
// built-in default. The output directory falls back to $IPTKIT_OUTPUT_DIR.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "iptkit/cka.hpp"
#include "iptkit/error.hpp"
#include "iptkit/experiment.hpp"
#include "iptkit/metrics.hpp"
#include "iptkit/pipeline.hpp"
#include "iptkit/toydata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iptkit;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  bool strict = false;
  bool lenient = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("config", c.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", c.seed, "Master seed (overrides the config)");
  cmd->add_option("--mode", c.mode, "Intermediate training mode")
      ->check(CLI::IsMember({"standard", "adapter"}));
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_flag("--strict", c.strict, "Fail on invalid dev/test trees instead of skipping them");
  cmd->add_flag("--lenient", c.lenient, "Skip invalid training trees instead of failing");
  cmd->add_flag("-q,--quiet", c.quiet, "No progress output");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.mode) cfg.intermediate.mode = *c.mode == "adapter" ? TrainMode::adapter : TrainMode::standard;
  if (c.out) cfg.output_dir = *c.out;
  if (c.strict) cfg.strict_eval = true;
  if (c.lenient) cfg.strict_train = false;
  return cfg;
}

Logger make_logger(bool quiet) {
  if (quiet) return {};
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

fs::path ensure_dir(const fs::path& dir) {
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

json provenance(const ExperimentConfig& cfg, const std::string& command) {
  return {{"command", command}, {"seed", cfg.seed}, {"config_hash", cfg.hash()}, {"format_version", 1}};
}

bool base_unchanged(const ParamStore& before, const ParamStore& after) {
  for (const auto& p : before) {
    if (param_group(p.name) != "base") continue;
    const auto i = after.find(p.name);
    if (!i || !(after[*i].value == p.value)) return false;
  }
  return true;
}

// ---- subcommands -------------------------------------------------------

int cmd_train_parser(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  if (!cfg.treebank) throw ConfigError("missing key 'treebank'");
  const Logger log = make_logger(c.quiet);
  const fs::path out = ensure_dir(cfg.resolved_output_dir());
  Checkpoint base = make_base(cfg);
  const auto train = load_split(cfg, cfg.treebank->train, log);
  const auto dev = load_split(cfg, cfg.treebank->dev, log);
  const auto test = load_split(cfg, cfg.treebank->test, log);
  const LabelInventory labels = build_label_inventory(train);
  const std::size_t max_len = base.model.config().max_len;
  ParseTask task(make_parse_examples(train, base.vocab, labels, max_len),
                 make_parse_examples(dev, base.vocab, labels, max_len), labels.num_classes());

  Model model = base.model;
  if (cfg.intermediate.mode == TrainMode::adapter && !model.adapters()) {
    Rng arng(fork_seed(cfg.seed, "adapters"));
    model.inject_adapters(cfg.adapter, arng);
  }
  const ParamStore before = model.params();
  StageResult res = train_stage(model, task, cfg.intermediate, fork_seed(cfg.seed, "intermediate"), log);
  const ParseEval ev = evaluate_parser(model, base.vocab, labels, test, cfg.use_mst);

  json report = provenance(cfg, "train-parser");
  report["eval"] = ev.to_json();
  report["decode"] = cfg.use_mst ? "mst" : "greedy";
  report["stage"] = res.to_json();
  report["mode"] = cfg.intermediate.mode == TrainMode::adapter ? "adapter" : "standard";
  if (cfg.intermediate.mode == TrainMode::adapter)
    report["base_unchanged"] = base_unchanged(before, model.params());
  Checkpoint ckpt{"ipt", std::move(model), base.vocab, labels, res.rng_state, report};
  save_checkpoint(out / "parser.ckpt", ckpt);
  write_text(out / "train-parser.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_parse(const std::string& ckpt_path, const std::string& input, const std::string& output,
              bool mst) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (!ckpt.labels || !ckpt.model.params().has_prefix("parse/")) {
    throw ConfigError("checkpoint " + ckpt_path + " has no parser head");
  }
  const auto sents = read_conllu_file(input);
  const auto pred = parse_sentences(ckpt.model, ckpt.vocab, *ckpt.labels, sents, mst);
  if (output.empty() || output == "-") {
    std::cout << serialize_conllu(pred);
  } else {
    write_conllu_file(output, pred);
  }
  return 0;
}

int cmd_finetune(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  if (!cfg.task) throw ConfigError("missing key 'task'");
  const Logger log = make_logger(c.quiet);
  const fs::path out = ensure_dir(cfg.resolved_output_dir());
  const ArmsRun run = run_arms(cfg, log);
  for (const auto& r : run.results) {
    save_checkpoint(out / ("arm-" + arm_name(r.arm) + ".ckpt"), *r.checkpoint);
  }
  write_text(out / "arms.csv", run.csv);
  write_text(out / "arms.json", run.report.dump(2) + "\n");
  std::cout << run.csv;
  return 0;
}

int cmd_mlm_train(const Common& c, std::optional<double> rate) {
  ExperimentConfig cfg = resolve(c);
  if (rate) {
    if (!(*rate > 0.0 && *rate <= 1.0)) throw ConfigError("--rate must be in (0, 1]");
    cfg.mlm_rate = *rate;
  }
  if (!cfg.treebank) throw ConfigError("missing key 'treebank'");
  const Logger log = make_logger(c.quiet);
  const fs::path out = ensure_dir(cfg.resolved_output_dir());
  Checkpoint base = make_base(cfg);
  const auto train = encode_ids(load_split(cfg, cfg.treebank->train, log), base.vocab);
  const auto dev = encode_ids(load_split(cfg, cfg.treebank->dev, log), base.vocab);
  MlmTask task(train, dev, cfg.mlm_rate, fork_seed(cfg.seed, "dev-masks"));
  const auto train_probe = fixed_masks(train, cfg.mlm_rate, fork_seed(cfg.seed, "train-probe"));

  Model model = base.model;
  {
    Rng head_rng(fork_seed(cfg.seed, "intermediate"));
    task.attach(model, head_rng);
  }
  // The head attached above uses the same stream train_stage would, so
  // the "before" numbers describe the true starting point.
  const MlmEval train_before = mlm_evaluate(model, train_probe);
  const MlmEval dev_before = mlm_evaluate(model, task.dev_masks());
  TrainSchedule s = cfg.intermediate;
  s.mode = TrainMode::standard;
  Model trained = base.model;
  StageResult res = train_stage(trained, task, s, fork_seed(cfg.seed, "intermediate"), log);
  const MlmEval train_after = mlm_evaluate(trained, train_probe);
  const MlmEval dev_after = mlm_evaluate(trained, task.dev_masks());

  json report = provenance(cfg, "mlm-train");
  report["mlm_rate"] = cfg.mlm_rate;
  report["stage"] = res.to_json();
  report["train_accuracy_before"] = train_before.accuracy;
  report["train_accuracy_after"] = train_after.accuracy;
  report["dev_accuracy_before"] = dev_before.accuracy;
  report["dev_accuracy_after"] = dev_after.accuracy;
  Checkpoint ckpt{"ilmt", std::move(trained), base.vocab, std::nullopt, res.rng_state, report};
  save_checkpoint(out / "mlm.ckpt", ckpt);
  write_text(out / "mlm-train.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_cka(const std::string& a, const std::string& b, const std::string& sentences,
            const std::string& tag_a, const std::string& tag_b, std::size_t limit,
            const std::string& out_prefix) {
  const Checkpoint ca = load_checkpoint(a);
  const Checkpoint cb = load_checkpoint(b);
  auto sents = read_conllu_file(sentences);
  if (limit > 0 && sents.size() > limit) sents.resize(limit);
  std::vector<std::vector<std::string>> words;
  for (const auto& s : sents) words.push_back(s.forms());
  const CkaReport rep = layer_report(ca.model, ca.vocab, tag_a, cb.model, cb.vocab, tag_b, words,
                                     fs::path(sentences).filename().string());
  if (!out_prefix.empty()) {
    write_text(out_prefix + ".csv", rep.to_csv());
    write_text(out_prefix + ".json", rep.to_json().dump(2) + "\n");
  }
  std::cout << rep.to_csv();
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gold) {
  const ParseEval ev = uas_las(read_conllu_file(pred), read_conllu_file(gold));
  std::cout << ev.to_json().dump(2) << '\n';
  return 0;
}

int cmd_gen_toy(const std::string& dir, std::uint64_t seed, std::size_t sentences,
                std::size_t task_items) {
  const fs::path out = ensure_dir(dir);
  write_toy_dataset(out, seed, sentences, task_items);
  std::cout << "wrote toy data to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iptkit: intermediate parsing training toolkit"};
  app.require_subcommand(1);

  Common tp, ft, mt;
  add_common(app.add_subcommand("train-parser", "Train a biaffine parser on a treebank"), tp);
  add_common(app.add_subcommand("finetune", "Run the configured arms and write a metrics CSV"), ft);
  auto* mlm = app.add_subcommand("mlm-train", "Masked-LM training on treebank sentences");
  add_common(mlm, mt);
  std::optional<double> rate;
  mlm->add_option("--rate", rate, "Masking rate in (0, 1]");

  auto* parse = app.add_subcommand("parse", "Annotate CoNLL-U input with a parser checkpoint");
  std::string p_ckpt, p_in, p_out;
  bool p_mst = false;
  parse->add_option("checkpoint", p_ckpt)->required()->check(CLI::ExistingFile);
  parse->add_option("input", p_in)->required()->check(CLI::ExistingFile);
  parse->add_option("-o,--output", p_out, "Output file (default: stdout)");
  parse->add_flag("--mst", p_mst, "Decode maximum spanning trees instead of greedy heads");

  auto* cka = app.add_subcommand("cka", "Layer-wise linear CKA between two checkpoints");
  std::string c_a, c_b, c_s, c_ta = "A", c_tb = "B", c_out;
  std::size_t c_limit = 0;
  cka->add_option("checkpoint_a", c_a)->required()->check(CLI::ExistingFile);
  cka->add_option("checkpoint_b", c_b)->required()->check(CLI::ExistingFile);
  cka->add_option("sentences", c_s, "CoNLL-U file")->required()->check(CLI::ExistingFile);
  cka->add_option("--tag-a", c_ta, "Variant tag of the first checkpoint");
  cka->add_option("--tag-b", c_tb, "Variant tag of the second checkpoint");
  cka->add_option("--max-sentences", c_limit, "Use at most this many sentences (0 = all)");
  cka->add_option("--out", c_out, "Write <prefix>.csv and <prefix>.json");

  auto* ev = app.add_subcommand("eval", "UAS/LAS of predicted against gold CoNLL-U");
  std::string e_pred, e_gold;
  ev->add_option("pred", e_pred)->required()->check(CLI::ExistingFile);
  ev->add_option("gold", e_gold)->required()->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-toy", "Write the synthetic treebank and task files");
  std::string g_dir;
  std::uint64_t g_seed = 7;
  std::size_t g_sent = 500, g_items = 400;
  gen->add_option("dir", g_dir)->required();
  gen->add_option("--seed", g_seed);
  gen->add_option("--sentences", g_sent)->check(CLI::Range(10, 1000000));
  gen->add_option("--task-items", g_items)->check(CLI::Range(4, 1000000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("train-parser")) return cmd_train_parser(tp);
    if (app.got_subcommand("finetune")) return cmd_finetune(ft);
    if (app.got_subcommand("mlm-train")) return cmd_mlm_train(mt, rate);
    if (app.got_subcommand("parse")) return cmd_parse(p_ckpt, p_in, p_out, p_mst);
    if (app.got_subcommand("cka")) return cmd_cka(c_a, c_b, c_s, c_ta, c_tb, c_limit, c_out);
    if (app.got_subcommand("eval")) return cmd_eval(e_pred, e_gold);
    if (app.got_subcommand("gen-toy")) return cmd_gen_toy(g_dir, g_seed, g_sent, g_items);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
