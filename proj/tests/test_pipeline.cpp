#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "iptkit/container.hpp"
#include "iptkit/error.hpp"
#include "iptkit/parser.hpp"
#include "iptkit/pipeline.hpp"
#include "support/stop_cases.hpp"
#include "support/toy_setup.hpp"

using namespace iptkit;

namespace {

TrainSchedule quick(std::size_t epochs, double lr = 1e-3) {
  TrainSchedule s;
  s.max_epochs = epochs;
  s.batch_size = 4;
  s.eval_every = 5;
  s.patience = 3;
  s.lr = lr;
  return s;
}

bool same_params(const ParamStore& a, const ParamStore& b) { return a == b; }

}  // namespace

TEST(ShouldStop, ReferenceHistories) {
  for (const auto& c : stop_cases::all()) EXPECT_EQ(should_stop(c.history), c.expected) << c.name;
}

TEST(ShouldStop, ShortHistoriesAndPatience) {
  EXPECT_FALSE(should_stop({}));
  EXPECT_FALSE(should_stop(std::vector<double>(10, 1.0)));
  EXPECT_TRUE(should_stop(std::vector<double>(11, 1.0)));
  EXPECT_TRUE(should_stop({3.0, 2.0, 2.5, 2.0}, 2));
  EXPECT_FALSE(should_stop({3.0, 2.0, 2.5, 1.9}, 2));
  EXPECT_THROW(should_stop({1.0}, 0), ConfigError);
}

TEST(ForkSeed, DeterministicAndTagDependent) {
  EXPECT_EQ(fork_seed(13, "base"), fork_seed(13, "base"));
  EXPECT_NE(fork_seed(13, "base"), fork_seed(13, "intermediate"));
  EXPECT_NE(fork_seed(13, "base"), fork_seed(14, "base"));
}

TEST(TrainSchedule, Validation) {
  TrainSchedule s;
  EXPECT_NO_THROW(s.validate());
  s.batch_size = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.lr = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(TrainStage, ZeroEpochsKeepsInitialParameters) {
  const auto setup = toy::make(40, 1);
  auto task = toy::parse_task(setup);
  Model model = setup.base.model;
  Rng rng(fork_seed(1, "intermediate"));
  Model expected = setup.base.model;
  task.attach(expected, rng);
  const StageResult r = train_stage(model, task, quick(0), fork_seed(1, "intermediate"));
  EXPECT_EQ(r.steps, 0u);
  EXPECT_EQ(r.dev_history.size(), 1u);
  EXPECT_TRUE(same_params(model.params(), expected.params()));
}

TEST(TrainStage, DevLossImprovesAndRunsAreReproducible) {
  const auto setup = toy::make(60, 2);
  auto task_a = toy::parse_task(setup);
  auto task_b = toy::parse_task(setup);
  Model a = setup.base.model, b = setup.base.model;
  const StageResult ra = train_stage(a, task_a, quick(3), 99);
  const StageResult rb = train_stage(b, task_b, quick(3), 99);
  EXPECT_LT(ra.best_dev_loss, ra.dev_history.front());
  EXPECT_EQ(ra.dev_history, rb.dev_history);
  EXPECT_EQ(ra.rng_state, rb.rng_state);
  EXPECT_TRUE(same_params(a.params(), b.params()));
  EXPECT_EQ(ra.measured_at.front(), 0u);
  EXPECT_EQ(ra.measured_at.size(), ra.dev_history.size());
  const double best = *std::min_element(ra.dev_history.begin(), ra.dev_history.end());
  EXPECT_EQ(ra.best_dev_loss, best);
  EXPECT_DOUBLE_EQ(task_a.dev_loss(a), best);
}

TEST(TrainStage, AdapterModeTouchesOnlyAdaptersAndHead) {
  const auto setup = toy::make(40, 3);
  auto task = toy::parse_task(setup);
  Model model = setup.base.model;
  Rng arng(5);
  model.inject_adapters({4}, arng);
  const ParamStore before = model.params();
  TrainSchedule s = quick(2);
  s.mode = TrainMode::adapter;
  train_stage(model, task, s, 7);
  bool adapter_changed = false;
  for (const auto& p : before) {
    const auto& now = model.params().value(p.name);
    if (param_group(p.name) == "base") {
      EXPECT_EQ(now.storage(), p.value.storage()) << p.name;
    } else if (now.storage() != p.value.storage()) {
      adapter_changed = true;
    }
  }
  EXPECT_TRUE(adapter_changed);
  EXPECT_TRUE(model.params().has_prefix("parse/"));
}

TEST(TrainStage, AdapterModeNeedsAdaptersAndDataNeedsBothSplits) {
  const auto setup = toy::make(40, 4);
  auto task = toy::parse_task(setup);
  Model model = setup.base.model;
  TrainSchedule s = quick(1);
  s.mode = TrainMode::adapter;
  EXPECT_THROW(train_stage(model, task, s, 1), Error);
  ParseTask empty({}, {}, setup.labels.num_classes());
  EXPECT_THROW(train_stage(model, empty, quick(1), 1), Error);
}

TEST(Checkpoint, ByteRoundTripAndCorruption) {
  const auto setup = toy::make(40, 5);
  Model model = setup.base.model;
  Rng rng(1);
  model.inject_adapters({4}, rng);
  attach_parser(model, setup.labels.num_classes(), rng);
  Checkpoint c{"ipt", model, setup.vocab, setup.labels, "state", {{"k", 1}}};
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_EQ(back.stage, "ipt");
  EXPECT_EQ(*back.labels, setup.labels);
  EXPECT_EQ(back.vocab, setup.vocab);
  EXPECT_EQ(back.model.config(), model.config());
  EXPECT_TRUE(back.model.adapters().has_value());

  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), Error);
  std::string flipped = bytes;
  flipped[0] = static_cast<char>(flipped[0] ^ 0x5a);
  EXPECT_THROW(decode_checkpoint(flipped), Error);

  Container box = decode_container(bytes);
  box.meta["checkpoint_version"] = kCheckpointVersion + 1;
  EXPECT_THROW(decode_checkpoint(encode_container(box.params, box.meta)), ParseError);

  const auto path = std::filesystem::temp_directory_path() / "iptkit_test_ckpt.bin";
  save_checkpoint(path, c);
  EXPECT_EQ(encode_checkpoint(load_checkpoint(path)), bytes);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), Error);
}

TEST(Mlm, DevMasksFixedTrainingMasksDynamic) {
  const auto setup = toy::make(40, 6);
  const auto train = toy::ids(setup.train, setup.vocab), dev = toy::ids(setup.dev, setup.vocab);
  MlmTask a(train, dev, 0.15, 11), b(train, dev, 0.15, 11);
  ASSERT_EQ(a.dev_masks().size(), dev.size());
  for (std::size_t i = 0; i < dev.size(); ++i) EXPECT_EQ(a.dev_masks()[i].positions, b.dev_masks()[i].positions);
  EXPECT_EQ(fixed_masks(dev, 0.15, 11)[0].positions, a.dev_masks()[0].positions);

  Model model = setup.base.model;
  Rng rng(3);
  a.attach(model, rng);
  std::size_t differing = 0;
  // Revisit each training sentence as a later epoch would.
  for (std::size_t i = 0; i < train.size(); ++i) {
    std::vector<std::size_t> first;
    for (int visit = 0; visit < 2; ++visit) {
      Tape tape;
      ForwardPass pass(tape, model, nullptr, TrainScope::all, Mode::train, &rng);
      a.train_loss(pass, i);
      if (visit == 0) first = a.last_train_mask().positions;
      else if (first != a.last_train_mask().positions) ++differing;
    }
  }
  EXPECT_GT(differing, train.size() / 2);
  EXPECT_EQ(mlm_evaluate(model, a.dev_masks()).loss, a.dev_loss(model));
}

TEST(Parse, PredictionsKeepFormsAndMstGivesTrees) {
  const auto setup = toy::make(40, 7);
  Model model = setup.base.model;
  Rng rng(2);
  attach_parser(model, setup.labels.num_classes(), rng);
  const auto pred = parse_sentences(model, setup.vocab, setup.labels, setup.test, true);
  ASSERT_EQ(pred.size(), setup.test.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EXPECT_EQ(pred[i].forms(), setup.test[i].forms());
    EXPECT_TRUE(validate_tree(pred[i]).ok());
  }
  const ParseEval e = evaluate_parser(model, setup.vocab, setup.labels, setup.test, true);
  EXPECT_EQ(e.tree_rate, 100.0);
}

TEST(Arms, NamesRoundTrip) {
  for (Arm a : {Arm::none, Arm::parsing, Arm::mlm, Arm::adapter_parsing}) EXPECT_EQ(parse_arm(arm_name(a)), a);
  EXPECT_THROW(parse_arm("bogus"), ConfigError);
}

TEST(RunSequence, ReproducibleAndArmsDiffer) {
  const auto setup = toy::make(40, 8);
  auto ipt = toy::parse_task(setup);
  auto ds = toy::seqc_task(setup, 40, 9);
  SequenceInputs in;
  in.base = &setup.base;
  in.ipt = &ipt;
  in.downstream = &ds;
  in.intermediate = quick(1);
  in.downstream_schedule = quick(1);
  in.seed = 21;
  const ArmResult none1 = run_sequence(Arm::none, in);
  const ArmResult none2 = run_sequence(Arm::none, in);
  const ArmResult parsing = run_sequence(Arm::parsing, in);
  EXPECT_FALSE(none1.intermediate.has_value());
  ASSERT_TRUE(parsing.intermediate.has_value());
  EXPECT_EQ(encode_checkpoint(*none1.checkpoint), encode_checkpoint(*none2.checkpoint));
  EXPECT_NE(none1.checkpoint->model.params(), parsing.checkpoint->model.params());
  EXPECT_FALSE(parsing.checkpoint->model.params().has_prefix("parse/"));
  EXPECT_TRUE(parsing.checkpoint->model.params().has_prefix("seqc/"));
  EXPECT_THROW(run_sequence(Arm::mlm, in), Error);

  const std::string csv = arms_csv({none1, parsing}, "seqc", 21, "abc");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "arm,task,seed,config_hash,intermediate_steps,intermediate_best_dev_loss,downstream_steps,"
            "downstream_best_dev_loss,dev_accuracy,test_accuracy");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
