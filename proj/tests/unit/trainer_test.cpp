#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "agsfcos/checkpoint.hpp"
#include "agsfcos/errors.hpp"
#include "agsfcos/trainer.hpp"
#include "../test_support.hpp"

using namespace agsfcos;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.backbone.stem_width = 4;
  c.backbone.widths = {8, 8, 8};
  c.backbone.blocks_per_stage = 1;
  c.fpn.width = 8;
  c.head.depth = 2;
  c.data.image_size = 64;
  c.data.batch_size = 2;
  c.optimizer.lr = 0.01;
  c.optimizer.epochs = 100;
  c.optimizer.decay_epochs = {30};
  c.eval_interval_epochs = 0;
  c.seed = 5;
  return c;
}

std::vector<Sample> tiny_samples(std::size_t count) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double o = 2.0 * double(i);
    out.push_back({std::int64_t(i + 1), test::random_tensor({3, 64, 64}, 100 + i),
                   {{{4 + o, 6, 30 + o, 40}, i % 3}, {{20, 20 + o, 60, 50 + o}, (i + 1) % 3}}});
  }
  return out;
}

std::vector<std::vector<double>> snapshot(const ParameterSet& params) {
  std::vector<std::vector<double>> v;
  for (const auto& p : params.items()) v.emplace_back(p.value.values().begin(), p.value.values().end());
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Schedule, StepDecayAndBatching) {
  OptimizerConfig o;
  EXPECT_DOUBLE_EQ(learning_rate(o, 0), 0.001);
  EXPECT_DOUBLE_EQ(learning_rate(o, 7), 0.001);
  EXPECT_NEAR(learning_rate(o, 8), 1e-4, 1e-18);
  EXPECT_NEAR(learning_rate(o, 11), 1e-5, 1e-18);
  EXPECT_EQ(steps_per_epoch(20, 2), 10u);
  EXPECT_EQ(steps_per_epoch(5, 2), 3u);
  ModelConfig c;
  c.optimizer.epochs = 12;
  EXPECT_EQ(total_steps(c, 20), 120u);
  c.optimizer.max_steps = 50;
  EXPECT_EQ(total_steps(c, 20), 50u);
}

TEST(Schedule, EpochOrderIsPermutationAndSeeded) {
  auto a = epoch_order(1, 0, 10);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_EQ(a, epoch_order(1, 0, 10));
  EXPECT_NE(a, epoch_order(1, 1, 10));
}

TEST(Sgd, ZeroLearningRateLeavesParametersUnchanged) {
  ModelConfig c = tiny_config();
  c.optimizer.weight_decay = 1e-4;
  Detector model(c);
  const auto samples = tiny_samples(2);
  TrainState state = fresh_train_state(model.parameters(), c.seed);
  const auto before = snapshot(model.parameters());
  const std::size_t batch[] = {0, 1};
  const StepLog log = sgd_step(model, samples, batch, 0.0, state, {});
  EXPECT_EQ(snapshot(model.parameters()), before);
  EXPECT_TRUE(std::isfinite(log.total));
  EXPECT_EQ(state.step, 1u);
}

TEST(Sgd, FirstStepMatchesHandUpdate) {
  ModelConfig c = tiny_config();
  c.optimizer.clip_norm = 0.0;
  Detector model(c);
  const auto samples = tiny_samples(2);
  TrainState state = fresh_train_state(model.parameters(), c.seed);
  const auto before = snapshot(model.parameters());
  const std::size_t batch[] = {1, 0};
  sgd_step(model, samples, batch, 0.05, state, {});
  const auto& items = model.parameters().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto g = items[i].value.grad();
    for (std::size_t k = 0; k < before[i].size(); ++k) {
      const double grad = (g.empty() ? 0.0 : g[k]) + c.optimizer.weight_decay * before[i][k];
      ASSERT_EQ(items[i].value[k], before[i][k] - 0.05 * grad) << items[i].name;
      ASSERT_EQ(state.momentum[i][k], grad);
    }
  }
}

TEST(Train, SameSeedGivesIdenticalLogs) {
  ModelConfig c = tiny_config();
  c.optimizer.max_steps = 6;
  const auto samples = tiny_samples(3);
  const fs::path a = test::scratch_dir("train_same_a"), b = test::scratch_dir("train_same_b");
  Detector m1(c), m2(c);
  TrainOptions o1, o2;
  o1.out_dir = a;
  o2.out_dir = b;
  const TrainResult r1 = train(m1, samples, o1);
  const TrainResult r2 = train(m2, samples, o2);
  ASSERT_EQ(r1.steps.size(), 6u);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(snapshot(m1.parameters()), snapshot(m2.parameters()));
  EXPECT_EQ(slurp(a / "metrics.csv").substr(0, 26), "step,l_cls,l_reg,l_ctr,tot");
  EXPECT_TRUE(fs::exists(a / "checkpoint" / "manifest.json"));
}

TEST(Train, ResumeIsBitExact) {
  ModelConfig c = tiny_config();
  c.optimizer.max_steps = 8;
  c.data.hflip = true;
  const auto samples = tiny_samples(5);  // partial last batch
  const fs::path full = test::scratch_dir("resume_full"), part = test::scratch_dir("resume_part");

  Detector straight(c);
  TrainOptions o;
  o.out_dir = full;
  const TrainResult r_full = train(straight, samples, o);

  Detector first(c);
  TrainOptions half;
  half.out_dir = part;
  half.stop_at_step = 4;
  train(first, samples, half);

  ModelConfig other_init = c;
  other_init.seed = 99;
  Detector resumed(other_init);  // overwritten by the checkpoint
  TrainOptions rest;
  rest.out_dir = part;
  rest.resume = part / "checkpoint";
  const TrainResult r_rest = train(resumed, samples, rest);
  EXPECT_EQ(r_rest.steps.front().step, 5u);
  EXPECT_EQ(snapshot(resumed.parameters()), snapshot(straight.parameters()));
  EXPECT_EQ(slurp(part / "metrics.csv"), slurp(full / "metrics.csv"));
  EXPECT_EQ(r_rest.state.step, r_full.state.step);
}

TEST(Train, NonFiniteLossDumpsBatch) {
  ModelConfig c = tiny_config();
  Detector model(c);
  auto samples = tiny_samples(2);
  samples[1].image.mutable_values()[7] = std::numeric_limits<double>::quiet_NaN();
  TrainState state = fresh_train_state(model.parameters(), c.seed);
  const fs::path dump = test::scratch_dir("nonfinite");
  const std::size_t batch[] = {0, 1};
  try {
    sgd_step(model, samples, batch, 0.01, state, dump);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("nonfinite_step_1"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(fs::exists(dump / "nonfinite_step_1" / "images.ten"));
  const auto doc = nlohmann::json::parse(slurp(dump / "nonfinite_step_1" / "batch.json"));
  EXPECT_EQ(doc.size(), 2u);
  EXPECT_EQ(doc[1]["image_id"], 2);
}

TEST(Train, EmptyInputsRejected) {
  ModelConfig c = tiny_config();
  Detector model(c);
  EXPECT_THROW(train(model, {}, {}), InputError);
  EXPECT_THROW(evaluate(model, {}, 2), InputError);
}

TEST(Checkpoint, RoundTripRestoresValuesAndState) {
  ModelConfig c = tiny_config();
  Detector a(c);
  TrainState s = fresh_train_state(a.parameters(), 9);
  s.step = 17;
  s.epoch = 3;
  s.best_ap50 = 0.5;
  s.momentum[2].mutable_values()[0] = 0.125;
  const fs::path dir = test::scratch_dir("ckpt_roundtrip");
  save_checkpoint(dir, a.parameters(), s);

  c.seed = 99;
  Detector b(c);
  ASSERT_NE(snapshot(a.parameters()), snapshot(b.parameters()));
  const TrainState t = load_checkpoint(dir, b.parameters());
  EXPECT_EQ(snapshot(a.parameters()), snapshot(b.parameters()));
  EXPECT_EQ(t.step, 17u);
  EXPECT_EQ(t.epoch, 3u);
  EXPECT_EQ(t.seed, 9u);
  EXPECT_EQ(t.best_ap50, 0.5);
  EXPECT_EQ(t.momentum[2][0], 0.125);
}

TEST(Checkpoint, MismatchNamesOffendingParameters) {
  ModelConfig c = tiny_config();
  Detector a(c);
  const fs::path dir = test::scratch_dir("ckpt_mismatch");
  save_checkpoint(dir, a.parameters(), fresh_train_state(a.parameters(), 0));

  ModelConfig wider = c;
  wider.fpn.width = 16;
  Detector b(wider);
  try {
    load_checkpoint(dir, b.parameters());
    FAIL() << "expected CompatibilityError";
  } catch (const CompatibilityError& e) {
    EXPECT_NE(std::string(e.what()).find("fpn.lateral3.w"), std::string::npos) << e.what();
  }

  ModelConfig no_gc = c;
  no_gc.gc.enabled = false;
  Detector d(no_gc);
  try {
    load_checkpoint(dir, d.parameters());
    FAIL() << "expected CompatibilityError";
  } catch (const CompatibilityError& e) {
    EXPECT_NE(std::string(e.what()).find("gc.c3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(test::scratch_dir("ckpt_missing"), b.parameters()), Error);
}

TEST(Evaluate, DeterministicAcrossCalls) {
  ModelConfig c = tiny_config();
  Detector model(c);
  const auto samples = tiny_samples(3);
  const EvalOutput a = evaluate(model, samples, 2);
  const EvalOutput b = evaluate(model, samples, 2);
  EXPECT_EQ(format_eval(a.result), format_eval(b.result));
  EXPECT_EQ(a.detections, b.detections);
}
