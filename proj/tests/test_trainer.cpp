#include "catchd/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace ad = catchd::ad;
namespace bb = catchd::backbone;
namespace core = catchd::core;
namespace corpus = catchd::corpus;
namespace trainer = catchd::trainer;
using corpus::Post;
using trainer::TrainConfig;

namespace {

// tiny lexical task: posts containing "bad" are hateful
corpus::CorpusSplit tiny_split(int n_train = 16, int n_val = 8, int n_test = 8) {
  auto make = [](int n, int offset) {
    std::vector<Post> out;
    for (int i = 0; i < n; ++i) {
      Post p;
      bool hateful = (i % 2) == 0;
      p.text = std::string(hateful ? "bad" : "fine") + " word" +
               std::to_string((i + offset) % 4);
      p.hate_label = hateful ? 1 : 0;
      p.target_label = (i + offset) % 8;
      p.platform = corpus::Platform::GAB;
      p.platform_tag = "GAB";
      out.push_back(p);
    }
    return out;
  };
  return {make(n_train, 0), make(n_val, 1), make(n_test, 2)};
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.h_d = 8;
  c.h_causal = 4;
  c.h_disc = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.max_len = 8;
  c.batch_size = 8;
  c.max_epochs = 3;
  c.patience = 2;
  c.learning_rate = 1e-3;
  c.dropout = 0.0;
  c.seed = 11;
  return c;
}

double param_checksum(core::ParamSet& ps) {
  double s = 0;
  for (const auto& [n, v] : ps.items()) s += v->val.array().abs().sum();
  return s;
}

TEST(TrainConfig, DefaultsMatchReferenceSettings) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.0001);
  EXPECT_DOUBLE_EQ(c.dropout, 0.2);
  EXPECT_DOUBLE_EQ(c.alpha_t, 0.05);
  EXPECT_DOUBLE_EQ(c.alpha_c, 0.05);
  EXPECT_DOUBLE_EQ(c.alpha_tc, 0.001);
  EXPECT_DOUBLE_EQ(c.mu_d, 0.5);
  EXPECT_DOUBLE_EQ(c.tau, 0.5);
  EXPECT_EQ(c.h_disc, 8);
  EXPECT_EQ(c.patience, 3);
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, ValidationAggregatesAllProblems) {
  TrainConfig c;
  c.learning_rate = 0;
  c.tau = -1;
  c.batch_size = 0;
  try {
    c.validate();
    FAIL() << "expected validation error";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("learning_rate"), std::string::npos);
    EXPECT_NE(msg.find("tau"), std::string::npos);
    EXPECT_NE(msg.find("batch_size"), std::string::npos);
  }
}

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c = tiny_config();
  c.ablation = trainer::Ablation::no_finetune;
  c.anneal_tau = true;
  TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(AdamW, FirstStepMatchesHandFormula) {
  core::ParamSet ps;
  ad::Var p = ps.add("w", ad::Mat::Constant(1, 1, 2.0));
  p->grad = ad::Mat::Constant(1, 1, 0.5);
  const double lr = 0.01, wd = 0.1;
  trainer::AdamW opt(ps, lr, wd);
  opt.step();
  // bias-corrected first step: mhat = g, vhat = g^2, then decoupled decay
  double expected = 2.0 - lr * 0.5 / (std::sqrt(0.25) + 1e-8);
  expected -= lr * wd * expected;
  EXPECT_NEAR(p->val(0, 0), expected, 1e-12);
}

TEST(AdamW, ClipRescalesOnlyAboveThreshold) {
  core::ParamSet ps;
  ad::Var a = ps.add("a", ad::Mat::Zero(1, 2));
  a->grad << 3.0, 4.0;  // norm 5
  trainer::AdamW opt(ps, 0.01, 0.0);
  opt.clip_grads(1.0);
  EXPECT_NEAR(a->grad.norm(), 1.0, 1e-12);
  EXPECT_NEAR(a->grad(0, 0) / a->grad(0, 1), 0.75, 1e-12);
  ad::Mat before = a->grad;
  opt.clip_grads(10.0);  // already under the cap
  EXPECT_TRUE(a->grad.isApprox(before, 0.0));
}

TEST(AdamW, FrozenParamsNeverMove) {
  core::ParamSet ps, frozen;
  ad::Var a = ps.add("a", ad::Mat::Constant(1, 1, 1.0));
  ad::Var b = frozen.add("b", ad::Mat::Constant(1, 1, 1.0));
  ps.append(frozen);
  a->grad = ad::Mat::Constant(1, 1, 1.0);
  b->grad = ad::Mat::Constant(1, 1, 1.0);
  trainer::AdamW opt(ps, 0.1, 0.0);
  opt.freeze(frozen);
  opt.step();
  EXPECT_NE(a->val(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(b->val(0, 0), 1.0);
}

TEST(Batching, CoversAllPostsAndShufflesDeterministically) {
  auto split = tiny_split(10, 4, 4);
  auto cfg = tiny_config();
  auto backbone = trainer::make_desk_backbone(split, cfg);
  catchd::rng::Stream s1(5, "shuffle"), s2(5, "shuffle"), s3(6, "shuffle");
  auto b1 = trainer::make_batches(split.train, *backbone, 6, 4, &s1);
  auto b2 = trainer::make_batches(split.train, *backbone, 6, 4, &s2);
  auto b3 = trainer::make_batches(split.train, *backbone, 6, 4, &s3);
  ASSERT_EQ(b1.size(), 3u);  // 4 + 4 + 2
  EXPECT_EQ(b1.back().y.size(), 2u);
  std::size_t total = 0;
  for (const auto& b : b1) total += b.y.size();
  EXPECT_EQ(total, 10u);
  EXPECT_EQ(b1[0].tokens.ids, b2[0].tokens.ids);  // same seed, same order
  bool any_diff = false;
  for (std::size_t i = 0; i < b1.size() && !any_diff; ++i)
    any_diff = b1[i].tokens.ids != b3[i].tokens.ids;
  EXPECT_TRUE(any_diff);  // different seed reorders
}

TEST(Batching, EffectiveMaxLenTracksLongestPost) {
  auto split = tiny_split(4, 2, 2);
  split.train[0].text = "one two three four five";
  auto vocab =
      bb::Vocab::build({"one two three four five bad fine word0 word1 word2 word3"});
  EXPECT_EQ(trainer::effective_max_len(split, vocab, 128), 6);  // 5 words + start
  EXPECT_EQ(trainer::effective_max_len(split, vocab, 4), 4);    // capped
}

TEST(Trainer, DeterministicUnderSeed) {
  auto split = tiny_split();
  auto cfg = tiny_config();
  cfg.max_epochs = 2;
  auto r1 = trainer::train(split, cfg);
  auto r2 = trainer::train(split, cfg);
  ASSERT_EQ(r1.report.history.size(), r2.report.history.size());
  for (std::size_t i = 0; i < r1.report.history.size(); ++i) {
    EXPECT_DOUBLE_EQ(r1.report.history[i].mean_losses.combined,
                     r2.report.history[i].mean_losses.combined);
    EXPECT_DOUBLE_EQ(r1.report.history[i].val_macro_f1, r2.report.history[i].val_macro_f1);
  }
  EXPECT_DOUBLE_EQ(param_checksum(r1.model->params()), param_checksum(r2.model->params()));
}

TEST(Trainer, DifferentSeedDiverges) {
  auto split = tiny_split();
  auto cfg = tiny_config();
  cfg.max_epochs = 1;
  auto r1 = trainer::train(split, cfg);
  cfg.seed = 12;
  auto r2 = trainer::train(split, cfg);
  EXPECT_NE(r1.report.history[0].mean_losses.combined,
            r2.report.history[0].mean_losses.combined);
}

TEST(Trainer, OneStepLowersLossOnFixedBatch) {
  auto split = tiny_split();
  auto cfg = tiny_config();
  auto backbone = trainer::make_desk_backbone(split, cfg);
  catchd::disentangler::DisentanglerConfig dcfg;
  dcfg.h_d = cfg.h_d;
  dcfg.h_causal = cfg.h_causal;
  dcfg.h_disc = cfg.h_disc;
  catchd::model::CatchModel m(backbone, dcfg, cfg.seed);
  auto batches = trainer::make_batches(split.train, *backbone, 6, 16, nullptr);
  ASSERT_EQ(batches.size(), 1u);
  auto& b = batches[0];
  auto eval_loss = [&] {
    return m.forward(b.tokens, b.y, b.t, cfg.coeffs(), trainer::Ablation::full, false,
                     nullptr, nullptr, nullptr).losses.combined;
  };
  double before = eval_loss();
  auto fr = m.forward(b.tokens, b.y, b.t, cfg.coeffs(), trainer::Ablation::full, false,
                      nullptr, nullptr, nullptr);
  m.params().zero_grads();
  ad::backward(fr.combined);
  trainer::AdamW opt(m.params(), 1e-3, 0.0);
  opt.clip_grads(1.0);
  opt.step();
  EXPECT_LT(eval_loss(), before);
}

TEST(Trainer, NoFinetuneKeepsBackboneFixed) {
  auto split = tiny_split();
  auto cfg = tiny_config();
  auto backbone = trainer::make_desk_backbone(split, cfg);
  catchd::disentangler::DisentanglerConfig dcfg;
  dcfg.h_d = cfg.h_d;
  dcfg.h_causal = cfg.h_causal;
  dcfg.h_disc = cfg.h_disc;
  catchd::model::CatchModel m(backbone, dcfg, cfg.seed);
  double enc_before = param_checksum(backbone->encoder_params());
  double dec_before = param_checksum(backbone->decoder_params());
  double head_before = param_checksum(m.head().params());
  auto batches = trainer::make_batches(split.train, *backbone, 6, 16, nullptr);
  auto fr = m.forward(batches[0].tokens, batches[0].y, batches[0].t, cfg.coeffs(),
                      trainer::Ablation::no_finetune, false, nullptr, nullptr, nullptr);
  m.params().zero_grads();
  ad::backward(fr.combined);
  trainer::AdamW opt(m.params(), 1e-2, 0.0);
  opt.freeze(backbone->encoder_params());
  opt.freeze(backbone->decoder_params());
  opt.step();
  EXPECT_DOUBLE_EQ(param_checksum(backbone->encoder_params()), enc_before);
  EXPECT_DOUBLE_EQ(param_checksum(backbone->decoder_params()), dec_before);
  EXPECT_NE(param_checksum(m.head().params()), head_before);
}

TEST(Trainer, EarlyStoppingHonorsPatience) {
  auto split = tiny_split();
  auto cfg = tiny_config();
  cfg.max_epochs = 12;
  cfg.patience = 2;
  cfg.learning_rate = 1e-5;  // slow learner so validation F1 plateaus
  auto r = trainer::train(split, cfg);
  EXPECT_LE(r.report.stopping_epoch, cfg.max_epochs);
  if (r.report.stopping_epoch < cfg.max_epochs)
    EXPECT_EQ(r.report.stopping_epoch - r.report.best_epoch, cfg.patience);
  EXPECT_GE(r.report.best_val_macro_f1, 0.0);
  ASSERT_EQ(r.report.history.size(), static_cast<std::size_t>(r.report.stopping_epoch));
}

TEST(Trainer, TauAnnealingFollowsSchedule) {
  auto split = tiny_split(8, 4, 4);
  auto cfg = tiny_config();
  cfg.max_epochs = 3;
  cfg.patience = 5;
  cfg.anneal_tau = true;
  cfg.anneal_rate = 1.0;
  cfg.tau = 0.5;
  auto r = trainer::train(split, cfg);
  // after the last epoch the live tau is the epoch-3 value
  double expected = std::max(0.1, 0.5 * std::exp(-1.0 * 2));
  EXPECT_NEAR(r.model->disent().config().tau, expected, 1e-12);
}

TEST(Trainer, RejectsEmptySplits) {
  auto split = tiny_split();
  split.validation.clear();
  EXPECT_THROW(trainer::train(split, tiny_config()), std::invalid_argument);
}

TEST(Trainer, ZOnlyBaselineTrainsAndPredicts) {
  auto split = tiny_split();
  auto cfg = tiny_config();
  cfg.max_epochs = 2;
  auto r = trainer::train_z_only(split, cfg);
  std::vector<std::string> texts;
  for (const auto& p : split.test) texts.push_back(p.text);
  auto pred = r.model->predict_hate(r.model->bb().tokenize(texts, r.used_max_len));
  EXPECT_EQ(pred.size(), split.test.size());
  for (int y : pred) EXPECT_TRUE(y == 0 || y == 1);
}

}  // namespace
