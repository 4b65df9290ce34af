#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <gtest/gtest.h>

#include "nfanneal/annealer.hpp"

namespace nfanneal {
namespace {

/// Likelihood identically 1: the annealed target is the prior at every beta.
class FlatLikelihoodTarget final : public AnnealedTarget {
 public:
  std::size_t dim() const override { return 2; }
  std::string name() const override { return "flat"; }
  TargetTerms terms(std::span<const double> x) const override {
    return {-0.5 * (x[0] * x[0] + x[1] * x[1]) - std::log(2.0 * std::numbers::pi), 0.0};
  }
  void sample_base(Rng& rng, std::span<double> out) const override {
    for (double& v : out) v = rng.normal();
  }
};

AnnealConfig small_config() {
  AnnealConfig cfg;
  cfg.layers = 2;
  cfg.batch_size = 128;
  cfg.update_steps = 5;
  cfg.window = 4;
  cfg.adam.learning_rate = 1e-3;
  cfg.min_final_batches = 5;
  cfg.ema_decay = 0.2;
  cfg.seed = 3;
  return cfg;
}

TEST(Anneal, FlatLikelihoodJumpsStraightToOne) {
  const FlatLikelihoodTarget target;
  const auto result = anneal_run(target, small_config());
  std::size_t updates = 0;
  for (const auto& b : result.batches) {
    if (b.beta_updated) {
      ++updates;
      EXPECT_EQ(b.beta, 0.0);
    }
  }
  EXPECT_EQ(updates, 1u);
  ASSERT_EQ(result.stages.size(), 2u);
  EXPECT_EQ(result.stages[0].beta, 0.0);
  EXPECT_EQ(result.stages[1].beta, 1.0);
  EXPECT_GE(result.stages[1].batches, 5u);
}

TEST(Anneal, BetaIsMonotoneAndReachesOne) {
  const ConjugateGaussianTarget target({1.5, -1.0}, 0.1);
  auto cfg = small_config();
  cfg.batch_size = 256;
  cfg.update_steps = 10;
  const auto result = anneal_run(target, cfg);
  double prev = 0.0;
  for (const auto& b : result.batches) {
    EXPECT_GE(b.beta, prev);
    prev = b.beta;
  }
  EXPECT_EQ(result.stages.back().beta, 1.0);
  for (std::size_t s = 1; s < result.stages.size(); ++s) {
    EXPECT_GT(result.stages[s].beta, result.stages[s - 1].beta);
  }
  EXPECT_GT(result.stages.size(), 2u);
  EXPECT_EQ(result.likelihood_evaluations, result.batches.size() * cfg.batch_size);
  EXPECT_EQ(result.batches.back().likelihood_evaluations, result.likelihood_evaluations);
}

TEST(Anneal, ArchiveCachesMatchTarget) {
  const TrimodalTarget target(2.0, 0.7, 3.0);
  auto cfg = small_config();
  cfg.mode = ScheduleMode::kFixed;
  cfg.fixed_beta = 0.5;
  cfg.fixed_batches = 6;
  const auto result = anneal_run(target, cfg);
  EXPECT_EQ(result.batches.size(), 6u);
  EXPECT_EQ(result.archive.batch_count(), 4u);
  for (const auto& e : result.archive.entries()) {
    for (Eigen::Index i = 0; i < e.samples.cols(); ++i) {
      const auto col = e.samples.col(i);
      const auto t = target.terms(std::span<const double>(col.data(), 2));
      ASSERT_EQ(t.log_base, e.log_base[i]);
      ASSERT_EQ(t.log_update, e.log_update[i]);
    }
  }
}

TEST(Anneal, SameSeedSameRun) {
  const ConjugateGaussianTarget target({0.5, 0.5}, 0.5);
  auto cfg = small_config();
  cfg.mode = ScheduleMode::kFixed;
  cfg.fixed_batches = 3;
  const auto a = anneal_run(target, cfg);
  const auto b = anneal_run(target, cfg);
  EXPECT_EQ(a.final_model.parameters(), b.final_model.parameters());
  cfg.threads = 3;
  const auto c = anneal_run(target, cfg);
  EXPECT_EQ(a.final_model.parameters(), c.final_model.parameters());
}

TEST(Anneal, PresetScheduleFollowsPowerLadder) {
  const ConjugateGaussianTarget target({0.5, 0.5}, 0.5);
  auto cfg = small_config();
  cfg.mode = ScheduleMode::kPreset;
  cfg.preset_stages = 4;
  cfg.preset_exponent = 2.0;
  cfg.preset_batches_per_stage = 2;
  const auto result = anneal_run(target, cfg);
  ASSERT_EQ(result.stages.size(), 5u);
  for (std::size_t s = 0; s < 5; ++s) {
    EXPECT_DOUBLE_EQ(result.stages[s].beta, std::pow(s / 4.0, 2.0));
    EXPECT_EQ(result.stages[s].batches, 2u);
  }
}

TEST(Anneal, StallIsReported) {
  const ConjugateGaussianTarget target({0.0, 0.0}, 1.0);
  auto cfg = small_config();
  cfg.ess_threshold_ratio = 0.999;  // fresh batches never reach this
  cfg.ema_decay = 0.01;
  cfg.stall_batches = 4;
  EXPECT_THROW(anneal_run(target, cfg), ScheduleStallError);
}

TEST(Anneal, ObserverSeesEveryBatchAndStage) {
  const FlatLikelihoodTarget target;
  std::size_t batches = 0, stages = 0;
  AnnealObserver obs;
  obs.on_batch = [&](const BatchRecord&) { ++batches; };
  obs.on_stage = [&](const StageRecord&) { ++stages; };
  const auto result = anneal_run(target, small_config(), obs);
  EXPECT_EQ(batches, result.batches.size());
  EXPECT_EQ(stages, result.stages.size());
}

TEST(Anneal, InvalidConfigRejected) {
  const FlatLikelihoodTarget target;
  auto cfg = small_config();
  cfg.gamma = 1.5;
  EXPECT_THROW(anneal_run(target, cfg), InputError);
  cfg = small_config();
  cfg.ess_threshold_ratio = 1.0;
  EXPECT_THROW(anneal_run(target, cfg), InputError);
  cfg = small_config();
  cfg.mode = ScheduleMode::kFixed;
  EXPECT_THROW(anneal_run(target, cfg), InputError);
}

TEST(TiLadderFromStages, PerfectCheckpointsGiveClosedForm) {
  // Stage checkpoints replaced by flows equal to the prior; reweighting then
  // recovers E_beta[log p_u] exactly in expectation.
  const ConjugateGaussianTarget target({0.6}, 2.0);
  class Padded final : public AnnealedTarget {
   public:
    explicit Padded(const ConjugateGaussianTarget& t) : t_(t) {}
    std::size_t dim() const override { return 2; }
    std::string name() const override { return "padded"; }
    TargetTerms terms(std::span<const double> x) const override {
      auto a = t_.terms(x.first(1));
      a.log_base += -0.5 * x[1] * x[1] - 0.5 * std::log(2.0 * std::numbers::pi);
      return a;
    }
    void sample_base(Rng& rng, std::span<double> out) const override {
      for (double& v : out) v = rng.normal();
    }

   private:
    const ConjugateGaussianTarget& t_;
  } padded(target);
  std::vector<StageRecord> stages;
  for (double beta : {0.0, 0.1, 0.3, 0.6, 1.0}) {
    StageRecord s;
    s.beta = beta;
    s.checkpoint = FlowModel(2, 2);
    stages.push_back(s);
  }
  const auto ladder = nf_ti_ladder(padded, stages, 40000, 5);
  ASSERT_EQ(ladder.points.size(), 5u);
  for (const auto& p : ladder.points) {
    EXPECT_NEAR(p.integrand, target.expected_log_update(p.beta), 0.02) << p.beta;
  }
}

}  // namespace
}  // namespace nfanneal
