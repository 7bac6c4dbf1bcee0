#include <gtest/gtest.h>

#include <set>

#include "adaptct/env.hpp"
#include "adaptct/phantoms.hpp"

using namespace adaptct;

namespace {

constexpr int kSide = 32;

std::shared_ptr<const Projector> shared_projector() {
  static const auto p = std::make_shared<const Projector>(Geometry::for_image(kSide));
  return p;
}

ReconConfig quick_recon() {
  ReconConfig c;
  c.iterations = 30;
  return c;
}

Image ellipse(double rotation) {
  ShapeSpec s;
  s.kind = ShapeKind::ellipse;
  s.rotation_deg = rotation;
  s.scale = 0.7;
  s.center_x = 15.2;
  s.center_y = 16.1;
  return rasterize_shape(s, kSide);
}

}  // namespace

TEST(Reset, StartsFromNothing) {
  const Environment env(shared_projector(), quick_recon(), RewardMode::end_to_end);
  const Image truth = ellipse(30);
  const EpisodeState s = env.reset(truth, 3, 0.0);
  EXPECT_EQ(s.recon, Image(kSide));
  EXPECT_EQ(s.angle_vec, std::vector<double>(kAngleCount, 0.0));
  EXPECT_TRUE(s.measurements.empty());
  EXPECT_EQ(s.step_index, 0);
  ASSERT_EQ(s.psnr_curve.size(), 1u);
  EXPECT_EQ(s.psnr_curve[0], psnr(Image(kSide), truth));
  EXPECT_FALSE(s.done());
}

TEST(Reset, IsDeterministicAndValidates) {
  const Environment env(shared_projector(), quick_recon(), RewardMode::end_to_end);
  const Image truth = ellipse(60);
  const EpisodeState a = env.reset(truth, 4, 0.05), b = env.reset(truth, 4, 0.05);
  EXPECT_EQ(a.noise_sigma, b.noise_sigma);
  EXPECT_EQ(a.noise_sigma, noise_sigma_for_level(truth, 0.05, *shared_projector()));
  EXPECT_EQ(a.recon, b.recon);
  EXPECT_EQ(a.psnr_curve, b.psnr_curve);
  EXPECT_THROW(env.reset(truth, 0, 0.0), DomainError);
  EXPECT_THROW(env.reset(Image(kSide + 8), 3, 0.0), DomainError);
}

TEST(Step, EndToEndPaysOnlyAtTheEnd) {
  const Environment env(shared_projector(), quick_recon(), RewardMode::end_to_end);
  EpisodeState s = env.reset(ellipse(10), 4, 0.0);
  Rng rng(1);
  for (int a : {0, 45, 90}) {
    const StepResult r = env.step(s, a, rng);
    EXPECT_EQ(r.reward, 0.0);
    EXPECT_FALSE(r.done);
  }
  const StepResult last = env.step(s, 135, rng);
  EXPECT_TRUE(last.done);
  EXPECT_EQ(last.reward, psnr(s.recon, s.truth));
  EXPECT_EQ(last.reward, s.psnr_curve.back());
}

TEST(Step, IncrementalRewardsTelescope) {
  const Environment env(shared_projector(), quick_recon(), RewardMode::incremental);
  Rng pick(4);
  for (int episode = 0; episode < 10; ++episode) {
    const Image truth = ellipse(5.0 * episode);
    EpisodeState s = env.reset(truth, 5, episode % 2 ? 0.05 : 0.0);
    Rng rng(episode);
    double total = 0.0;
    while (!s.done()) total += env.step(s, static_cast<int>(uniform_index(pick, kAngleCount)), rng).reward;
    EXPECT_NEAR(total, s.psnr_curve.back() - psnr(Image(kSide), truth), 1e-9);
  }
}

TEST(Step, RepeatingANoiselessAngleAddsNothing) {
  const Environment env(shared_projector(), quick_recon(), RewardMode::incremental);
  for (int a : {0, 33, 90, 179}) {
    EpisodeState s = env.reset(ellipse(40), 2, 0.0);
    Rng rng(2);
    EXPECT_GT(env.step(s, a, rng).reward, 0.0);
    EXPECT_NEAR(env.step(s, a, rng).reward, 0.0, 1e-9);
    EXPECT_EQ(s.measurements.size(), 2u);  // the duplicate is kept
    EXPECT_EQ(std::count(s.angle_vec.begin(), s.angle_vec.end(), 1.0), 1);
  }
}

TEST(Step, RejectsFinishedEpisodesAndBadAngles) {
  const Environment env(shared_projector(), quick_recon(), RewardMode::end_to_end);
  EpisodeState s = env.reset(ellipse(0), 1, 0.0);
  Rng rng(0);
  EXPECT_THROW(env.step(s, 180, rng), DomainError);
  EXPECT_THROW(env.step(s, -3, rng), DomainError);
  EXPECT_EQ(s.step_index, 0);
  env.step(s, 10, rng);
  EXPECT_THROW(env.step(s, 20, rng), StateError);
}

// Random action sequences: the state bookkeeping invariants hold after
// every step.
TEST(Step, StateInvariantsUnderRandomPlay) {
  const Environment env(shared_projector(), quick_recon(), RewardMode::end_to_end);
  Rng pick(99);
  for (int episode = 0; episode < 12; ++episode) {
    const int horizon = 1 + episode % 6;
    EpisodeState s = env.reset(ellipse(15.0 * episode), horizon, 0.02);
    Rng rng(episode);
    int steps = 0;
    while (!s.done()) {
      const int a = static_cast<int>(uniform_index(pick, 12)) * 15;  // small grid: repeats happen
      const StepResult r = env.step(s, a, rng);
      ++steps;
      EXPECT_EQ(r.done, steps == horizon);
      EXPECT_EQ(s.step_index, static_cast<int>(s.measurements.size()));
      EXPECT_LE(s.step_index, s.horizon);
      std::set<int> seen;
      for (const auto& m : s.measurements) seen.insert(m.angle_deg);
      for (int t = 0; t < kAngleCount; ++t) ASSERT_EQ(s.angle_vec[t] == 1.0, seen.count(t) == 1) << t;
      for (double v : s.angle_vec) ASSERT_TRUE(v == 0.0 || v == 1.0);
      // cold start: the belief is SIRT from zero over everything measured
      EXPECT_EQ(s.recon, sirt_reconstruct(s.measurements, *shared_projector(), quick_recon(), Image(kSide)));
      EXPECT_EQ(s.psnr_curve.size(), static_cast<std::size_t>(steps + 1));
    }
    EXPECT_EQ(steps, horizon);
  }
}

TEST(Step, NoiselessEpisodesIgnoreTheRng) {
  const Environment env(shared_projector(), quick_recon(), RewardMode::incremental);
  const std::vector<int> actions{12, 80, 80, 150};
  EpisodeState a = env.reset(ellipse(70), 4, 0.0), b = env.reset(ellipse(70), 4, 0.0);
  Rng ra(1), rb(123456);
  for (int act : actions) EXPECT_EQ(env.step(a, act, ra).reward, env.step(b, act, rb).reward);
  EXPECT_EQ(a.recon, b.recon);
  EXPECT_EQ(a.angle_vec, b.angle_vec);
  EXPECT_EQ(a.psnr_curve, b.psnr_curve);
}

TEST(Step, NoisyEpisodesFollowTheRngState) {
  const Environment env(shared_projector(), quick_recon(), RewardMode::incremental);
  EpisodeState a = env.reset(ellipse(70), 3, 0.05), b = env.reset(ellipse(70), 3, 0.05),
               c = env.reset(ellipse(70), 3, 0.05);
  Rng ra(5), rb(5), rc(6);
  for (int act : {3, 63, 123}) {
    env.step(a, act, ra);
    env.step(b, act, rb);
    env.step(c, act, rc);
  }
  EXPECT_EQ(a.measurements, b.measurements);
  EXPECT_EQ(a.recon, b.recon);
  EXPECT_NE(a.measurements, c.measurements);
  EXPECT_GT(a.noise_sigma, 0.0);
}

TEST(Step, WarmStartContinuesFromThePreviousBelief) {
  ReconConfig warm = quick_recon();
  warm.warm_start = true;
  const Environment env(shared_projector(), warm, RewardMode::end_to_end);
  EpisodeState s = env.reset(ellipse(20), 2, 0.0);
  Rng rng(0);
  env.step(s, 0, rng);
  const Image first = s.recon;
  env.step(s, 90, rng);
  EXPECT_EQ(s.recon, sirt_reconstruct(s.measurements, *shared_projector(), warm, first));
  EXPECT_NE(s.recon, sirt_reconstruct(s.measurements, *shared_projector(), warm, Image(kSide)));
}

TEST(RewardMode, ParsesItsNames) {
  EXPECT_EQ(parse_reward_mode("end_to_end"), RewardMode::end_to_end);
  EXPECT_EQ(parse_reward_mode(to_string(RewardMode::incremental)), RewardMode::incremental);
  EXPECT_THROW(parse_reward_mode("final"), ConfigError);
}
