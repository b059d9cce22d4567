#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mfmpc/costs.hpp"
#include "mfmpc/dynamics.hpp"

using namespace mfmpc;

namespace {

ModelConfig alignment(double gain, double dt = 1.0, double nu = 1.0) {
  ModelConfig cfg;
  cfg.kernel_gain = gain;
  cfg.dt = dt;
  cfg.nu = nu;
  return cfg;
}

} // namespace

TEST(ModelConfig, ValidationAndWarnings) {
  auto cfg = alignment(0.05);
  EXPECT_TRUE(cfg.validate().empty());
  cfg.kernel_gain = 3.0;
  EXPECT_EQ(cfg.validate().size(), 1u);
  cfg.dt = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = alignment(0.05);
  cfg.nu = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = alignment(0.05);
  cfg.kernel = CustomKernel{};
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg.control_bound = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
}

TEST(ModelConfig, MeanReducibility) {
  auto cfg = alignment(0.1);
  EXPECT_TRUE(cfg.mean_reducible());
  cfg.kernel = CustomKernel{[](double r) { return std::sin(r); }, true};
  EXPECT_TRUE(cfg.mean_reducible());
  cfg.kernel = CustomKernel{[](double r) { return r * r; }, false};
  EXPECT_FALSE(cfg.mean_reducible());
}

TEST(StepParticles, AlignmentMatchesPairwiseSum) {
  const auto f = sample_uniform(300, Interval{}, 3);
  const auto cfg = alignment(0.3, 0.5);
  const auto fast = step_particles(f, 0.2, cfg);
  const auto slow = step_particles_pairwise(f, 0.2, cfg, [](double r) { return r; });
  ASSERT_EQ(fast.size(), slow.size());
  for (std::size_t i = 0; i < fast.size(); ++i)
    EXPECT_NEAR(fast.particles()[i], slow.particles()[i], 1e-14);
}

TEST(StepParticles, FastPathMatchesPairwiseUpToThousandParticles) {
  for (std::size_t m : {1u, 17u, 1000u}) {
    const auto f = sample_uniform(m, Interval{}, m);
    const auto cfg = alignment(0.05);
    const auto fast = step_particles(f, -0.03, cfg);
    const auto slow = step_particles_pairwise(f, -0.03, cfg, [](double r) { return r; });
    for (std::size_t i = 0; i < m; ++i)
      EXPECT_NEAR(fast.particles()[i], slow.particles()[i], 1e-12);
  }
}

TEST(StepParticles, MeanConservedWithoutControl) {
  const auto f = sample_uniform(3000, Interval{-0.2, 1.0}, 12);
  const auto cfg = alignment(0.4);
  const double before = moments(f).mean;
  EXPECT_NEAR(moments(step_particles(f, 0.0, cfg)).mean, before, 1e-13 * std::abs(before));
}

TEST(StepParticles, CollapseAtUnitGainIsAllowed) {
  const auto f = sample_uniform(100, Interval{}, 12);
  auto cfg = alignment(1.0);
  EXPECT_TRUE(cfg.validate().empty());
  const auto g = step_particles(f, 0.0, cfg);
  EXPECT_NEAR(moments(g).variance, 0.0, 1e-30);
}

TEST(StepParticles, MeanMovesByControlOnly) {
  const auto f = sample_uniform(10000, Interval{}, 9);
  const auto cfg = alignment(0.05);
  const auto g = step_particles(f, -0.1, cfg);
  EXPECT_NEAR(moments(g).mean, moments(f).mean - 0.1, 1e-15);
  EXPECT_NEAR(moments(g).mean, step_mean(moments(f).mean, -0.1, cfg), 1e-15);
}

TEST(StepParticles, VarianceContractsByFixedFactor) {
  const auto f = sample_uniform(10000, Interval{}, 11);
  const auto cfg = alignment(0.2, 0.5);
  const double keep = 1.0 - 0.1;
  const auto g = step_particles(f, 0.37, cfg);
  EXPECT_NEAR(moments(g).variance / moments(f).variance, keep * keep, 1e-12);
}

TEST(StepParticles, AntisymmetricCustomKernelKeepsMean) {
  const auto f = sample_uniform(200, Interval{}, 1);
  ModelConfig cfg = alignment(1.0);
  cfg.kernel = CustomKernel{[](double r) { return std::tanh(3.0 * r); }, true};
  const auto g = step_particles(f, 0.05, cfg);
  EXPECT_NEAR(moments(g).mean, moments(f).mean + 0.05, 1e-14);
}

TEST(StepSecondMoment, MatchesParticles) {
  const auto f = sample_uniform(5000, Interval{}, 21);
  const auto cfg = alignment(0.3);
  const auto s = moments(f);
  const auto g = step_particles(f, 0.4, cfg);
  EXPECT_NEAR(step_second_moment(s.mean, s.second_moment, 0.4, cfg), moments(g).second_moment, 1e-13);
  const auto reduced = step_moments(s, 0.4, cfg);
  EXPECT_NEAR(reduced.variance, moments(g).variance, 1e-13);
  EXPECT_TRUE(reduced.consistent());
}

TEST(StepSecondMoment, RejectsUnsupportedInputs) {
  auto cfg = alignment(0.3);
  EXPECT_THROW(step_second_moment(1.0, 0.5, 0.0, cfg), InvalidInput);
  cfg.kernel = CustomKernel{[](double r) { return r; }, true};
  EXPECT_THROW(step_second_moment(0.0, 1.0, 0.0, cfg), InvalidInput);
}

TEST(Simulate, SequenceAndFeedbackAgree) {
  const auto cfg = alignment(0.05, 1.0, 2.0);
  const QuadraticMeanCost cost(2.0);
  const auto f = sample_uniform(500, Interval{}, 4);
  const std::vector<double> us{0.1, -0.2, 0.05, 0.0};
  const auto a = simulate<EmpiricalMeasure>(f, ControlSequence{us}, 4, cfg, cost);
  std::size_t n = 0;
  Feedback<EmpiricalMeasure> fb = [&](const EmpiricalMeasure&) { return us[n++]; };
  const auto b = simulate<EmpiricalMeasure>(f, fb, 4, cfg, cost);
  EXPECT_EQ(a.total_cost, b.total_cost);
  EXPECT_EQ(a.states.back(), b.states.back());
  EXPECT_TRUE(a.consistent());
  EXPECT_EQ(a.steps(), 4u);
  EXPECT_EQ(a.states.size(), 5u);
}

TEST(Simulate, CostsArePricedBeforeTheStep) {
  const auto cfg = alignment(0.0);
  const QuadraticMeanCost cost(1.0);
  const auto traj =
      simulate<MomentSummary>(MomentSummary::point_mass(1.0), ControlSequence{{-0.5, 0.0}}, 2, cfg, cost);
  EXPECT_DOUBLE_EQ(traj.step_costs[0], 0.5 + 0.125);
  EXPECT_DOUBLE_EQ(traj.step_costs[1], 0.125);
  EXPECT_DOUBLE_EQ(traj.moments[2].mean, 0.5);
}

TEST(Simulate, ShortSequenceAndMomentCustomKernelThrow) {
  auto cfg = alignment(0.05);
  const QuadraticMeanCost cost(1.0);
  EXPECT_THROW(simulate<MomentSummary>(MomentSummary::point_mass(1.0), ControlSequence{{0.0}}, 2, cfg, cost),
               InvalidInput);
  cfg.kernel = CustomKernel{[](double r) { return r; }, true};
  EXPECT_THROW(simulate<MomentSummary>(MomentSummary::point_mass(1.0), ControlSequence{{0.0}}, 1, cfg, cost),
               InvalidInput);
}

TEST(Simulate, ObserverStreamingAndDomainFlag) {
  const auto cfg = alignment(0.05);
  const QuadraticMeanCost cost(1.0);
  SimulateOptions<EmpiricalMeasure> opts;
  opts.record_states = false;
  std::vector<std::size_t> seen;
  opts.observer = [&](std::size_t n, const EmpiricalMeasure&) { seen.push_back(n); };
  const auto f = sample_uniform(100, Interval{}, 8);
  const auto traj = simulate<EmpiricalMeasure>(f, ControlSequence{{0.5, 0.5, 0.5}}, 3, cfg, cost, opts);
  EXPECT_TRUE(traj.states.empty());
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_TRUE(traj.left_domain);
  EXPECT_TRUE(traj.consistent());
}

TEST(Simulate, SingleParticleHasNoVariance) {
  const auto cfg = alignment(0.05);
  const QuadraticMeanCost cost(1.0);
  const EmpiricalMeasure f({0.3}, Interval{});
  const auto traj = simulate<EmpiricalMeasure>(f, ControlSequence{std::vector<double>(20, -0.01)}, 20, cfg, cost);
  for (const auto& m : traj.moments)
    EXPECT_EQ(m.variance, 0.0);
}
