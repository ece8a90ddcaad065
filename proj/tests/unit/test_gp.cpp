#include "coactivity/errors.hpp"
#include "coactivity/gp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace coact {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

GpHyperParams small_hyper() {
  GpHyperParams h;
  h.length_scale_s = 60.0;
  h.signal_std_m = 5.0;
  h.mean = Vec2(1.0, -2.0);
  return h;
}

GpsObservation obs(double t, double x, double y, double sd = 1.0, ActorId a = ActorId(0)) {
  return {a, t, Vec2(x, y), sd};
}

TEST(BuildGp, NoObservationsGivesPrior) {
  const TimeGrid grid{0.0, 100.0, 11};
  const auto h = small_hyper();
  const auto post = build_gp(ActorId(0), {}, h, grid);
  for (int i = 0; i < grid.n_points; ++i) {
    EXPECT_EQ(post.mean()(i, 0), 1.0);
    EXPECT_EQ(post.mean()(i, 1), -2.0);
    EXPECT_NEAR(post.covariance()(i, i), 25.0 * (1.0 + 1e-9), 1e-12);
  }
}

TEST(BuildGp, NearNoiselessObservationInterpolates) {
  const TimeGrid grid{0.0, 100.0, 11};
  const std::vector<GpsObservation> o{obs(40.0, 7.0, 3.0, 1e-4)};
  const auto post = build_gp(ActorId(0), o, small_hyper(), grid);
  EXPECT_NEAR(post.mean()(4, 0), 7.0, 1e-6);
  EXPECT_NEAR(post.mean()(4, 1), 3.0, 1e-6);
  EXPECT_LT(post.covariance()(4, 4), 1e-6);
}

TEST(BuildGp, MatchesSchurComplementOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const TimeGrid grid{0.0, 300.0, 20};
  GpHyperParams h = small_hyper();
  std::vector<GpsObservation> o;
  for (int k = 0; k < 5; ++k) o.push_back(obs(300.0 * u(rng), 10.0 * u(rng), 10.0 * u(rng), 0.5 + u(rng)));
  const auto post = build_gp(ActorId(0), o, h, grid);
  const auto ref = oracle::gp_posterior(o, h, grid);
  EXPECT_LE(oracle::max_abs_diff(post.mean(), ref.mean), 1e-8);
  EXPECT_LE(oracle::max_abs_diff(post.covariance(), ref.cov), 1e-8);
}

TEST(BuildGp, PosteriorVarianceNeverExceedsPrior) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = oracle::random_gp_case(rng, ActorId(0));
    const auto prior = build_gp(ActorId(0), {}, c.hyper, c.grid);
    const auto post = build_gp(ActorId(0), c.obs, c.hyper, c.grid);
    for (int i = 0; i < c.grid.n_points; ++i) {
      EXPECT_LE(post.covariance()(i, i), prior.covariance()(i, i) + 1e-12);
    }
  }
}

TEST(BuildGp, MoreObservationsNeverIncreaseVariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = oracle::random_gp_case(rng, ActorId(0));
    std::vector<GpsObservation> subset(c.obs.begin(), c.obs.begin() + (c.obs.size() + 1) / 2);
    const auto small = build_gp(ActorId(0), subset, c.hyper, c.grid);
    const auto full = build_gp(ActorId(0), c.obs, c.hyper, c.grid);
    for (int i = 0; i < c.grid.n_points; ++i) {
      EXPECT_GE(small.covariance()(i, i), full.covariance()(i, i) - 1e-10);
    }
  }
}

TEST(BuildGp, RejectsBadInputs) {
  const TimeGrid grid{0.0, 100.0, 11};
  GpHyperParams h = small_hyper();
  h.length_scale_s = 0.0;
  EXPECT_THROW(build_gp(ActorId(0), {}, h, grid), ConfigError);
  const std::vector<GpsObservation> zero{obs(10.0, 0.0, 0.0, 0.0)};
  EXPECT_THROW(build_gp(ActorId(0), zero, small_hyper(), grid), ConfigError);
  const std::vector<GpsObservation> other{obs(10.0, 0.0, 0.0, 1.0, ActorId(1))};
  EXPECT_THROW(build_gp(ActorId(0), other, small_hyper(), grid), ContractError);
  EXPECT_THROW(build_gp(ActorId(0), {}, small_hyper(), TimeGrid{0.0, 0.0, 11}), ConfigError);
}

TEST(SampleTrajectories, ZeroCovarianceReturnsMean) {
  const TimeGrid grid{0.0, 10.0, 4};
  Eigen::MatrixX2d mean(4, 2);
  mean << 1, 2, 3, 4, 5, 6, 7, 8;
  const GpPosterior post({ActorId(0)}, grid, mean, Eigen::MatrixXd::Zero(4, 4), {}, 1.0);
  const auto ens = sample_trajectories(post, 5, 1);
  for (const auto& d : ens.draws) EXPECT_EQ(d, mean);
}

TEST(SampleTrajectories, SameSeedSameEnsemble) {
  const TimeGrid grid{0.0, 100.0, 15};
  const std::vector<GpsObservation> o{obs(20.0, 1.0, 1.0), obs(70.0, 4.0, -1.0)};
  const auto post = build_gp(ActorId(0), o, small_hyper(), grid);
  const auto a = sample_trajectories(post, 8, 42);
  const auto b = sample_trajectories(post, 8, 42);
  const auto c = sample_trajectories(post, 8, 43);
  EXPECT_EQ(a.draws, b.draws);
  EXPECT_EQ(a.log_density, b.log_density);
  EXPECT_NE(a.draws, c.draws);
}

TEST(SampleTrajectories, EmpiricalCovarianceMatches) {
  const TimeGrid grid{0.0, 20.0, 3};
  GpHyperParams h = small_hyper();
  h.length_scale_s = 40.0;
  const std::vector<GpsObservation> o{obs(5.0, 1.0, 2.0, 2.0)};
  const auto post = build_gp(ActorId(0), o, h, grid);
  const int n = 10000;
  const auto ens = sample_trajectories(post, n, 7);
  for (int c = 0; c < 2; ++c) {
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (const auto& d : ens.draws) m += d.col(c);
    m /= n;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& d : ens.draws) {
      const Eigen::Vector3d z = d.col(c) - m;
      cov += z * z.transpose();
    }
    cov /= n - 1;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double ref = post.covariance()(i, j);
        EXPECT_LE(std::abs(cov(i, j) - ref), 0.05 * std::abs(ref)) << i << "," << j << " coord " << c;
      }
    }
  }
}

TEST(LogDensity, StandardNormalAtMean) {
  const int k = 6;
  const TimeGrid grid{0.0, 10.0, k};
  const Eigen::MatrixX2d mean = Eigen::MatrixX2d::Constant(k, 2, 3.0);
  const GpPosterior post({ActorId(0)}, grid, mean, Eigen::MatrixXd::Identity(k, k), {}, 1.0);
  EXPECT_NEAR(log_density(post, mean), -k * kLog2Pi, 1e-12);
}

TEST(LogDensity, MatchesDirectQuadraticForm) {
  const TimeGrid grid{0.0, 200.0, 12};
  const std::vector<GpsObservation> o{obs(30.0, 1.0, 1.0), obs(150.0, -3.0, 2.0)};
  const auto post = build_gp(ActorId(0), o, small_hyper(), grid);
  const auto ens = sample_trajectories(post, 3, 9);
  const Eigen::MatrixXd inv = post.covariance().inverse();
  const double logdet = std::log(post.covariance().determinant());
  for (const auto& d : ens.draws) {
    double ref = 0.0;
    for (int c = 0; c < 2; ++c) {
      const Eigen::VectorXd z = d.col(c) - post.mean().col(c);
      ref += -0.5 * (z.dot(inv * z) + logdet + grid.n_points * kLog2Pi);
    }
    EXPECT_NEAR(log_density(post, d), ref, 1e-10 * std::max(1.0, std::abs(ref)));
  }
}

TEST(LogDensity, TranslationInvariant) {
  const TimeGrid grid{0.0, 100.0, 8};
  const auto post = build_gp(ActorId(0), std::vector{obs(50.0, 2.0, 2.0)}, small_hyper(), grid);
  const auto draw = sample_trajectories(post, 1, 3).draws[0];
  const Eigen::MatrixX2d shift = Eigen::MatrixX2d::Constant(8, 2, 0.0).rowwise() + Eigen::RowVector2d(30.0, -20.0);
  const GpPosterior moved(post.actors(), grid, post.mean() + shift, post.covariance(), {}, post.signal_var());
  EXPECT_DOUBLE_EQ(log_density(post, draw), log_density(moved, draw + shift));
}

ActivityInstance meeting(double start, double span, std::vector<ActorId> p) {
  ActivityInstance a;
  a.center = Vec2::Zero();
  a.radius = 20.0;
  a.start = start;
  a.span = span;
  a.participants = std::move(p);
  return a;
}

TEST(ConditionOnActivity, CoincidingMeansOnlyShrinkVariance) {
  const TimeGrid grid{0.0, 100.0, 11};
  const auto h = small_hyper();
  std::vector<GpPosterior> posts{build_gp(ActorId(0), {}, h, grid), build_gp(ActorId(1), {}, h, grid)};
  const auto a = meeting(25.0, 50.0, {ActorId(0), ActorId(1)});
  for (AuxMode mode : {AuxMode::kStatic, AuxMode::kDynamic}) {
    const auto res = condition_on_activity(posts, a, mode, 2.0);
    EXPECT_FALSE(res.span_outside_grid);
    const auto joint = stack_posteriors(std::vector<const GpPosterior*>{&posts[0], &posts[1]});
    EXPECT_LE(oracle::max_abs_diff(res.joint.mean(), joint.mean()), 1e-12);
    for (int i = 0; i < joint.dim(); ++i) {
      EXPECT_LE(res.joint.covariance()(i, i), joint.covariance()(i, i) + 1e-12);
    }
  }
}

TEST(ConditionOnActivity, TightStaticConstraintPullsToCommonLocation) {
  const TimeGrid grid{0.0, 100.0, 11};
  const auto h = small_hyper();
  std::vector<GpPosterior> posts{
      build_gp(ActorId(0), std::vector{obs(50.0, 4.0, 0.0, 1.0, ActorId(0))}, h, grid),
      build_gp(ActorId(1), std::vector{obs(55.0, -3.0, 2.0, 1.0, ActorId(1))}, h, grid)};
  const auto a = meeting(35.0, 30.0, {ActorId(0), ActorId(1)});
  const auto res = condition_on_activity(posts, a, AuxMode::kStatic, 1e-6);
  const auto& m = res.joint.mean();
  const auto [lo, hi] = grid.index_range(a.start, a.end());
  Eigen::RowVector2d avg = Eigen::RowVector2d::Zero();
  int count = 0;
  for (int blk : {0, grid.n_points}) {
    for (int i = lo; i <= hi; ++i, ++count) avg += m.row(blk + i);
  }
  avg /= count;
  for (int blk : {0, grid.n_points}) {
    for (int i = lo; i <= hi; ++i) EXPECT_LE((m.row(blk + i) - avg).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(ConditionOnActivity, MatchesStackedOracle) {
  const TimeGrid grid{0.0, 90.0, 10};
  const auto h = small_hyper();
  const std::vector<GpsObservation> o0{obs(10.0, 3.0, 1.0, 1.0, ActorId(0)), obs(80.0, 5.0, 2.0, 1.0, ActorId(0))};
  const std::vector<GpsObservation> o1{obs(40.0, -4.0, 0.0, 1.5, ActorId(1))};
  std::vector<GpPosterior> posts{build_gp(ActorId(0), o0, h, grid), build_gp(ActorId(1), o1, h, grid)};
  const auto a = meeting(22.5, 41.0, {ActorId(0), ActorId(1)});
  for (AuxMode mode : {AuxMode::kStatic, AuxMode::kDynamic}) {
    const auto res = condition_on_activity(posts, a, mode, 3.0);
    const auto prior = oracle::stack({oracle::gp_posterior(o0, h, grid), oracle::gp_posterior(o1, h, grid)});
    const auto ref = oracle::condition_zero(
        prior, oracle::aux_rows(2, grid, a.start, a.end(), mode == AuxMode::kDynamic), 3.0);
    EXPECT_LE(oracle::max_abs_diff(res.joint.mean(), ref.mean), 1e-8);
    EXPECT_LE(oracle::max_abs_diff(res.joint.covariance(), ref.cov), 1e-8);
  }
}

TEST(ConditionOnConstraints, MoreRowsThanStateMatchesOracle) {
  const TimeGrid grid{0.0, 90.0, 10};
  const auto h = small_hyper();
  const std::vector<GpsObservation> o0{obs(15.0, 2.0, 1.0, 1.0, ActorId(0))};
  const std::vector<GpsObservation> o1{obs(60.0, -1.0, 3.0, 1.0, ActorId(1))};
  const std::vector<GpPosterior> posts{build_gp(ActorId(0), o0, h, grid), build_gp(ActorId(1), o1, h, grid)};
  const auto joint = stack_posteriors(std::vector<const GpPosterior*>{&posts[0], &posts[1]});
  const std::vector<std::pair<double, double>> spans{{0.0, 90.0}, {5.0, 80.0}, {20.0, 70.0}, {0.0, 45.0}};
  std::vector<AuxObservationSet> sets;
  Eigen::MatrixXd rows(0, joint.dim());
  Eigen::VectorXd sd(0);
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto a = meeting(spans[k].first, spans[k].second - spans[k].first, {ActorId(0), ActorId(1)});
    const double sigma = 1.0 + static_cast<double>(k);
    sets.push_back(make_aux_observations(joint, a, k, AuxMode::kStatic, sigma));
    const auto hk = oracle::aux_rows(2, grid, a.start, a.end(), false);
    rows.conservativeResize(rows.rows() + hk.rows(), Eigen::NoChange);
    rows.bottomRows(hk.rows()) = hk / sigma;
  }
  ASSERT_GT(rows.rows(), joint.dim());
  const auto post = condition_on_constraints(joint, sets);
  const auto ref = oracle::condition_zero(
      oracle::stack({oracle::gp_posterior(o0, h, grid), oracle::gp_posterior(o1, h, grid)}), rows, 1.0);
  EXPECT_LE(oracle::max_abs_diff(post.mean(), ref.mean), 1e-8);
  EXPECT_LE(oracle::max_abs_diff(post.covariance(), ref.cov), 1e-8);
}

TEST(ConditionOnActivity, SpanOffGridIsFlagged) {
  const TimeGrid grid{0.0, 100.0, 11};
  std::vector<GpPosterior> posts{build_gp(ActorId(0), {}, small_hyper(), grid),
                                 build_gp(ActorId(1), {}, small_hyper(), grid)};
  const auto res = condition_on_activity(posts, meeting(500.0, 20.0, {ActorId(0), ActorId(1)}),
                                         AuxMode::kStatic, 1.0);
  EXPECT_TRUE(res.span_outside_grid);
  EXPECT_THROW(condition_on_activity(posts, meeting(10.0, 20.0, {ActorId(0), ActorId(2)}),
                                     AuxMode::kStatic, 1.0),
               ContractError);
}

TEST(SamplingFactor, HandlesSingularAndFailsOnIndefinite) {
  Eigen::MatrixXd rank1 = Eigen::VectorXd::Ones(4) * Eigen::RowVectorXd::Ones(4);
  const auto f = sampling_factor(rank1, 1.0);
  EXPECT_LE(oracle::max_abs_diff(f * f.transpose(), rank1), 1e-12);
  Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(3, 3);
  EXPECT_THROW(sampling_factor(bad, 1.0), NumericalError);
}

TEST(TimeGrid, QuadratureWeightsSumToSpan) {
  const TimeGrid grid{0.0, 100.0, 101};
  for (auto [t0, t1] : {std::pair{3.3, 47.9}, std::pair{10.2, 10.7}, std::pair{0.0, 100.0}}) {
    double sum = 0.0;
    for (const auto& [i, w] : grid.span_quadrature(t0, t1)) sum += w;
    EXPECT_NEAR(sum, t1 - t0, 1e-12);
  }
}

}  // namespace
}  // namespace coact
