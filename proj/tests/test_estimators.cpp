#include <doctest.h>

#include <cmath>
#include <vector>

#include "cpest/estimators.hpp"
#include "oracles.hpp"

using namespace cpest;

namespace {

/// Positions move at constant velocity v0 from (1, 2, ..., d); no noise.
LinearSde drift_sde(const VectorXd& v0) {
  const Index d = v0.size();
  LinearSde m;
  m.A = MatrixXd::Zero(2 * d, 2 * d);
  m.c = VectorXd::Zero(2 * d);
  m.c.head(d) = v0;
  m.S = MatrixXd::Zero(2 * d, 1);
  m.init.mean = VectorXd::Zero(2 * d);
  m.init.mean.head(d) = VectorXd::LinSpaced(d, 1.0, double(d));
  m.init.cov = MatrixXd::Zero(2 * d, 2 * d);
  m.Tp = MatrixXd::Zero(d, 2 * d);
  m.Tv = MatrixXd::Zero(d, 2 * d);
  for (Index i = 0; i < d; ++i) {
    m.Tp(i, i) = 1.0;
    m.Tv(i, d + i) = 1.0;
  }
  return m;
}

/// Frozen position, X ~ N(0, 1): cp against a unit obstacle is 2 Phi(1) - 1.
LinearSde static_gaussian_sde() {
  LinearSde m;
  m.A = MatrixXd::Zero(2, 2);
  m.c = VectorXd::Zero(2);
  m.S = MatrixXd::Zero(2, 1);
  m.init.mean = VectorXd::Zero(2);
  m.init.cov = MatrixXd::Zero(2, 2);
  m.init.cov(0, 0) = 1.0;
  m.Tp = MatrixXd::Zero(1, 2);
  m.Tp(0, 0) = 1.0;
  m.Tv = MatrixXd::Zero(1, 2);
  m.Tv(0, 1) = 1.0;
  return m;
}

/// 1-d Brownian position started at x0, diffusion sigma; velocity slot inert.
LinearSde brownian_sde(double x0, double sigma) {
  LinearSde m = static_gaussian_sde();
  m.init.mean(0) = x0;
  m.init.cov(0, 0) = 0.0;
  m.S(0, 0) = sigma;
  return m;
}

ObstacleTrack ball_at(std::initializer_list<double> c, double radius) {
  ObstacleTrack o;
  o.center0 = VectorXd::Zero(Index(c.size()));
  Index i = 0;
  for (double v : c) o.center0[i++] = v;
  o.velocity = VectorXd::Zero(o.center0.size());
  o.radius = radius;
  return o;
}

}  // namespace

TEST_CASE("confidence_halfwidth degenerate frequencies give zero") {
  CHECK(confidence_halfwidth(0.0, 1000, 0.95) == 0.0);
  CHECK(confidence_halfwidth(1.0, 1000, 0.95) == 0.0);
}

TEST_CASE("confidence_halfwidth matches the normal-approximation formula") {
  // z_{0.025} sqrt(p (1 - p) / n), frozen for two benchmark-sized pairs.
  CHECK(confidence_halfwidth(0.004997, 1000000, 0.95) ==
        doctest::Approx(0.00013820220137784588).epsilon(1e-12));
  CHECK(confidence_halfwidth(0.005461, 1000000, 0.95) ==
        doctest::Approx(0.00014444253055613437).epsilon(1e-12));
  CHECK(confidence_halfwidth(0.3, 2000, 0.90) ==
        doctest::Approx(0.016854734132581803).epsilon(1e-12));
}

TEST_CASE("confidence_halfwidth scales as 1/sqrt(n) and grows in confidence") {
  const double h1 = confidence_halfwidth(0.2, 5000, 0.95);
  CHECK(confidence_halfwidth(0.2, 20000, 0.95) == doctest::Approx(h1 / 2.0));
  CHECK(confidence_halfwidth(0.2, 5000, 0.99) > h1);
  CHECK(confidence_halfwidth(0.2, 5000, 0.80) < h1);
}

TEST_CASE("confidence_halfwidth rejects bad arguments") {
  CHECK_THROWS_AS(confidence_halfwidth(-0.1, 100, 0.95), DomainError);
  CHECK_THROWS_AS(confidence_halfwidth(1.1, 100, 0.95), DomainError);
  CHECK_THROWS_AS(confidence_halfwidth(0.5, 0, 0.95), DomainError);
  CHECK_THROWS_AS(confidence_halfwidth(0.5, 100, 0.0), DomainError);
  CHECK_THROWS_AS(confidence_halfwidth(0.5, 100, 1.0), DomainError);
}

TEST_CASE("mc_estimate is exact on deterministic geometry") {
  VectorXd v0(2);
  v0 << 1.0, 0.0;
  const VehicleModel model = VehicleModel::from_sde(drift_sde(v0));
  // Path runs from (1, 2) to (5, 2) over T = 4.
  std::vector<ObstacleTrack> miss{ball_at({3.0, 5.0}, 0.5)};
  EstimateResult r = mc_estimate(model, miss, 0.5, 4.0, 50, 2000, 3);
  CHECK(r.cp == 0.0);
  CHECK(r.collisions == 0);
  CHECK(r.ci_halfwidth == 0.0);
  CHECK(r.trials == 2000);
  CHECK(r.points_used == 50);
  CHECK(r.method == Method::mc);
  CHECK(r.seed == 3);

  std::vector<ObstacleTrack> hit{ball_at({3.0, 2.0}, 0.5)};
  r = mc_estimate(model, hit, 0.5, 4.0, 50, 2000, 3);
  CHECK(r.cp == 1.0);
  CHECK(r.collisions == 2000);
  CHECK(r.ci_halfwidth == 0.0);
}

TEST_CASE("mc_estimate recovers a closed-form static membership probability") {
  const VehicleModel model = VehicleModel::from_sde(static_gaussian_sde());
  std::vector<ObstacleTrack> obs{ball_at({0.0}, 0.6)};
  const long long n = 200000;
  const EstimateResult r = mc_estimate(model, obs, 0.4, 1.0, 1, n, 11);
  const double exact = 0.6826894921370859;  // 2 Phi(1) - 1
  const double sigma = std::sqrt(exact * (1.0 - exact) / double(n));
  CHECK(std::abs(r.cp - exact) < 4.0 * sigma);
  CHECK(std::abs(r.cp - exact) < r.ci_halfwidth + 4.0 * sigma);
  // Reported interval is the frequency formula evaluated at cp itself.
  CHECK(r.ci_halfwidth ==
        doctest::Approx(confidence_halfwidth(r.cp, n, r.confidence))
            .epsilon(1e-14));
  CHECK(r.collisions == std::llround(r.cp * double(n)));
}

TEST_CASE("mc_estimate is reproducible and worker-count invariant") {
  const auto ch = ChannelModel::create(3.0, 2.0, 0.0, 0.3, 0.0, 0.0, 0.1, 0.1, 0.0);
  const VehicleModel model = VehicleModel::from_channels({ch});
  // Ball sits below the settle point: only noise excursions reach it.
  std::vector<ObstacleTrack> obs{ball_at({-0.25}, 0.1)};
  McOptions one;
  one.workers = 1;
  McOptions four;
  four.workers = 4;
  const EstimateResult a = mc_estimate(model, obs, 0.05, 2.0, 100, 8000, 5, one);
  const EstimateResult b = mc_estimate(model, obs, 0.05, 2.0, 100, 8000, 5, four);
  const EstimateResult c = mc_estimate(model, obs, 0.05, 2.0, 100, 8000, 5, one);
  CHECK(a.cp == b.cp);
  CHECK(a.collisions == b.collisions);
  CHECK(a.cp == c.cp);
  CHECK(a.cp > 0.0);   // fixture is tuned to produce a fractional rate
  CHECK(a.cp < 1.0);
  CHECK(mc_estimate(model, obs, 0.05, 2.0, 100, 8000, 6, one).cp != a.cp);
}

TEST_CASE("mc_estimate exact transition agrees with fine Euler stepping") {
  const auto ch = ChannelModel::create(3.0, 2.0, 0.0, 0.3, 0.0, 0.0, 0.1, 0.1, 0.0);
  const VehicleModel model = VehicleModel::from_channels({ch});
  std::vector<ObstacleTrack> obs{ball_at({-0.25}, 0.1)};
  McOptions euler;
  McOptions exact;
  exact.exact_step = true;
  const EstimateResult re =
      mc_estimate(model, obs, 0.05, 2.0, 400, 30000, 17, exact);
  const EstimateResult ru =
      mc_estimate(model, obs, 0.05, 2.0, 400, 30000, 23, euler);
  CHECK(re.cp > 0.0);
  CHECK(re.cp < 1.0);
  CHECK(std::abs(re.cp - ru.cp) < re.ci_halfwidth + ru.ci_halfwidth + 0.01);
}

TEST_CASE("mc_estimate grid refinement approaches continuous first passage") {
  // Brownian from x0 = 2 against barrier r + R = 1: 2 Phi((1 - 2)/(0.8 * 2)).
  const double fp_exact = 0.5319710580974011;
  const VehicleModel model = VehicleModel::from_sde(brownian_sde(2.0, 0.8));
  std::vector<ObstacleTrack> obs{ball_at({0.0}, 0.6)};
  const EstimateResult coarse =
      mc_estimate(model, obs, 0.4, 4.0, 250, 30000, 29);
  const EstimateResult fine =
      mc_estimate(model, obs, 0.4, 4.0, 2000, 30000, 29);
  // Discrete monitoring only undercounts; the gap shrinks as the grid grows.
  CHECK(coarse.cp < fp_exact);
  CHECK(fine.cp < fp_exact + 3.0 * fine.ci_halfwidth);
  CHECK(coarse.cp + 0.005 < fine.cp);
  CHECK(fp_exact - fine.cp < 0.05);
}

TEST_CASE("mc_estimate validates its inputs") {
  VectorXd v0(1);
  v0 << 1.0;
  const VehicleModel model = VehicleModel::from_sde(drift_sde(v0));
  std::vector<ObstacleTrack> obs{ball_at({0.0}, 0.5)};
  CHECK_THROWS_AS(mc_estimate(model, obs, -0.1, 1.0, 10, 100, 0), DomainError);
  CHECK_THROWS_AS(mc_estimate(model, obs, 0.1, 0.0, 10, 100, 0), DomainError);
  CHECK_THROWS_AS(mc_estimate(model, obs, 0.1, 1.0, 0, 100, 0), DomainError);
  CHECK_THROWS_AS(mc_estimate(model, obs, 0.1, 1.0, 10, 0, 0), DomainError);
  std::vector<ObstacleTrack> bad_dim{ball_at({0.0, 0.0}, 0.5)};
  CHECK_THROWS_AS(mc_estimate(model, bad_dim, 0.1, 1.0, 10, 100, 0),
                  DimensionError);
  std::vector<ObstacleTrack> bad_r{ball_at({0.0}, 0.0)};
  CHECK_THROWS_AS(mc_estimate(model, bad_r, 0.1, 1.0, 10, 100, 0), DomainError);
}

TEST_CASE("fdmc_estimate on an empty plan reports zero with the flag set") {
  FddGaussian fdd;
  fdd.space_dim = 2;
  FdmcOptions opt;
  opt.epsilon_bound = 0.125;
  std::vector<ObstacleTrack> obs{ball_at({0.0, 0.0}, 0.5)};
  const EstimateResult r = fdmc_estimate(fdd, obs, 0.5, 1000, 9, opt);
  CHECK(r.cp == 0.0);
  CHECK(r.ci_halfwidth == 0.0);
  CHECK(r.filtered_everything);
  CHECK(r.points_used == 0);
  CHECK(r.epsilon_bound == 0.125);
  CHECK(r.method == Method::fdmc);
}

TEST_CASE("fdmc_estimate recovers a single-point Gaussian membership") {
  // X ~ N(0.5, 0.36) against |x| <= 1: Phi(5/6) - Phi(-5/2).
  FddGaussian fdd;
  fdd.times = {1.0};
  fdd.space_dim = 1;
  fdd.dist.mean = VectorXd::Constant(1, 0.5);
  fdd.dist.cov = MatrixXd::Constant(1, 1, 0.36);
  std::vector<ObstacleTrack> obs{ball_at({0.0}, 0.6)};
  const long long n = 200000;
  const EstimateResult r = fdmc_estimate(fdd, obs, 0.4, n, 13);
  const double exact = 0.7914619537105808;
  const double sigma = std::sqrt(exact * (1.0 - exact) / double(n));
  CHECK(std::abs(r.cp - exact) < 4.0 * sigma);
  CHECK(r.points_used == 1);
  CHECK(r.collisions == std::llround(r.cp * double(n)));
}

TEST_CASE("fdmc_estimate is reproducible and worker-count invariant") {
  const auto ch = ChannelModel::create(3.0, 2.0, 0.0, 0.3, 0.0, 0.0, 0.1, 0.1, 0.0);
  const VehicleModel model = VehicleModel::from_channels({ch});
  const FddGaussian fdd = build_fdd(model, {0.5, 1.0, 1.5, 2.0});
  std::vector<ObstacleTrack> obs{ball_at({-0.25}, 0.1)};
  FdmcOptions one;
  one.workers = 1;
  FdmcOptions three;
  three.workers = 3;
  const EstimateResult a = fdmc_estimate(fdd, obs, 0.05, 20000, 5, one);
  const EstimateResult b = fdmc_estimate(fdd, obs, 0.05, 20000, 5, three);
  CHECK(a.cp == b.cp);
  CHECK(a.collisions == b.collisions);
  CHECK(a.cp > 0.0);
  CHECK(a.cp < 1.0);
}

TEST_CASE("fdmc_estimate validates its inputs") {
  const auto ch = ChannelModel::create(3.0, 2.0, 0.0, 0.3, 1.0, 0.0, 0.1, 0.1, 0.0);
  const FddGaussian fdd =
      build_fdd(VehicleModel::from_channels({ch}), {1.0, 2.0});
  std::vector<ObstacleTrack> obs{ball_at({0.0}, 0.5)};
  CHECK_THROWS_AS(fdmc_estimate(fdd, obs, 0.1, 0, 0), DomainError);
  CHECK_THROWS_AS(fdmc_estimate(fdd, obs, -0.1, 100, 0), DomainError);
  std::vector<ObstacleTrack> bad_dim{ball_at({0.0, 0.0}, 0.5)};
  CHECK_THROWS_AS(fdmc_estimate(fdd, bad_dim, 0.1, 100, 0), DimensionError);
}

TEST_CASE("estimators agree when sampling the same finite grid law") {
  // With the exact Gaussian transition, brute force and the joint sampler
  // target the identical distribution; any gap is pure Monte Carlo noise.
  struct Case {
    double c, G, mu0, mudot0, t_star, off;
  };
  const std::vector<Case> cases = {
      {0.0, 0.30, 2.0, 0.0, 0.8, 0.82},   {-1.0, 0.25, 3.0, -0.5, 1.0, 0.82},
      {0.5, 0.40, 1.5, 0.3, 0.6, 0.84},   {0.0, 0.20, 4.0, 0.0, 1.2, 0.80},
      {-0.8, 0.35, 2.5, 0.2, 0.9, 0.82},
  };
  const int steps = 200;
  const double horizon = 2.5;
  const long long trials = 20000;
  std::uint64_t seed = 100;
  for (const Case& sc : cases) {
    const auto cx =
        ChannelModel::create(3.0, 2.0, sc.c, sc.G, sc.mu0, sc.mudot0, 0.1, 0.1, 0.0);
    const auto cy =
        ChannelModel::create(2.5, 1.5, 0.0, sc.G, sc.mu0 / 2.0, 0.0, 0.1, 0.1, 0.0);
    const VehicleModel model = VehicleModel::from_channels({cx, cy});
    // Ball offset perpendicular to the path; only the noise reaches it.
    const VectorXd dir = model.mean_velocity(sc.t_star).normalized();
    VectorXd perp(2);
    perp << -dir[1], dir[0];
    const VectorXd ctr = model.mean_position(sc.t_star) + sc.off * perp;
    ObstacleTrack ball;
    ball.center0 = ctr;
    ball.velocity = VectorXd::Zero(2);
    ball.radius = 0.4;
    std::vector<ObstacleTrack> obs{ball};
    McOptions mopt;
    mopt.exact_step = true;
    const EstimateResult mc =
        mc_estimate(model, obs, 0.3, horizon, steps, trials, seed, mopt);
    const FddGaussian fdd =
        build_fdd(model, equitime_plan(horizon, steps).times);
    const EstimateResult fd =
        fdmc_estimate(fdd, obs, 0.3, trials, seed + 1);
    CHECK(mc.cp > 0.0);
    CHECK(mc.cp < 1.0);
    CHECK(std::abs(mc.cp - fd.cp) <=
          mc.ci_halfwidth + fd.ci_halfwidth + 1e-12);
    seed += 2;
  }
}

TEST_CASE("single-trial outcomes are internally consistent") {
  const auto ch = ChannelModel::create(3.0, 2.0, 0.0, 0.3, 0.0, 0.0, 0.1, 0.1, 0.0);
  const VehicleModel model = VehicleModel::from_channels({ch});
  std::vector<ObstacleTrack> obs{ball_at({-0.25}, 0.1), ball_at({-5.0}, 0.2)};
  const int steps = 50;
  int hits = 0;
  for (int k = 0; k < 200; ++k) {
    RandomStream rng(42, std::uint64_t(k));
    const TrialOutcome o =
        mc_single_trial(model, obs, 0.05, 2.0, steps, rng);
    CHECK(o.collided == o.first_hit_index.has_value());
    CHECK(o.collided == o.first_hit_obstacle.has_value());
    if (o.collided) {
      ++hits;
      CHECK(*o.first_hit_index >= 0);
      CHECK(*o.first_hit_index < steps);
      CHECK(*o.first_hit_obstacle >= 0);
      CHECK(*o.first_hit_obstacle < 2);
    }
  }
  CHECK(hits > 0);

  const FddGaussian fdd = build_fdd(model, equitime_plan(2.0, steps).times);
  hits = 0;
  for (int k = 0; k < 200; ++k) {
    RandomStream rng(43, std::uint64_t(k));
    const TrialOutcome o = fdmc_single_trial(fdd, obs, 0.05, rng);
    CHECK(o.collided == o.first_hit_index.has_value());
    if (o.collided) {
      ++hits;
      CHECK(*o.first_hit_index >= 0);
      CHECK(*o.first_hit_index < steps);
    }
  }
  CHECK(hits > 0);
}
