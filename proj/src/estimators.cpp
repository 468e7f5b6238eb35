#include "cpest/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

namespace cpest {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int resolve_workers(int requested, long long trials) {
  int w = requested > 0 ? requested
                        : int(std::max(1u, std::thread::hardware_concurrency()));
  return int(std::min<long long>(w, std::max<long long>(trials, 1)));
}

void check_obstacles(const std::vector<ObstacleTrack>& obstacles, Index d,
                     double vehicle_radius) {
  if (!(vehicle_radius >= 0))
    throw DomainError("estimator: vehicle radius must be >= 0");
  for (const ObstacleTrack& o : obstacles) {
    if (o.center0.size() != d || o.velocity.size() != d)
      throw DimensionError("estimator: obstacle dimension mismatch");
    if (!(o.radius > 0))
      throw DomainError("estimator: obstacle radius must be > 0");
  }
}

/// Obstacle centers flattened per check time, plus squared augmented radii.
struct ObstacleGrid {
  std::vector<double> centers;  // [time][obstacle][axis]
  std::vector<double> aug2;
  int n_obs = 0;
  int d = 0;

  ObstacleGrid(const std::vector<ObstacleTrack>& obstacles,
               const std::vector<double>& times, Index dim, double r) {
    d = int(dim);
    n_obs = int(obstacles.size());
    aug2.resize(obstacles.size());
    for (size_t j = 0; j < obstacles.size(); ++j) {
      const double a = r + obstacles[j].radius;
      aug2[j] = a * a;
    }
    centers.resize(times.size() * obstacles.size() * size_t(d));
    size_t idx = 0;
    for (double t : times)
      for (const ObstacleTrack& o : obstacles)
        for (int axis = 0; axis < d; ++axis)
          centers[idx++] = o.center0[axis] + t * o.velocity[axis];
  }

  /// Obstacle hit by position `p` at time index k, or -1.
  int hit(const double* p, size_t k) const {
    const double* base = centers.data() + k * size_t(n_obs) * size_t(d);
    for (int j = 0; j < n_obs; ++j) {
      const double* c = base + size_t(j) * size_t(d);
      double dist2 = 0;
      for (int axis = 0; axis < d; ++axis) {
        const double delta = p[axis] - c[axis];
        dist2 += delta * delta;
      }
      if (dist2 <= aug2[j]) return j;
    }
    return -1;
  }
};

struct McContext {
  MatrixXd step_mat;
  VectorXd step_drift;
  MatrixXd noise;
  MvnSampler init;
  MatrixXd Tp;
  bool head_position;  // Tp selects the leading coordinates
  ObstacleGrid grid;
  int steps;
  Index state_dim;
  Index noise_dim;
  Index d;

  McContext(const VehicleModel& model,
            const std::vector<ObstacleTrack>& obstacles, double vehicle_radius,
            double horizon, int steps_in, bool exact_step)
      : init(model.sde().init),
        grid(obstacles, equitime_plan(horizon, steps_in).times,
             model.space_dim(), vehicle_radius),
        steps(steps_in) {
    const LinearSde& sde = model.sde();
    const double tau = horizon / double(steps_in);
    state_dim = sde.state_dim();
    d = sde.space_dim();
    Tp = sde.Tp;
    head_position =
        Tp.isApprox(MatrixXd::Identity(d, state_dim).topRows(d), 0.0);
    if (exact_step) {
      const FlowDrift fd = flow_and_drift(sde.A, tau);
      step_mat = fd.flow;
      step_drift = fd.drift * sde.c;
      noise = chol(controllability_gramian(sde.A, sde.S, tau)).L;
    } else {
      step_mat = MatrixXd::Identity(state_dim, state_dim) + tau * sde.A;
      step_drift = tau * sde.c;
      noise = std::sqrt(tau) * sde.S;
    }
    noise_dim = noise.cols();
  }
};

TrialOutcome run_mc_trial(const McContext& ctx, RandomStream& rng, VectorXd& x,
                          VectorXd& xn, VectorXd& z, VectorXd& pos) {
  ctx.init.sample_into(rng, x, xn);
  for (int k = 0; k < ctx.steps; ++k) {
    for (Index i = 0; i < ctx.noise_dim; ++i) z[i] = rng.normal();
    xn.noalias() = ctx.step_mat * x;
    xn += ctx.step_drift;
    xn.noalias() += ctx.noise * z;
    const double* p;
    if (ctx.head_position) {
      p = xn.data();
    } else {
      pos.noalias() = ctx.Tp * xn;
      p = pos.data();
    }
    const int j = ctx.grid.hit(p, size_t(k));
    if (j >= 0) return TrialOutcome{true, k, j};
    x.swap(xn);
  }
  return TrialOutcome{};
}

struct FdmcContext {
  VectorXd mean;
  MatrixXd L;
  ObstacleGrid grid;
  Index n_points;
  Index d;

  FdmcContext(const FddGaussian& fdd,
              const std::vector<ObstacleTrack>& obstacles,
              double vehicle_radius)
      : grid(obstacles, fdd.times, fdd.space_dim, vehicle_radius),
        n_points(fdd.point_count()),
        d(fdd.space_dim) {
    mean = fdd.dist.mean;
    L = chol(fdd.dist.cov).L;
  }
};

TrialOutcome run_fdmc_trial(const FdmcContext& ctx, RandomStream& rng,
                            VectorXd& p, VectorXd& z) {
  const Index dim = ctx.mean.size();
  for (Index i = 0; i < dim; ++i) z[i] = rng.normal();
  p.noalias() = ctx.L.triangularView<Eigen::Lower>() * z;
  p += ctx.mean;
  for (Index k = 0; k < ctx.n_points; ++k) {
    const int j = ctx.grid.hit(p.data() + k * ctx.d, size_t(k));
    if (j >= 0) return TrialOutcome{true, int(k), j};
  }
  return TrialOutcome{};
}

template <typename TrialFn>
long long count_collisions(long long trials, std::uint64_t seed, int workers,
                           const TrialFn& trial) {
  if (workers <= 1) {
    long long count = 0;
    for (long long i = 0; i < trials; ++i) {
      RandomStream rng(seed, std::uint64_t(i));
      if (trial(rng)) ++count;
    }
    return count;
  }
  std::vector<long long> counts(size_t(workers), 0);
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers));
  const long long chunk = (trials + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      const long long lo = w * chunk;
      const long long hi = std::min(trials, lo + chunk);
      long long local = 0;
      for (long long i = lo; i < hi; ++i) {
        RandomStream rng(seed, std::uint64_t(i));
        if (trial(rng)) ++local;
      }
      counts[size_t(w)] = local;
    });
  }
  for (std::thread& th : pool) th.join();
  long long count = 0;
  for (long long c : counts) count += c;
  return count;
}

}  // namespace

double confidence_halfwidth(double freq, long long trials, double confidence) {
  if (!(freq >= 0.0 && freq <= 1.0))
    throw DomainError("confidence_halfwidth: freq must lie in [0, 1]");
  if (trials < 1)
    throw DomainError("confidence_halfwidth: trials must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw DomainError("confidence_halfwidth: confidence must be in (0, 1)");
  const double z = normal_quantile(0.5 * (1.0 - confidence));
  return z * std::sqrt(freq * (1.0 - freq) / double(trials));
}

EstimateResult mc_estimate(const VehicleModel& model,
                           const std::vector<ObstacleTrack>& obstacles,
                           double vehicle_radius, double horizon, int steps,
                           long long trials, std::uint64_t seed,
                           const McOptions& opt) {
  const auto t0 = Clock::now();
  if (!(horizon > 0)) throw DomainError("mc_estimate: horizon must be > 0");
  if (steps < 1) throw DomainError("mc_estimate: steps must be >= 1");
  if (trials < 1) throw DomainError("mc_estimate: trials must be >= 1");
  check_obstacles(obstacles, model.space_dim(), vehicle_radius);

  const McContext ctx(model, obstacles, vehicle_radius, horizon, steps,
                      opt.exact_step);
  const int workers = resolve_workers(opt.workers, trials);

  struct Scratch {
    VectorXd x, xn, z, pos;
  };
  const long long count = count_collisions(
      trials, seed, workers,
      [&ctx](RandomStream& rng) {
        thread_local Scratch s;
        s.z.resize(ctx.noise_dim);
        s.pos.resize(ctx.d);
        return run_mc_trial(ctx, rng, s.x, s.xn, s.z, s.pos).collided;
      });

  EstimateResult r;
  r.method = Method::mc;
  r.trials = trials;
  r.collisions = count;
  r.cp = double(count) / double(trials);
  r.confidence = opt.confidence;
  r.ci_halfwidth = confidence_halfwidth(r.cp, trials, opt.confidence);
  r.points_used = steps;
  r.seed = seed;
  r.wall_time_s = seconds_since(t0);
  return r;
}

TrialOutcome mc_single_trial(const VehicleModel& model,
                             const std::vector<ObstacleTrack>& obstacles,
                             double vehicle_radius, double horizon, int steps,
                             RandomStream& rng, bool exact_step) {
  if (!(horizon > 0)) throw DomainError("mc_single_trial: horizon must be > 0");
  if (steps < 1) throw DomainError("mc_single_trial: steps must be >= 1");
  check_obstacles(obstacles, model.space_dim(), vehicle_radius);
  const McContext ctx(model, obstacles, vehicle_radius, horizon, steps,
                      exact_step);
  VectorXd x, xn, z(ctx.noise_dim), pos(ctx.d);
  return run_mc_trial(ctx, rng, x, xn, z, pos);
}

EstimateResult fdmc_estimate(const FddGaussian& fdd,
                             const std::vector<ObstacleTrack>& obstacles,
                             double vehicle_radius, long long trials,
                             std::uint64_t seed, const FdmcOptions& opt) {
  const auto t0 = Clock::now();
  if (trials < 1) throw DomainError("fdmc_estimate: trials must be >= 1");
  fdd.validate();

  EstimateResult r;
  r.method = Method::fdmc;
  r.trials = trials;
  r.confidence = opt.confidence;
  r.seed = seed;
  r.epsilon_bound = opt.epsilon_bound;
  r.points_used = int(fdd.point_count());

  if (fdd.point_count() == 0) {
    if (!(vehicle_radius >= 0))
      throw DomainError("estimator: vehicle radius must be >= 0");
    r.cp = 0.0;
    r.ci_halfwidth = 0.0;
    r.filtered_everything = true;
    r.wall_time_s = seconds_since(t0);
    return r;
  }

  check_obstacles(obstacles, fdd.space_dim, vehicle_radius);
  const FdmcContext ctx(fdd, obstacles, vehicle_radius);
  const int workers = resolve_workers(opt.workers, trials);

  struct Scratch {
    VectorXd p, z;
  };
  const long long count = count_collisions(
      trials, seed, workers,
      [&ctx](RandomStream& rng) {
        thread_local Scratch s;
        s.p.resize(ctx.mean.size());
        s.z.resize(ctx.mean.size());
        return run_fdmc_trial(ctx, rng, s.p, s.z).collided;
      });

  r.collisions = count;
  r.cp = double(count) / double(trials);
  r.ci_halfwidth = confidence_halfwidth(r.cp, trials, opt.confidence);
  r.wall_time_s = seconds_since(t0);
  return r;
}

TrialOutcome fdmc_single_trial(const FddGaussian& fdd,
                               const std::vector<ObstacleTrack>& obstacles,
                               double vehicle_radius, RandomStream& rng) {
  fdd.validate();
  if (fdd.point_count() == 0) return TrialOutcome{};
  check_obstacles(obstacles, fdd.space_dim, vehicle_radius);
  const FdmcContext ctx(fdd, obstacles, vehicle_radius);
  VectorXd p(ctx.mean.size()), z(ctx.mean.size());
  return run_fdmc_trial(ctx, rng, p, z);
}

}  // namespace cpest
