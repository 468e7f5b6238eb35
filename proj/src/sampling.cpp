#include "cpest/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace cpest {

SamplingPlan equitime_plan(double horizon, int count) {
  if (!(horizon > 0)) throw DomainError("equitime_plan: horizon must be > 0");
  if (count < 1) throw DomainError("equitime_plan: count must be >= 1");
  SamplingPlan plan;
  plan.mode = PlanMode::equitime;
  plan.parent_count = count;
  plan.times.resize(size_t(count));
  for (int k = 1; k <= count; ++k)
    plan.times[size_t(k - 1)] = horizon * double(k) / double(count);
  return plan;
}

Population Population::with_fitness(VectorXd individuals, VectorXd fitness) {
  if (individuals.size() == 0)
    throw DomainError("Population: must contain at least one individual");
  if (individuals.size() != fitness.size())
    throw DimensionError("Population: individuals/fitness size mismatch");
  if ((fitness.array() < 0).any())
    throw DomainError("Population: fitness must be nonnegative");
  const double total = fitness.sum();
  if (!(total > 0))
    throw DomainError("Population: degenerate population, zero total fitness");
  Population pop;
  pop.individuals = std::move(individuals);
  pop.fitness = std::move(fitness);
  pop.cumulative.resize(pop.fitness.size());
  double acc = 0;
  for (Index i = 0; i < pop.fitness.size(); ++i) {
    acc += pop.fitness[i];
    pop.cumulative[i] = acc / total;
  }
  pop.cumulative[pop.cumulative.size() - 1] = 1.0;
  return pop;
}

int roulette_bin(const Population& pop, double r) {
  if (!(r >= 0.0 && r < 1.0))
    throw DomainError("roulette_bin: r must lie in [0, 1)");
  const double* begin = pop.cumulative.data();
  const double* end = begin + pop.cumulative.size();
  const double* it = std::upper_bound(begin, end, r);
  if (it == end) --it;  // r < 1 guarantees a bin; guard roundoff
  return int(it - begin);
}

double roulette_select(const Population& pop, double r) {
  const int i = roulette_bin(pop, r);
  const Index n = pop.individuals.size();
  const double xi = pop.individuals[i];
  const double left =
      (i == 0) ? xi : 0.5 * (xi + pop.individuals[i - 1]);
  const double right =
      (i == int(n) - 1) ? xi : 0.5 * (xi + pop.individuals[i + 1]);
  const double cf_lo = (i == 0) ? 0.0 : pop.cumulative[i - 1];
  const double cf_hi = pop.cumulative[i];
  const double u = (r - cf_lo) / (cf_hi - cf_lo);
  return left + u * (right - left);
}

namespace {

SamplingPlan roulette_variant(const VehicleModel& model, double horizon,
                              int count, RandomStream& rng, int grid) {
  const int g = grid > 0 ? grid : std::max(1000, 10 * count);
  VectorXd individuals(g), fitness(g);
  for (int k = 1; k <= g; ++k) {
    const double t = horizon * double(k) / double(g);
    individuals[k - 1] = t;
    fitness[k - 1] = model.mean_velocity(t).norm();
  }
  const Population pop =
      Population::with_fitness(std::move(individuals), std::move(fitness));

  std::vector<double> picks(static_cast<size_t>(count));
  for (int j = 0; j < count; ++j) picks[size_t(j)] = roulette_select(pop, rng.uniform());
  std::sort(picks.begin(), picks.end());

  SamplingPlan plan;
  plan.mode = PlanMode::equidistant_roulette;
  plan.parent_count = count;
  const double tol = horizon / (10.0 * double(count));
  for (double t : picks) {
    if (plan.times.empty() || t - plan.times.back() > tol)
      plan.times.push_back(t);
  }
  return plan;
}

}  // namespace

SamplingPlan equidistant_plan(const VehicleModel& model, double horizon,
                              int count, PlanMode variant, RandomStream* rng,
                              int grid) {
  if (!(horizon > 0))
    throw DomainError("equidistant_plan: horizon must be > 0");
  if (count < 1) throw DomainError("equidistant_plan: count must be >= 1");
  if (variant != PlanMode::equidistant_rootsolve &&
      variant != PlanMode::equidistant_roulette)
    throw DomainError("equidistant_plan: variant must be a equidistant mode");

  RandomStream fallback_rng(0x9e3779b97f4a7c15ull, 0);
  RandomStream& stream = rng ? *rng : fallback_rng;

  if (variant == PlanMode::equidistant_roulette)
    return roulette_variant(model, horizon, count, stream, grid);

  // Dominant channel: largest expected total displacement.
  const VectorXd p0 = model.mean_position(0.0);
  const VectorXd pT = model.mean_position(horizon);
  Index dom = 0;
  (pT - p0).cwiseAbs().maxCoeff(&dom);

  const bool channel_path = model.has_channels();
  auto eval = [&](double t) {
    return channel_path ? channel_mean(model.channels()[size_t(dom)], t)
                        : model.mean_position(t)[dom];
  };

  const double f0 = p0[dom];
  const double fT = pT[dom];
  const double range = fT - f0;

  // Monotonicity scan on a dense grid; reversals force the roulette fallback.
  bool monotone = std::abs(range) > 0;
  if (monotone) {
    const int scan = std::max(2048, 4 * count);
    const double sign = range > 0 ? 1.0 : -1.0;
    double prev = f0;
    for (int kk = 1; kk <= scan; ++kk) {
      const double v = eval(horizon * double(kk) / double(scan));
      if (sign * (v - prev) < -1e-12 * std::abs(range)) {
        monotone = false;
        break;
      }
      prev = v;
    }
  }
  if (!monotone) {
    std::cerr << "equidistant_plan: expected position not monotone, "
                 "falling back to roulette selection\n";
    return roulette_variant(model, horizon, count, stream, grid);
  }

  SamplingPlan plan;
  plan.mode = PlanMode::equidistant_rootsolve;
  plan.parent_count = count;
  const bool increasing = range > 0;
  double t_lo = 0.0;
  for (int k = 1; k <= count; ++k) {
    const double target = f0 + range * double(k) / double(count);
    double lo = t_lo;
    double hi = horizon;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double v = eval(mid);
      const bool below = increasing ? (v < target) : (v > target);
      if (below)
        lo = mid;
      else
        hi = mid;
      if (hi - lo <= 1e-14 * std::max(1.0, horizon)) break;
    }
    const double root = 0.5 * (lo + hi);
    t_lo = root;
    if (plan.times.empty() || root - plan.times.back() > 1e-9 * horizon)
      plan.times.push_back(root);
  }
  return plan;
}

SamplingPlan importance_filter(const SamplingPlan& plan,
                               const VehicleModel& model,
                               const std::vector<ObstacleTrack>& obstacles,
                               double vehicle_radius, double alpha) {
  if (!(vehicle_radius >= 0))
    throw DomainError("importance_filter: vehicle radius must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("importance_filter: alpha must be in (0, 1)");
  const Index d = model.space_dim();
  for (const ObstacleTrack& o : obstacles) {
    if (o.center0.size() != d || o.velocity.size() != d)
      throw DimensionError("importance_filter: obstacle dimension mismatch");
    if (!(o.radius > 0))
      throw DomainError("importance_filter: obstacle radius must be > 0");
  }

  const double threshold = chi2_quantile(alpha, int(d));
  SamplingPlan out;
  out.mode = PlanMode::importance_filtered;
  out.parent_count = int(plan.times.size());
  for (double t : plan.times) {
    const GaussianDist g = model.position_marginal(t);
    const Ellipsoid ell{g.mean, g.cov, threshold};
    for (const ObstacleTrack& o : obstacles) {
      if (dist_point_to_ellipsoid(o.center(t), ell) <=
          vehicle_radius + o.radius) {
        out.times.push_back(t);
        break;
      }
    }
  }
  return out;
}

std::vector<std::pair<double, double>> retained_intervals(
    const SamplingPlan& filtered, const SamplingPlan& parent) {
  std::vector<std::pair<double, double>> intervals;
  size_t fi = 0;
  bool open = false;
  for (size_t pi = 0; pi < parent.times.size() && fi < filtered.times.size();
       ++pi) {
    const bool kept = parent.times[pi] == filtered.times[fi];
    if (kept) {
      if (!open) {
        intervals.emplace_back(parent.times[pi], parent.times[pi]);
        open = true;
      } else {
        intervals.back().second = parent.times[pi];
      }
      ++fi;
    } else {
      open = false;
    }
  }
  return intervals;
}

}  // namespace cpest
