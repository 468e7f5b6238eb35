#pragma once

#include <utility>
#include <vector>

#include "cpest/process.hpp"

namespace cpest {

enum class PlanMode {
  equitime,
  equidistant_rootsolve,
  equidistant_roulette,
  importance_filtered,
};

/// Ordered collision-check times in (0, horizon].
struct SamplingPlan {
  std::vector<double> times;
  PlanMode mode = PlanMode::equitime;
  int parent_count = 0;  // size of the plan this one was derived from
};

/// Roulette-wheel population: individuals with nonnegative fitness and the
/// normalized cumulative fitness (last entry exactly 1).
struct Population {
  VectorXd individuals;
  VectorXd fitness;
  VectorXd cumulative;

  static Population with_fitness(VectorXd individuals, VectorXd fitness);
};

/// Spherical obstacle on a straight-line track.
struct ObstacleTrack {
  VectorXd center0;
  VectorXd velocity;
  double radius = 0;

  VectorXd center(double t) const { return center0 + t * velocity; }
};

/// N times k * horizon / N, k = 1..N.
SamplingPlan equitime_plan(double horizon, int count);

/// Index of the bin containing r under the half-open convention
/// CF_{i-1} <= r < CF_i.
int roulette_bin(const Population& pop, double r);

/// Continuous roulette selection: picks the bin for r, then interpolates
/// linearly between the midpoints to the neighboring individuals (clamped to
/// the bin's own individual at the population edges).
double roulette_select(const Population& pop, double r);

/**
 * @brief Plan whose points are equidistant in expected travelled position.
 *
 * The rootsolve variant inverts the expected position of the dominant
 * channel (largest total displacement) on an arithmetic grid of positions;
 * it requires a monotone expected position and falls back to the roulette
 * variant otherwise. The roulette variant selects times from a fine equitime
 * population with fitness ||E[v(t)]||, then sorts and de-duplicates within
 * horizon / (10 * count).
 */
SamplingPlan equidistant_plan(const VehicleModel& model, double horizon,
                              int count, PlanMode variant,
                              RandomStream* rng = nullptr, int grid = 0);

/**
 * @brief Drops plan times that provably contribute less than alpha each.
 *
 * A time survives if some augmented obstacle (radius vehicle_radius +
 * obstacle radius) comes within reach of the position error ellipsoid at
 * upper-tail probability alpha; by the ellipsoid-containment bound every
 * dropped time has single-point collision probability below alpha per
 * obstacle.
 */
SamplingPlan importance_filter(const SamplingPlan& plan,
                               const VehicleModel& model,
                               const std::vector<ObstacleTrack>& obstacles,
                               double vehicle_radius, double alpha);

/// Groups the filtered times into maximal runs of consecutive parent-plan
/// points, returned as [start_time, end_time] pairs.
std::vector<std::pair<double, double>> retained_intervals(
    const SamplingPlan& filtered, const SamplingPlan& parent);

}  // namespace cpest
