#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cpest/process.hpp"
#include "cpest/sampling.hpp"

namespace cpest {

enum class Method { mc, fdmc };

/// One estimator run: frequency estimate, its confidence halfwidth and the
/// run bookkeeping reported in benchmark output.
struct EstimateResult {
  Method method = Method::mc;
  double cp = 0.0;
  double ci_halfwidth = 0.0;
  double confidence = 0.95;
  long long trials = 0;
  long long collisions = 0;
  int points_used = 0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
  double epsilon_bound = 0.0;        // filter certificate (FDMC only)
  bool filtered_everything = false;  // FDMC ran on an empty plan
};

/// Outcome of a single trial; hit fields are set only on collision.
struct TrialOutcome {
  bool collided = false;
  std::optional<int> first_hit_index;
  std::optional<int> first_hit_obstacle;
};

/// z_{(1-confidence)/2} * sqrt(freq (1 - freq) / trials).
double confidence_halfwidth(double freq, long long trials, double confidence);

struct McOptions {
  int workers = 0;  // 0 = hardware concurrency
  double confidence = 0.95;
  bool exact_step = false;  // exact Gaussian transition instead of Euler
};

/**
 * @brief Brute-force Monte Carlo collision probability.
 *
 * Propagates the full state with the Euler-Maruyama step
 * x_{k+1} = (I + A tau) x_k + tau c + S dB, dB ~ N(0, tau I), and checks the
 * position against every obstacle at each of the `steps` grid times. Each
 * trial consumes its own counter-derived substream (seed, trial index), so
 * results are identical for any worker count.
 */
EstimateResult mc_estimate(const VehicleModel& model,
                           const std::vector<ObstacleTrack>& obstacles,
                           double vehicle_radius, double horizon, int steps,
                           long long trials, std::uint64_t seed,
                           const McOptions& opt = {});

/// Single MC trial (exposed for tests).
TrialOutcome mc_single_trial(const VehicleModel& model,
                             const std::vector<ObstacleTrack>& obstacles,
                             double vehicle_radius, double horizon, int steps,
                             RandomStream& rng, bool exact_step = false);

struct FdmcOptions {
  int workers = 0;  // 0 = hardware concurrency
  double confidence = 0.95;
  double epsilon_bound = 0.0;  // reported filter certificate
};

/**
 * @brief Finite-dimensional Monte Carlo collision probability.
 *
 * Samples the joint Gaussian of positions at the (typically few, filtered)
 * plan times and counts trials where any point falls inside an augmented
 * obstacle. The covariance is factored once; per-trial substreams mirror
 * mc_estimate's.
 */
EstimateResult fdmc_estimate(const FddGaussian& fdd,
                             const std::vector<ObstacleTrack>& obstacles,
                             double vehicle_radius, long long trials,
                             std::uint64_t seed, const FdmcOptions& opt = {});

/// Single FDMC trial (exposed for tests).
TrialOutcome fdmc_single_trial(const FddGaussian& fdd,
                               const std::vector<ObstacleTrack>& obstacles,
                               double vehicle_radius, RandomStream& rng);

}  // namespace cpest
