#pragma once

#include <vector>

#include "cpest/linalg.hpp"

namespace cpest {

/**
 * @brief Linear SDE dx = (A x + c) dt + S dB with Gaussian initial state.
 *
 * The state stacks d spatial coordinates and their velocities (dimension 2d);
 * Tp and Tv are the d x 2d selectors for position and velocity.
 */
struct LinearSde {
  MatrixXd A;
  VectorXd c;
  MatrixXd S;
  GaussianDist init;
  MatrixXd Tp;
  MatrixXd Tv;

  Index state_dim() const { return A.rows(); }
  Index space_dim() const { return Tp.rows(); }
  void validate() const;
};

/**
 * @brief One decoupled second-order channel
 * ddx + kd dx + kp x = c + G dB with jointly Gaussian (x(0), dx(0)).
 *
 * Only the regime with distinct nonzero real characteristic roots is
 * supported; `lambda1`, `lambda2` cache the roots of
 * s^2 + kd s + kp = 0.
 */
struct ChannelModel {
  double kd = 0;
  double kp = 0;
  double c = 0;
  double G = 0;
  double mu0 = 0;
  double mudot0 = 0;
  double sigma_x = 0;   // stddev of x(0)
  double sigma_v = 0;   // stddev of dx(0)
  double rho = 0;       // correlation of (x(0), dx(0))
  double lambda1 = 0;
  double lambda2 = 0;

  /// Validates the root regime and fills lambda1/lambda2.
  static ChannelModel create(double kd, double kp, double c, double G,
                             double mu0, double mudot0, double sigma_x,
                             double sigma_v, double rho);
  void validate() const;
};

/// Moments of the SDE solution: E[x(t)] and Cov[x(s), x(t)].
struct SdeMoments {
  VectorXd mean_at_t;
  MatrixXd cov_s_t;
};

/// Scalar moments of a channel solution.
struct ChannelMoments {
  double mean_at_t = 0;
  double cov_s_t = 0;
};

/// Exact Gaussian moments of the linear SDE solution.
SdeMoments sde_moments(const LinearSde& model, double s, double t);

/// Closed-form channel moments (distinct nonzero real roots).
ChannelMoments channel_moments(const ChannelModel& ch, double s, double t);

/// E[x(t)] of a channel.
double channel_mean(const ChannelModel& ch, double t);

/// d/dt E[x(t)] of a channel.
double channel_mean_velocity(const ChannelModel& ch, double t);

/// Equivalent 2-state SDE of one channel (state [x, dx]).
LinearSde to_linear_sde(const ChannelModel& ch);

/// Block SDE of d independent channels, positions first then velocities.
LinearSde assemble_sde(const std::vector<ChannelModel>& channels);

/**
 * @brief Finite-dimensional distribution of the position process.
 *
 * `dist` stacks the d position coordinates at each time point-major:
 * index i * d + a holds coordinate a at times[i].
 */
struct FddGaussian {
  std::vector<double> times;
  GaussianDist dist;
  Index space_dim = 0;

  Index point_count() const { return Index(times.size()); }
  void validate() const;
};

/// Vehicle dynamics: either d decoupled channels or one general linear SDE.
class VehicleModel {
 public:
  /// Empty model; assign a factory result before use.
  VehicleModel() = default;

  static VehicleModel from_channels(std::vector<ChannelModel> channels);
  static VehicleModel from_sde(LinearSde sde);

  bool has_channels() const { return !channels_.empty(); }
  const std::vector<ChannelModel>& channels() const { return channels_; }

  /// Full-state SDE (assembled and cached for channel models).
  const LinearSde& sde() const;

  Index space_dim() const;
  VectorXd mean_position(double t) const;
  VectorXd mean_velocity(double t) const;

  /// Gaussian marginal of the position vector at time t.
  GaussianDist position_marginal(double t) const;

 private:
  std::vector<ChannelModel> channels_;
  LinearSde sde_;
};

/// Joint Gaussian of positions at the given strictly increasing times.
FddGaussian build_fdd(const VehicleModel& model,
                      const std::vector<double>& times);

}  // namespace cpest
