#include "cpest/process.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cpest {

void LinearSde::validate() const {
  const Index n = A.rows();
  if (A.cols() != n) throw DimensionError("LinearSde: A must be square");
  const Index d = Tp.rows();
  if (d <= 0) throw DimensionError("LinearSde: Tp must have at least one row");
  if (n != 2 * d)
    throw DimensionError("LinearSde: state dimension must be twice Tp rows");
  if (Tp.cols() != n || Tv.rows() != d || Tv.cols() != n)
    throw DimensionError("LinearSde: Tp/Tv must be d x 2d");
  if (c.size() != n) throw DimensionError("LinearSde: c size must match A");
  if (S.rows() != n) throw DimensionError("LinearSde: S rows must match A");
  if (init.mean.size() != n)
    throw DimensionError("LinearSde: init dimension must match A");
  init.validate();
}

ChannelModel ChannelModel::create(double kd, double kp, double c, double G,
                                  double mu0, double mudot0, double sigma_x,
                                  double sigma_v, double rho) {
  ChannelModel ch;
  ch.kd = kd;
  ch.kp = kp;
  ch.c = c;
  ch.G = G;
  ch.mu0 = mu0;
  ch.mudot0 = mudot0;
  ch.sigma_x = sigma_x;
  ch.sigma_v = sigma_v;
  ch.rho = rho;
  const double disc = kd * kd - 4.0 * kp;
  if (!(disc > 0))
    throw UnsupportedModelError(
        "ChannelModel: characteristic roots must be real and distinct "
        "(kd^2 - 4 kp > 0)");
  if (kp == 0.0)
    throw UnsupportedModelError("ChannelModel: zero root (kp must be nonzero)");
  if (kd == 0.0)
    throw UnsupportedModelError(
        "ChannelModel: undamped channel (kd = 0) has no closed-form "
        "covariance in this regime");
  const double sq = std::sqrt(disc);
  ch.lambda1 = 0.5 * (-kd + sq);
  ch.lambda2 = 0.5 * (-kd - sq);
  if (sigma_x < 0 || sigma_v < 0)
    throw DomainError("ChannelModel: standard deviations must be >= 0");
  if (G < 0) throw DomainError("ChannelModel: G must be >= 0");
  if (std::abs(rho) > 1.0)
    throw DomainError("ChannelModel: |rho| must be <= 1");
  ch.validate();
  return ch;
}

void ChannelModel::validate() const {
  const double scale =
      std::max({1.0, std::abs(kp), std::abs(kd), lambda1 * lambda1});
  if (std::abs(lambda1 * lambda2 - kp) > 1e-10 * scale ||
      std::abs(lambda1 + lambda2 + kd) > 1e-10 * scale)
    throw UnsupportedModelError("ChannelModel: cached roots are inconsistent");
  if (lambda1 == lambda2 || lambda1 == 0.0 || lambda2 == 0.0)
    throw UnsupportedModelError("ChannelModel: roots must be distinct nonzero");
}

SdeMoments sde_moments(const LinearSde& model, double s, double t) {
  model.validate();
  if (s < 0 || t < 0) throw DomainError("sde_moments: times must be >= 0");

  const MatrixXd& a = model.A;
  const double m = std::min(s, t);

  const FlowDrift ft = flow_and_drift(a, t);
  SdeMoments out;
  out.mean_at_t = ft.flow * model.init.mean + ft.drift * model.c;

  const MatrixXd es = (s == t) ? ft.flow : mat_exp(a, s);
  const MatrixXd q = controllability_gramian(a, model.S, m);

  MatrixXd cov = es * model.init.cov * ft.flow.transpose();
  if (s <= t) {
    const MatrixXd lag = (s == t) ? MatrixXd::Identity(a.rows(), a.rows())
                                  : mat_exp(a, t - s);
    cov.noalias() += q * lag.transpose();
  } else {
    cov.noalias() += mat_exp(a, s - t) * q;
  }
  out.cov_s_t = cov;
  if (s == t) out.cov_s_t = 0.5 * (cov + cov.transpose());
  return out;
}

namespace {

// Homogeneous solution weights of the channel ODE.
double phi1(const ChannelModel& ch, double t) {
  return (ch.lambda2 * std::exp(ch.lambda1 * t) -
          ch.lambda1 * std::exp(ch.lambda2 * t)) /
         (ch.lambda2 - ch.lambda1);
}

double phi2(const ChannelModel& ch, double t) {
  return (std::exp(ch.lambda2 * t) - std::exp(ch.lambda1 * t)) /
         (ch.lambda2 - ch.lambda1);
}

double forcing(const ChannelModel& ch, double t) {
  const double l1 = ch.lambda1;
  const double l2 = ch.lambda2;
  return ch.c *
         (l1 * std::exp(l2 * t) - l2 * std::exp(l1 * t) + l2 - l1) /
         (ch.kp * (l2 - l1));
}

// Driving-noise covariance term of Cov[x(s), x(t)] for s <= t.
double noise_cov(const ChannelModel& ch, double s, double t) {
  const double l1 = ch.lambda1;
  const double l2 = ch.lambda2;
  const double dl = l2 - l1;
  const double g2 = ch.G * ch.G;
  const double term_lag =
      (l1 * std::exp(l2 * (t - s)) - l2 * std::exp(l1 * (t - s))) /
      (-2.0 * ch.kp * ch.kd * dl);
  const double term_sum =
      (l1 * std::exp(l2 * (s + t)) + l2 * std::exp(l1 * (s + t))) /
      (2.0 * ch.kp * dl * dl);
  const double term_cross =
      (std::exp(l2 * s + l1 * t) + std::exp(l2 * t + l1 * s)) /
      (ch.kd * dl * dl);
  return g2 * (term_lag + term_sum + term_cross);
}

}  // namespace

ChannelMoments channel_moments(const ChannelModel& ch, double s, double t) {
  ch.validate();
  if (s < 0 || t < 0) throw DomainError("channel_moments: times must be >= 0");
  ChannelMoments out;
  out.mean_at_t = channel_mean(ch, t);

  const double lo = std::min(s, t);
  const double hi = std::max(s, t);
  const double cx = phi1(ch, lo) * phi1(ch, hi) * ch.sigma_x * ch.sigma_x;
  const double cv = phi2(ch, lo) * phi2(ch, hi) * ch.sigma_v * ch.sigma_v;
  const double cxv = (phi1(ch, lo) * phi2(ch, hi) + phi1(ch, hi) * phi2(ch, lo)) *
                     ch.rho * ch.sigma_x * ch.sigma_v;
  out.cov_s_t = cx + cv + cxv + noise_cov(ch, lo, hi);
  return out;
}

double channel_mean(const ChannelModel& ch, double t) {
  return phi1(ch, t) * ch.mu0 + phi2(ch, t) * ch.mudot0 + forcing(ch, t);
}

double channel_mean_velocity(const ChannelModel& ch, double t) {
  const double l1 = ch.lambda1;
  const double l2 = ch.lambda2;
  const double dphi2 =
      (l2 * std::exp(l2 * t) - l1 * std::exp(l1 * t)) / (l2 - l1);
  return -ch.kp * phi2(ch, t) * ch.mu0 + dphi2 * ch.mudot0 +
         ch.c * phi2(ch, t);
}

LinearSde to_linear_sde(const ChannelModel& ch) {
  LinearSde m;
  m.A = MatrixXd(2, 2);
  m.A << 0, 1, -ch.kp, -ch.kd;
  m.c = VectorXd(2);
  m.c << 0, ch.c;
  m.S = MatrixXd(2, 1);
  m.S << 0, ch.G;
  m.init.mean = VectorXd(2);
  m.init.mean << ch.mu0, ch.mudot0;
  m.init.cov = MatrixXd(2, 2);
  const double cxv = ch.rho * ch.sigma_x * ch.sigma_v;
  m.init.cov << ch.sigma_x * ch.sigma_x, cxv, cxv, ch.sigma_v * ch.sigma_v;
  m.Tp = MatrixXd(1, 2);
  m.Tp << 1, 0;
  m.Tv = MatrixXd(1, 2);
  m.Tv << 0, 1;
  m.validate();
  return m;
}

LinearSde assemble_sde(const std::vector<ChannelModel>& channels) {
  const Index d = Index(channels.size());
  if (d == 0) throw DimensionError("assemble_sde: no channels");
  LinearSde m;
  m.A = MatrixXd::Zero(2 * d, 2 * d);
  m.c = VectorXd::Zero(2 * d);
  m.S = MatrixXd::Zero(2 * d, d);
  m.init.mean = VectorXd::Zero(2 * d);
  m.init.cov = MatrixXd::Zero(2 * d, 2 * d);
  m.Tp = MatrixXd::Zero(d, 2 * d);
  m.Tv = MatrixXd::Zero(d, 2 * d);
  for (Index a = 0; a < d; ++a) {
    const ChannelModel& ch = channels[size_t(a)];
    ch.validate();
    m.A(a, d + a) = 1.0;
    m.A(d + a, a) = -ch.kp;
    m.A(d + a, d + a) = -ch.kd;
    m.c[d + a] = ch.c;
    m.S(d + a, a) = ch.G;
    m.init.mean[a] = ch.mu0;
    m.init.mean[d + a] = ch.mudot0;
    m.init.cov(a, a) = ch.sigma_x * ch.sigma_x;
    m.init.cov(d + a, d + a) = ch.sigma_v * ch.sigma_v;
    const double cxv = ch.rho * ch.sigma_x * ch.sigma_v;
    m.init.cov(a, d + a) = cxv;
    m.init.cov(d + a, a) = cxv;
    m.Tp(a, a) = 1.0;
    m.Tv(a, d + a) = 1.0;
  }
  m.validate();
  return m;
}

void FddGaussian::validate() const {
  if (space_dim <= 0 && !times.empty())
    throw DimensionError("FddGaussian: space_dim must be positive");
  for (size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0) throw DomainError("FddGaussian: negative time");
    if (i > 0 && !(times[i] > times[i - 1]))
      throw DomainError("FddGaussian: times must be strictly increasing");
  }
  if (dist.mean.size() != Index(times.size()) * std::max(space_dim, Index(0)))
    throw DimensionError("FddGaussian: dimension must be points * space_dim");
  dist.validate();
}

VehicleModel VehicleModel::from_channels(std::vector<ChannelModel> channels) {
  VehicleModel m;
  m.sde_ = assemble_sde(channels);
  m.channels_ = std::move(channels);
  return m;
}

VehicleModel VehicleModel::from_sde(LinearSde sde) {
  sde.validate();
  VehicleModel m;
  m.sde_ = std::move(sde);
  return m;
}

const LinearSde& VehicleModel::sde() const { return sde_; }

Index VehicleModel::space_dim() const { return sde_.space_dim(); }

VectorXd VehicleModel::mean_position(double t) const {
  const Index d = space_dim();
  VectorXd out(d);
  if (has_channels()) {
    for (Index a = 0; a < d; ++a)
      out[a] = channel_mean(channels_[size_t(a)], t);
    return out;
  }
  const FlowDrift fd = flow_and_drift(sde_.A, t);
  return sde_.Tp * (fd.flow * sde_.init.mean + fd.drift * sde_.c);
}

VectorXd VehicleModel::mean_velocity(double t) const {
  const Index d = space_dim();
  VectorXd out(d);
  if (has_channels()) {
    for (Index a = 0; a < d; ++a)
      out[a] = channel_mean_velocity(channels_[size_t(a)], t);
    return out;
  }
  const FlowDrift fd = flow_and_drift(sde_.A, t);
  return sde_.Tv * (fd.flow * sde_.init.mean + fd.drift * sde_.c);
}

GaussianDist VehicleModel::position_marginal(double t) const {
  const Index d = space_dim();
  GaussianDist g;
  if (has_channels()) {
    g.mean = VectorXd(d);
    g.cov = MatrixXd::Zero(d, d);
    for (Index a = 0; a < d; ++a) {
      const ChannelMoments cm = channel_moments(channels_[size_t(a)], t, t);
      g.mean[a] = cm.mean_at_t;
      g.cov(a, a) = std::max(cm.cov_s_t, 0.0);
    }
    return g;
  }
  const SdeMoments sm = sde_moments(sde_, t, t);
  g.mean = sde_.Tp * sm.mean_at_t;
  MatrixXd cov = sde_.Tp * sm.cov_s_t * sde_.Tp.transpose();
  g.cov = 0.5 * (cov + cov.transpose());
  return g;
}

FddGaussian build_fdd(const VehicleModel& model,
                      const std::vector<double>& times) {
  const Index d = model.space_dim();
  const Index n = Index(times.size());
  for (Index i = 0; i < n; ++i) {
    if (times[size_t(i)] < 0) throw DomainError("build_fdd: negative time");
    if (i > 0 && !(times[size_t(i)] > times[size_t(i - 1)]))
      throw DomainError("build_fdd: times must be strictly increasing");
  }

  FddGaussian fdd;
  fdd.times = times;
  fdd.space_dim = d;
  fdd.dist.mean = VectorXd::Zero(n * d);
  fdd.dist.cov = MatrixXd::Zero(n * d, n * d);
  if (n == 0) return fdd;

  if (model.has_channels()) {
    const auto& chs = model.channels();
    for (Index a = 0; a < d; ++a) {
      const ChannelModel& ch = chs[size_t(a)];
      for (Index i = 0; i < n; ++i) {
        fdd.dist.mean[i * d + a] = channel_mean(ch, times[size_t(i)]);
        for (Index j = i; j < n; ++j) {
          const ChannelMoments cm =
              channel_moments(ch, times[size_t(i)], times[size_t(j)]);
          fdd.dist.cov(i * d + a, j * d + a) = cm.cov_s_t;
          fdd.dist.cov(j * d + a, i * d + a) = cm.cov_s_t;
        }
      }
    }
    fdd.validate();
    return fdd;
  }

  const LinearSde& m = model.sde();
  const MatrixXd& a = m.A;
  std::vector<MatrixXd> flow(static_cast<size_t>(n)), gram(static_cast<size_t>(n));
  std::vector<VectorXd> mean(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const FlowDrift fd = flow_and_drift(a, times[size_t(i)]);
    flow[size_t(i)] = fd.flow;
    gram[size_t(i)] = controllability_gramian(a, m.S, times[size_t(i)]);
    mean[size_t(i)] = fd.flow * m.init.mean + fd.drift * m.c;
    fdd.dist.mean.segment(i * d, d) = m.Tp * mean[size_t(i)];
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      // Cov[x(t_i), x(t_j)] = E_i Sigma0 E_j^T + Q(t_i) e^{A^T (t_j - t_i)}
      MatrixXd cov = flow[size_t(i)] * m.init.cov * flow[size_t(j)].transpose();
      const MatrixXd lag = mat_exp(a, times[size_t(j)] - times[size_t(i)]);
      cov.noalias() += gram[size_t(i)] * lag.transpose();
      const MatrixXd block = m.Tp * cov * m.Tp.transpose();
      fdd.dist.cov.block(i * d, j * d, d, d) = block;
      fdd.dist.cov.block(j * d, i * d, d, d) = block.transpose();
    }
  }
  fdd.dist.cov = 0.5 * (fdd.dist.cov + fdd.dist.cov.transpose()).eval();
  fdd.validate();
  return fdd;
}

}  // namespace cpest
