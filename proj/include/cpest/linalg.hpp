#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

#include "cpest/errors.hpp"
#include "cpest/rng.hpp"

namespace cpest {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

template <typename Matrix>
typename Matrix::Scalar l1_norm(const Matrix& m) {
  if (m.size() == 0) return typename Matrix::Scalar(0);
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

// Pade numerator coefficients for the Higham (2005) scaling-and-squaring
// scheme, orders 3/5/7/9/13, together with the double-precision theta
// thresholds on the L1 norm.

template <typename Matrix, typename Scalar>
void pade3(const Matrix& a, const Matrix& a2, Matrix& u, Matrix& v) {
  static const Scalar b[] = {120, 60, 12, 1};
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  u.noalias() = a * (b[3] * a2 + b[1] * ident);
  v = b[2] * a2 + b[0] * ident;
}

template <typename Matrix, typename Scalar>
void pade5(const Matrix& a, const Matrix& a2, Matrix& u, Matrix& v) {
  static const Scalar b[] = {30240, 15120, 3360, 420, 30, 1};
  const Matrix a4 = a2 * a2;
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  u.noalias() = a * (b[5] * a4 + b[3] * a2 + b[1] * ident);
  v = b[4] * a4 + b[2] * a2 + b[0] * ident;
}

template <typename Matrix, typename Scalar>
void pade7(const Matrix& a, const Matrix& a2, Matrix& u, Matrix& v) {
  static const Scalar b[] = {17297280, 8648640, 1995840, 277200,
                             25200,    1512,    56,      1};
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  u.noalias() = a * (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
}

template <typename Matrix, typename Scalar>
void pade9(const Matrix& a, const Matrix& a2, Matrix& u, Matrix& v) {
  static const Scalar b[] = {17643225600.0, 8821612800.0, 2075673600.0,
                             302702400.0,   30270240.0,   2162160.0,
                             110880.0,      3960.0,       90.0,
                             1.0};
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix a8 = a6 * a2;
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  u.noalias() =
      a * (b[9] * a8 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  v = b[8] * a8 + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
}

template <typename Matrix, typename Scalar>
void pade13(const Matrix& a, const Matrix& a2, Matrix& u, Matrix& v) {
  static const Scalar b[] = {64764752532480000.0, 32382376266240000.0,
                             7771770303897600.0,  1187353796428800.0,
                             129060195264000.0,   10559470521600.0,
                             670442572800.0,      33522128640.0,
                             1323241920.0,        40840800.0,
                             960960.0,            16380.0,
                             182.0,               1.0};
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  Matrix tmp = b[13] * a6 + b[11] * a4 + b[9] * a2;
  u.noalias() = a * (a6 * tmp + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  tmp = b[12] * a6 + b[10] * a4 + b[8] * a2;
  v.noalias() = a6 * tmp;
  v += b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
}

}  // namespace detail

/**
 * @brief Matrix exponential e^{A t} by scaling-and-squaring.
 *
 * Pade approximant order is chosen from the L1 norm of A t (orders 3/5/7/9/13
 * with the standard double-precision thresholds); the order-13 branch scales
 * by a power of two and squares back. Accurate to ~1e-13 relative for the
 * small stable matrices used here.
 */
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> mat_exp(
    const Eigen::MatrixBase<Derived>& a_in,
    typename Derived::Scalar t = typename Derived::Scalar(1)) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  if (a_in.rows() != a_in.cols())
    throw DimensionError("mat_exp: matrix must be square");

  Matrix a = a_in.derived() * t;
  const Index n = a.rows();
  if (n == 0) return Matrix(0, 0);

  const Scalar norm = detail::l1_norm(a);
  Matrix u(n, n), v(n, n);
  int squarings = 0;

  const Matrix a2 = a * a;
  if (norm <= Scalar(1.495585217958292e-2)) {
    detail::pade3<Matrix, Scalar>(a, a2, u, v);
  } else if (norm <= Scalar(2.539398330063230e-1)) {
    detail::pade5<Matrix, Scalar>(a, a2, u, v);
  } else if (norm <= Scalar(9.504178996162932e-1)) {
    detail::pade7<Matrix, Scalar>(a, a2, u, v);
  } else if (norm <= Scalar(2.097847961257068e0)) {
    detail::pade9<Matrix, Scalar>(a, a2, u, v);
  } else {
    const Scalar theta13 = Scalar(5.371920351148152e0);
    if (norm > theta13) {
      squarings = std::max(0, int(std::ceil(std::log2(norm / theta13))));
      a /= std::pow(Scalar(2), squarings);
    }
    const Matrix a2s = a * a;
    detail::pade13<Matrix, Scalar>(a, a2s, u, v);
  }

  Matrix numer = v + u;
  Matrix denom = v - u;
  Matrix result = denom.partialPivLu().solve(numer);
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

/**
 * @brief Controllability Gramian Q(t) = int_0^t e^{A v} S S^T e^{A^T v} dv.
 *
 * Computed by a Van Loan block exponential on a sub-interval h = t / 2^k with
 * ||A h|| small, then composed by doubling, Q(2h) = Q(h) + e^{A h} Q(h)
 * e^{A^T h}. Everything stays bounded for stable A at large t, where the raw
 * block exponential would overflow precision.
 */
template <typename D1, typename D2>
MatrixXd controllability_gramian(const Eigen::MatrixBase<D1>& a_in,
                                 const Eigen::MatrixBase<D2>& s_in, double t) {
  const MatrixXd a = a_in.derived();
  const MatrixXd s = s_in.derived();
  const Index n = a.rows();
  if (a.rows() != a.cols())
    throw DimensionError("controllability_gramian: A must be square");
  if (s.rows() != n)
    throw DimensionError("controllability_gramian: S row count must match A");
  if (t < 0) throw DomainError("controllability_gramian: t must be >= 0");

  MatrixXd q = MatrixXd::Zero(n, n);
  if (t == 0 || s.size() == 0) return q;

  const MatrixXd qdot = s * s.transpose();
  const double anorm = detail::l1_norm(a);
  double h = t;
  int k = 0;
  while (anorm * h > 0.25 && k < 64) {
    h *= 0.5;
    ++k;
  }

  MatrixXd block = MatrixXd::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = -a;
  block.topRightCorner(n, n) = qdot;
  block.bottomRightCorner(n, n) = a.transpose();
  const MatrixXd eb = mat_exp(block, h);

  MatrixXd flow = eb.bottomRightCorner(n, n).transpose();  // e^{A h}
  q.noalias() = flow * eb.topRightCorner(n, n);            // Q(h)
  q = 0.5 * (q + q.transpose()).eval();

  for (int i = 0; i < k; ++i) {
    q = (q + flow * q * flow.transpose()).eval();
    q = 0.5 * (q + q.transpose()).eval();
    flow = (flow * flow).eval();
  }
  return q;
}

/// Noise Gramian in the backward orientation,
/// int_0^t e^{-A u} S S^T e^{-A^T u} du.
template <typename D1, typename D2>
MatrixXd gram_integral(const Eigen::MatrixBase<D1>& a,
                       const Eigen::MatrixBase<D2>& s, double t) {
  return controllability_gramian((-a.derived()).eval(), s, t);
}

/// e^{A t} together with the drift integral D(t) = int_0^t e^{A v} dv,
/// extracted from one augmented block exponential.
struct FlowDrift {
  MatrixXd flow;
  MatrixXd drift;
};

template <typename Derived>
FlowDrift flow_and_drift(const Eigen::MatrixBase<Derived>& a_in, double t) {
  const MatrixXd a = a_in.derived();
  const Index n = a.rows();
  if (a.rows() != a.cols())
    throw DimensionError("flow_and_drift: A must be square");
  MatrixXd block = MatrixXd::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = a;
  block.topRightCorner(n, n) = MatrixXd::Identity(n, n);
  const MatrixXd eb = mat_exp(block, t);
  return FlowDrift{eb.topLeftCorner(n, n), eb.topRightCorner(n, n)};
}

/// Lower-triangular factor of a PSD matrix; `jittered` reports that a
/// diagonal nudge was needed to complete the factorization.
struct PsdFactor {
  MatrixXd L;
  bool jittered = false;
};

/**
 * @brief Cholesky factorization tolerant of singular covariances.
 *
 * Rejects matrices with an eigenvalue below -1e-8 times the largest
 * eigenvalue. Singular-but-PSD inputs are factored after adding
 * delta = 1e-12 * trace(P)/n to the diagonal (escalated if needed)
 * and the result is flagged.
 */
inline PsdFactor chol(const MatrixXd& p) {
  const Index n = p.rows();
  if (p.rows() != p.cols()) throw DimensionError("chol: matrix must be square");
  const double scale = p.cwiseAbs().maxCoeff();
  if (n == 0) return PsdFactor{MatrixXd(0, 0), false};
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, scale))
    throw DomainError("chol: matrix not symmetric");

  Eigen::LLT<MatrixXd> llt(p);
  if (llt.info() == Eigen::Success && scale > 0)
    return PsdFactor{MatrixXd(llt.matrixL()), false};

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p, Eigen::EigenvaluesOnly);
  const double emax = eig.eigenvalues().maxCoeff();
  const double emin = eig.eigenvalues().minCoeff();
  if (emin < -1e-8 * std::max(emax, 0.0) && emin < 0)
    throw NotPsdError("chol: matrix has a negative eigenvalue");

  if (scale == 0.0)  // zero covariance factors to zero exactly
    return PsdFactor{MatrixXd::Zero(n, n), true};

  double delta = 1e-12 * p.trace() / double(n);
  if (delta <= 0) delta = 1e-12 * scale;
  MatrixXd ident = MatrixXd::Identity(n, n);
  for (int attempt = 0; attempt < 8; ++attempt) {
    llt.compute(p + delta * ident);
    if (llt.info() == Eigen::Success)
      return PsdFactor{MatrixXd(llt.matrixL()), true};
    delta *= 100.0;
  }
  throw NotPsdError("chol: factorization failed after jitter escalation");
}

namespace detail {

/// Regularized lower incomplete gamma P(a, x) by series / continued fraction.
inline double lower_reg_gamma(double a, double x) {
  if (a <= 0 || x < 0) throw DomainError("lower_reg_gamma: bad arguments");
  if (x == 0) return 0.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 1000; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  double b = x + 1.0 - a;
  double c = 1e308;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - lg) * h;
}

}  // namespace detail

/// Chi-square CDF with `dof` degrees of freedom.
inline double chi2_cdf(double x, int dof) {
  if (dof < 1) throw DomainError("chi2_cdf: dof must be >= 1");
  if (x <= 0) return 0.0;
  return detail::lower_reg_gamma(0.5 * dof, 0.5 * x);
}

/// Upper-tail chi-square quantile: q with Pr(X > q) = alpha.
inline double chi2_quantile(double alpha, int dof) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("chi2_quantile: alpha must be in (0, 1)");
  if (dof < 1) throw DomainError("chi2_quantile: dof must be >= 1");
  const double target = 1.0 - alpha;
  double lo = 0.0;
  double hi = std::max(1.0, dof + 10.0);
  for (int i = 0; i < 400 && chi2_cdf(hi, dof) < target; ++i) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(mid, dof) < target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-14 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

/// Standard normal upper-tail probability Pr(Z > z).
inline double normal_upper_tail(double z) {
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

/// Upper-tail standard normal quantile: z with Pr(Z > z) = alpha.
inline double normal_quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("normal_quantile: alpha must be in (0, 1)");
  if (alpha == 0.5) return 0.0;
  if (alpha > 0.5) return -normal_quantile(1.0 - alpha);
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < 400 && normal_upper_tail(hi) > alpha; ++i) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (normal_upper_tail(mid) > alpha)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

/// Mean and covariance of a multivariate Gaussian.
struct GaussianDist {
  VectorXd mean;
  MatrixXd cov;

  Index dim() const { return mean.size(); }

  void validate(double tol = 1e-10) const {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
      throw DimensionError("GaussianDist: mean/cov dimensions disagree");
    if (mean.size() == 0) return;  // zero-dimensional: nothing to check
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > tol * scale)
      throw DomainError("GaussianDist: covariance not symmetric");
  }
};

/// Solid ellipsoid { x : (x - center)^T shape^{-1} (x - center) <= threshold }.
/// `shape` stores the covariance-form matrix, not its inverse.
struct Ellipsoid {
  VectorXd center;
  MatrixXd shape;
  double threshold = 1.0;
};

/// Draws from a fixed Gaussian; the covariance is factored once.
class MvnSampler {
 public:
  explicit MvnSampler(const GaussianDist& dist) : mean_(dist.mean) {
    dist.validate();
    PsdFactor f = chol(dist.cov);
    l_ = std::move(f.L);
    jittered_ = f.jittered;
  }

  const VectorXd& mean() const { return mean_; }
  const MatrixXd& factor() const { return l_; }
  bool jittered() const { return jittered_; }

  /// out = mean + L z, drawing dim() standard normals from `rng`.
  void sample_into(RandomStream& rng, VectorXd& out, VectorXd& z) const {
    const Index n = mean_.size();
    z.resize(n);
    for (Index i = 0; i < n; ++i) z[i] = rng.normal();
    out.resize(n);
    out.noalias() = l_.triangularView<Eigen::Lower>() * z;
    out += mean_;
  }

  VectorXd operator()(RandomStream& rng) const {
    VectorXd out, z;
    sample_into(rng, out, z);
    return out;
  }

 private:
  VectorXd mean_;
  MatrixXd l_;
  bool jittered_ = false;
};

/// One draw from `dist` using the given stream.
inline VectorXd mvn_sample(const GaussianDist& dist, RandomStream& rng) {
  return MvnSampler(dist)(rng);
}

/**
 * @brief Euclidean distance from a point to a solid ellipsoid (0 if inside).
 *
 * Works in the ellipsoid's principal axes: with semi-axes a_i =
 * sqrt(threshold * lambda_i), the projection onto the surface solves the
 * secular equation sum_i (a_i y_i / (a_i^2 + mu))^2 = 1, which is monotone in
 * mu and bisected to machine precision. Degenerate axes (lambda_i ~ 0) pin
 * the projection to the center plane and contribute their offset directly.
 */
inline double dist_point_to_ellipsoid(const VectorXd& p, const Ellipsoid& e) {
  const Index n = p.size();
  if (e.center.size() != n || e.shape.rows() != n || e.shape.cols() != n)
    throw DimensionError("dist_point_to_ellipsoid: dimension mismatch");
  if (e.threshold < 0)
    throw DomainError("dist_point_to_ellipsoid: threshold must be >= 0");

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(e.shape);
  if (eig.info() != Eigen::Success)
    throw NumericalError("dist_point_to_ellipsoid: eigendecomposition failed");
  const VectorXd& lam = eig.eigenvalues();
  const double lmax = lam.maxCoeff();
  if (lam.minCoeff() < -1e-8 * std::max(lmax, 0.0))
    throw NotPsdError("dist_point_to_ellipsoid: shape not PSD");

  const VectorXd y = eig.eigenvectors().transpose() * (p - e.center);

  VectorXd ax2(n);  // squared semi-axes, degenerate ones clamped to zero
  const double degen = 1e-14 * std::max(lmax * e.threshold, 1e-300);
  for (Index i = 0; i < n; ++i) {
    const double v = std::max(lam[i], 0.0) * e.threshold;
    ax2[i] = (v > degen) ? v : 0.0;
  }

  // Membership test and accumulation of the degenerate-axis offset.
  double fixed2 = 0.0;
  double inside_sum = 0.0;
  bool inside = true;
  const double tol = 1e-12 * std::sqrt(std::max(lmax * e.threshold, 0.0)) +
                     1e-300;
  for (Index i = 0; i < n; ++i) {
    if (ax2[i] == 0.0) {
      fixed2 += y[i] * y[i];
      if (std::abs(y[i]) > tol) inside = false;
    } else {
      inside_sum += y[i] * y[i] / ax2[i];
    }
  }
  if (inside && inside_sum <= 1.0) return 0.0;

  // All axes degenerate: the ellipsoid is its center.
  double active2 = 0.0;
  for (Index i = 0; i < n; ++i)
    if (ax2[i] > 0.0) active2 += ax2[i] * y[i] * y[i];
  if (active2 == 0.0) return std::sqrt(fixed2);

  auto secular = [&](double mu) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (ax2[i] == 0.0) continue;
      const double d = ax2[i] + mu;
      const double r = std::sqrt(ax2[i]) * y[i] / d;
      s += r * r;
    }
    return s;
  };

  double lo = 0.0;
  double hi = std::sqrt(active2) + 1.0;
  if (secular(lo) <= 1.0) {
    // On-surface within roundoff; treat as touching.
    return std::sqrt(fixed2);
  }
  while (secular(hi) > 1.0) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (secular(mid) > 1.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * (1.0 + hi)) break;
  }
  const double mu = 0.5 * (lo + hi);

  double dist2 = fixed2;
  for (Index i = 0; i < n; ++i) {
    if (ax2[i] == 0.0) continue;
    const double r = mu * y[i] / (ax2[i] + mu);
    dist2 += r * r;
  }
  return std::sqrt(dist2);
}

}  // namespace cpest
