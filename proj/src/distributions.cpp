#include "mda/distributions.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mda {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_square_chol(const Eigen::MatrixXd& chol) {
  if (chol.rows() != chol.cols() || chol.rows() < 1)
    throw Error(ErrorKind::PreconditionViolated, "normal-gamma: factor must be square and non-empty");
}

}  // namespace

// ---------------------------------------------------------------------------
// Normal-gamma
// ---------------------------------------------------------------------------

Eigen::MatrixXd NormalGammaParams::validated_cholesky() const {
  if (!(f > 0.0))
    throw Error(ErrorKind::NonpositiveDf, "normal-gamma: degrees of freedom must be positive (f = " +
                                              std::to_string(f) + ")");
  if (D.rows() < 1 || D.rows() != D.cols())
    throw Error(ErrorKind::PreconditionViolated, "normal-gamma: D must be square and non-empty");
  if (!is_symmetric(D, 1e-12))
    throw Error(ErrorKind::PreconditionViolated, "normal-gamma: D is not symmetric");
  return checked_cholesky(D, ErrorKind::SingularCholesky);
}

NormalGammaInnovation draw_innovation(int m, double f, Rng& rng) {
  NormalGammaInnovation out;
  out.e.resize(m - 1);
  for (int i = 0; i < m - 1; ++i) out.e(i) = rng.normal();
  out.chi2 = rng.chi_square(f);
  return out;
}

RegressionDraw normal_gamma_transform(const Eigen::MatrixXd& chol, const NormalGammaInnovation& innov) {
  check_square_chol(chol);
  const Eigen::Index m = chol.rows();
  Eigen::VectorXd e_tilde(m);
  e_tilde.head(m - 1) = innov.e;
  e_tilde(m - 1) = -std::sqrt(innov.chi2);
  const Eigen::VectorXd h = chol.transpose().triangularView<Eigen::Upper>().solve(e_tilde);
  RegressionDraw out;
  out.gamma = h(m - 1) * h(m - 1);
  out.theta = -h.head(m - 1) / h(m - 1);
  return out;
}

RegressionDraw normal_gamma_transform_factored(const Eigen::MatrixXd& chol,
                                               const NormalGammaInnovation& innov) {
  check_square_chol(chol);
  const Eigen::Index m = chol.rows();
  const double b_gg = chol(m - 1, m - 1);
  RegressionDraw out;
  out.gamma = innov.chi2 / (b_gg * b_gg);
  const Eigen::VectorXd rhs = innov.e / std::sqrt(out.gamma) + chol.row(m - 1).head(m - 1).transpose();
  out.theta = chol.topLeftCorner(m - 1, m - 1).transpose().triangularView<Eigen::Upper>().solve(rhs);
  return out;
}

RegressionDraw normal_gamma_sample(const Eigen::MatrixXd& chol, double f, Rng& rng) {
  return normal_gamma_transform(chol, draw_innovation(static_cast<int>(chol.rows()), f, rng));
}

RegressionDraw normal_gamma_sample(const NormalGammaParams& params, Rng& rng) {
  return normal_gamma_sample(params.validated_cholesky(), params.f, rng);
}

Eigen::VectorXd MarginalRegressionDraw::theta() const {
  Eigen::VectorXd t(alpha.size() + beta.size());
  t << alpha, beta;
  return t;
}

RegressionDraw normal_gamma_marginal_block(const Eigen::MatrixXd& chol, int q, double f, Rng& rng) {
  check_square_chol(chol);
  const int j = static_cast<int>(chol.rows()) - q;
  if (q < 0 || j < 1)
    throw Error(ErrorKind::PreconditionViolated, "normal-gamma marginal: need m = q + j with j >= 1");
  const Eigen::MatrixXd b22 = chol.bottomRightCorner(j, j);
  return normal_gamma_sample(b22, f, rng);
}

Eigen::VectorXd normal_gamma_conditional_alpha(const Eigen::MatrixXd& chol, int q,
                                               const Eigen::VectorXd& beta, double gamma, Rng& rng) {
  const int j = static_cast<int>(chol.rows()) - q;
  if (q == 0) return Eigen::VectorXd();
  Eigen::VectorXd t(j);
  t.head(j - 1) = -beta;
  t(j - 1) = 1.0;
  Eigen::VectorXd e(q);
  for (int i = 0; i < q; ++i) e(i) = rng.normal();
  const Eigen::VectorXd rhs = e / std::sqrt(gamma) + chol.bottomLeftCorner(j, q).transpose() * t;
  return chol.topLeftCorner(q, q).transpose().triangularView<Eigen::Upper>().solve(rhs);
}

MarginalRegressionDraw normal_gamma_sample_marginal(const Eigen::MatrixXd& chol, double f, int q,
                                                    Rng& rng) {
  const RegressionDraw block = normal_gamma_marginal_block(chol, q, f, rng);
  MarginalRegressionDraw out;
  out.beta = block.theta;
  out.gamma = block.gamma;
  out.alpha = normal_gamma_conditional_alpha(chol, q, out.beta, out.gamma, rng);
  return out;
}

MarginalRegressionDraw normal_gamma_sample_marginal(const NormalGammaParams& params, int q, Rng& rng) {
  return normal_gamma_sample_marginal(params.validated_cholesky(), params.f, q, rng);
}

double normal_gamma_log_kernel(const NormalGammaParams& params, const Eigen::VectorXd& theta,
                               double gamma) {
  const Eigen::Index m = params.D.rows();
  Eigen::VectorXd t(m);
  t.head(m - 1) = -theta;
  t(m - 1) = 1.0;
  return (0.5 * (params.f + static_cast<double>(m) - 1.0) - 1.0) * std::log(gamma) -
         0.5 * gamma * t.dot(params.D * t);
}

// ---------------------------------------------------------------------------
// Univariate normal helpers
// ---------------------------------------------------------------------------

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

namespace {

// Standard normal restricted to (a, b) with 0 <= a < b.
double upper_truncated_normal(double a, double b, Rng& rng) {
  if (std::isfinite(b) && (b - a) * (a + b) < 1.0) {
    // Narrow interval: uniform proposal, envelope phi(a).
    for (;;) {
      const double z = a + (b - a) * rng.uniform();
      if (z > a && z < b && rng.uniform() <= std::exp(-0.5 * (z * z - a * a))) return z;
    }
  }
  const double qa = normal_upper_tail(a);
  const double qb = normal_upper_tail(b);
  if (qa - qb >= 1e-10) {
    for (;;) {
      const double u = qb + (qa - qb) * rng.uniform();
      const double z = std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
      if (z > a && z < b) return z;
    }
  }
  // Far tail: translated-exponential proposal truncated to (a, b).
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  const double span = std::isfinite(b) ? 1.0 - std::exp(-rate * (b - a)) : 1.0;
  for (;;) {
    const double z = a - std::log1p(-span * rng.uniform()) / rate;
    if (!(z > a && z < b)) continue;
    const double dz = z - rate;
    if (rng.uniform() <= std::exp(-0.5 * dz * dz)) return z;
  }
}

}  // namespace

double standard_truncated_normal(double a, double b, Rng& rng) {
  if (!(a < b))
    throw Error(ErrorKind::EmptyInterval, "truncated normal: empty interval (" + std::to_string(a) +
                                              ", " + std::to_string(b) + ")");
  if (a == -kInf && b == kInf) return rng.normal();
  if (a >= 0.0) return upper_truncated_normal(a, b, rng);
  if (b <= 0.0) return -upper_truncated_normal(-b, -a, rng);
  if (b - a < 0.5) {
    for (;;) {
      const double z = a + (b - a) * rng.uniform();
      if (z > a && z < b && rng.uniform() <= std::exp(-0.5 * z * z)) return z;
    }
  }
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  for (;;) {
    const double z = normal_quantile(pa + (pb - pa) * rng.uniform());
    if (z > a && z < b) return z;
  }
}

double univariate_truncated_normal(double mean, double var, double lo, double hi, Rng& rng) {
  if (!(var > 0.0))
    throw Error(ErrorKind::PreconditionViolated, "truncated normal: variance must be positive");
  if (!(lo < hi))
    throw Error(ErrorKind::EmptyInterval, "truncated normal: empty interval (" + std::to_string(lo) +
                                              ", " + std::to_string(hi) + ")");
  const double sd = std::sqrt(var);
  const double z = standard_truncated_normal((lo - mean) / sd, (hi - mean) / sd, rng);
  double x = mean + sd * z;
  if (x <= lo) x = std::nextafter(lo, kInf);
  if (x >= hi) x = std::nextafter(hi, -kInf);
  return x;
}

// ---------------------------------------------------------------------------
// Truncated multivariate normal
// ---------------------------------------------------------------------------

TruncationBox TruncationBox::unbounded(int k) {
  return {Eigen::VectorXd::Constant(k, -kInf), Eigen::VectorXd::Constant(k, kInf)};
}

void TruncationBox::validate() const {
  if (lower.size() != upper.size())
    throw Error(ErrorKind::EmptyBox, "truncation box: bound vectors differ in length");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!(lower(i) < upper(i)))
      throw Error(ErrorKind::EmptyBox, "truncation box: dimension " + std::to_string(i + 1) +
                                           " has lower >= upper");
}

bool TruncationBox::contains(const Eigen::VectorXd& x) const {
  return ((x.array() >= lower.array()) && (x.array() <= upper.array())).all();
}

bool TruncationBox::strictly_contains(const Eigen::VectorXd& x) const {
  return ((x.array() > lower.array()) && (x.array() < upper.array())).all();
}

namespace {

// Gibbs sweeps over whitened coordinates z where the constrained quantity is
// offset + G z.
void whitened_sweeps(const Eigen::VectorXd& offset, const Eigen::MatrixXd& G,
                     const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, Eigen::VectorXd& z,
                     Rng& rng, int cycles) {
  Eigen::VectorXd fx = offset + G * z;
  const Eigen::Index k = z.size();
  for (int c = 0; c < cycles; ++c) {
    for (Eigen::Index i = 0; i < k; ++i) {
      double lo = -kInf;
      double hi = kInf;
      for (Eigen::Index l = 0; l < G.rows(); ++l) {
        const double g = G(l, i);
        if (g == 0.0) continue;
        const double rest = fx(l) - g * z(i);
        double a = (lower(l) - rest) / g;
        double b = (upper(l) - rest) / g;
        if (g < 0.0) std::swap(a, b);
        lo = std::max(lo, a);
        hi = std::min(hi, b);
      }
      if (!(lo < hi)) continue;  // pinned to a face by rounding
      const double zi = standard_truncated_normal(lo, hi, rng);
      fx += G.col(i) * (zi - z(i));
      z(i) = zi;
    }
  }
}

void check_cycles(int cycles) {
  if (cycles < 1) throw Error(ErrorKind::PreconditionViolated, "truncated MVN: cycles must be >= 1");
}

}  // namespace

Eigen::VectorXd truncated_mvn_sample_chol(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol,
                                          const TruncationBox& box, const Eigen::VectorXd& current,
                                          Rng& rng, int cycles) {
  check_cycles(cycles);
  box.validate();
  if (box.dim() != mean.size() || current.size() != mean.size() || chol.rows() != mean.size())
    throw Error(ErrorKind::PreconditionViolated, "truncated MVN: dimension mismatch");
  if (!box.contains(current))
    throw Error(ErrorKind::InfeasibleStart, "truncated MVN: warm start lies outside the box");
  const auto tri = chol.triangularView<Eigen::Lower>();
  Eigen::VectorXd z = tri.solve(current - mean);
  whitened_sweeps(mean, chol, box.lower, box.upper, z, rng, cycles);
  Eigen::VectorXd x = mean + tri * z;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) <= box.lower(i)) x(i) = std::nextafter(box.lower(i), kInf);
    if (x(i) >= box.upper(i)) x(i) = std::nextafter(box.upper(i), -kInf);
  }
  return x;
}

Eigen::VectorXd truncated_mvn_sample(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                     const TruncationBox& box, const Eigen::VectorXd& current, Rng& rng,
                                     int cycles) {
  return truncated_mvn_sample_chol(mean, checked_cholesky(cov, ErrorKind::NotPositiveDefinite), box,
                                   current, rng, cycles);
}

Eigen::VectorXd truncated_mvn_sample(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                     const LinearConstraints& constraints,
                                     const Eigen::VectorXd& current, Rng& rng, int cycles) {
  check_cycles(cycles);
  const Eigen::Index k = mean.size();
  if (constraints.F.cols() != k || constraints.lower.size() != constraints.F.rows() ||
      constraints.upper.size() != constraints.F.rows() || current.size() != k)
    throw Error(ErrorKind::PreconditionViolated, "truncated MVN: constraint dimension mismatch");
  for (Eigen::Index l = 0; l < constraints.F.rows(); ++l)
    if (!(constraints.lower(l) < constraints.upper(l)))
      throw Error(ErrorKind::EmptyBox, "truncated MVN: constraint " + std::to_string(l + 1) +
                                           " has lower >= upper");
  const Eigen::VectorXd fc = constraints.F * current;
  const double tol = 1e-12 * std::max(1.0, fc.cwiseAbs().maxCoeff());
  if (((fc.array() < constraints.lower.array() - tol) || (fc.array() > constraints.upper.array() + tol))
          .any())
    throw Error(ErrorKind::InfeasibleStart, "truncated MVN: warm start violates the constraints");
  const Eigen::MatrixXd chol = checked_cholesky(cov, ErrorKind::NotPositiveDefinite);
  const auto tri = chol.triangularView<Eigen::Lower>();
  Eigen::VectorXd z = tri.solve(current - mean);
  const Eigen::MatrixXd G = constraints.F * chol;
  whitened_sweeps(constraints.F * mean, G, constraints.lower, constraints.upper, z, rng, cycles);
  return mean + tri * z;
}

// ---------------------------------------------------------------------------
// Inverse Wishart
// ---------------------------------------------------------------------------

Eigen::MatrixXd inverse_wishart_sample(double df, const Eigen::MatrixXd& scale, Rng& rng) {
  const Eigen::Index p = scale.rows();
  if (!(df > static_cast<double>(p) - 1.0))
    throw Error(ErrorKind::NonpositiveDf, "inverse Wishart: df must exceed p - 1");
  const Eigen::MatrixXd c = checked_cholesky(scale, ErrorKind::NotPositiveDefinite);
  // Bartlett factor of a Wishart(df, I) draw.
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    t(i, i) = std::sqrt(rng.chi_square(df - static_cast<double>(i)));
    for (Eigen::Index k = 0; k < i; ++k) t(i, k) = rng.normal();
  }
  // Sigma = C T'^{-1} T^{-1} C'.
  const Eigen::MatrixXd k = t.triangularView<Eigen::Lower>().solve(c.transpose()).transpose();
  Eigen::MatrixXd sigma = k * k.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace mda
