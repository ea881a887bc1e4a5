#pragma once

#include <Eigen/Dense>

#include "mda/linalg.hpp"
#include "mda/random.hpp"

namespace mda {

// ---------------------------------------------------------------------------
// Normal-gamma NG(f, D)
//
// Density of (theta, gamma) proportional to
//   gamma^{(f+m-1)/2-1} exp(-gamma * t' D t / 2),  t = (-theta', 1)',
// with D = [[Omega, Omega b], [b' Omega, a + b' Omega b]], so that
// gamma ~ chi^2_f / a and theta | gamma ~ N(b, (gamma Omega)^{-1}).
// ---------------------------------------------------------------------------

struct NormalGammaParams {
  double f = 0.0;
  Eigen::MatrixXd D;

  int dim() const { return static_cast<int>(D.rows()); }
  /// Throws NonpositiveDf / SingularCholesky; returns the lower Cholesky factor of D.
  Eigen::MatrixXd validated_cholesky() const;
};

struct RegressionDraw {
  Eigen::VectorXd theta;
  double gamma = 0.0;
};

/// The underlying standard variates: e (length m-1) iid N(0,1) and e_m^2 ~ chi^2_f.
struct NormalGammaInnovation {
  Eigen::VectorXd e;
  double chi2 = 0.0;
};

NormalGammaInnovation draw_innovation(int m, double f, Rng& rng);

/// h = (B')^{-1} (e', e_m)', gamma = h_m^2, theta = -h_{1..m-1} / h_m. The
/// sign of e_m is taken negative so both pathways map the same innovation to
/// the same draw.
RegressionDraw normal_gamma_transform(const Eigen::MatrixXd& chol, const NormalGammaInnovation& innov);

/// gamma = e_m^2 / B_gg^2, theta = (B_tt')^{-1} (e / sqrt(gamma) + B_gt').
RegressionDraw normal_gamma_transform_factored(const Eigen::MatrixXd& chol,
                                               const NormalGammaInnovation& innov);

RegressionDraw normal_gamma_sample(const NormalGammaParams& params, Rng& rng);
RegressionDraw normal_gamma_sample(const Eigen::MatrixXd& chol, double f, Rng& rng);

/// Marginal-then-conditional draw for theta = (alpha (q), beta (m-q-1)).
struct MarginalRegressionDraw {
  Eigen::VectorXd beta;
  double gamma = 0.0;
  Eigen::VectorXd alpha;

  Eigen::VectorXd theta() const;
};

/// (beta, gamma) from NG(f, B22 B22'), the marginal law of the trailing block.
RegressionDraw normal_gamma_marginal_block(const Eigen::MatrixXd& chol, int q, double f, Rng& rng);

/// alpha | (beta, gamma) ~ N((B_aa')^{-1} B_21' t, (gamma B_aa B_aa')^{-1}), t = (-beta', 1)'.
Eigen::VectorXd normal_gamma_conditional_alpha(const Eigen::MatrixXd& chol, int q,
                                               const Eigen::VectorXd& beta, double gamma, Rng& rng);

MarginalRegressionDraw normal_gamma_sample_marginal(const NormalGammaParams& params, int q, Rng& rng);
MarginalRegressionDraw normal_gamma_sample_marginal(const Eigen::MatrixXd& chol, double f, int q,
                                                    Rng& rng);

/// Unnormalized log density of NG(f, D) at (theta, gamma).
double normal_gamma_log_kernel(const NormalGammaParams& params, const Eigen::VectorXd& theta,
                               double gamma);

// ---------------------------------------------------------------------------
// Truncated normals
// ---------------------------------------------------------------------------

double normal_cdf(double x);
/// P(Z > x), accurate far into the upper tail.
double normal_upper_tail(double x);
double normal_quantile(double p);

/// Per-coordinate bounds; infinite values allowed, lower < upper required.
struct TruncationBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static TruncationBox unbounded(int k);
  int dim() const { return static_cast<int>(lower.size()); }
  /// Throws EmptyBox when some lower >= upper.
  void validate() const;
  bool contains(const Eigen::VectorXd& x) const;
  bool strictly_contains(const Eigen::VectorXd& x) const;
};

/// Rows of F with lower <= F x <= upper.
struct LinearConstraints {
  Eigen::MatrixXd F;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Standard normal truncated to (a, b).
double standard_truncated_normal(double a, double b, Rng& rng);

/// N(mean, var) truncated to (lo, hi). Inverse-CDF when the interval holds at
/// least 1e-10 of the mass, exponential-proposal rejection further out.
double univariate_truncated_normal(double mean, double var, double lo, double hi, Rng& rng);

/// Gibbs sampling for N(mean, cov) restricted to `box`, in whitened
/// coordinates z = chol^{-1}(x - mean). `current` is the warm start and
/// `cycles` the number of full sweeps.
Eigen::VectorXd truncated_mvn_sample(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                     const TruncationBox& box, const Eigen::VectorXd& current, Rng& rng,
                                     int cycles = 1);

/// Same, with a precomputed lower Cholesky factor of the covariance.
Eigen::VectorXd truncated_mvn_sample_chol(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol,
                                          const TruncationBox& box, const Eigen::VectorXd& current,
                                          Rng& rng, int cycles = 1);

/// General linear inequality constraints (used for ordered cutoffs).
Eigen::VectorXd truncated_mvn_sample(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                     const LinearConstraints& constraints,
                                     const Eigen::VectorXd& current, Rng& rng, int cycles = 1);

// ---------------------------------------------------------------------------
// Wishart family
// ---------------------------------------------------------------------------

/// Sigma ~ IW(df, scale): density proportional to
/// |Sigma|^{-(df+p+1)/2} exp(-tr(scale Sigma^{-1}) / 2). Requires df > p - 1.
Eigen::MatrixXd inverse_wishart_sample(double df, const Eigen::MatrixXd& scale, Rng& rng);

}  // namespace mda
