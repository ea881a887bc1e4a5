#pragma once

// Synthetic data generators and small statistics helpers shared by the unit
// and acceptance tests.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "mda/dataset.hpp"
#include "mda/linalg.hpp"
#include "mda/random.hpp"

namespace mdatest {

inline Eigen::MatrixXd random_spd(int p, mda::Rng& rng) {
  Eigen::MatrixXd a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.5 * p * Eigen::MatrixXd::Identity(p, p);
}

inline Eigen::MatrixXd exchangeable(int p, double rho) {
  return (1.0 - rho) * Eigen::MatrixXd::Identity(p, p) + rho * Eigen::MatrixXd::Ones(p, p);
}

inline Eigen::VectorXd mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol, mda::Rng& rng) {
  Eigen::VectorXd e(mean.size());
  for (Eigen::Index k = 0; k < e.size(); ++k) e(k) = rng.normal();
  return mean + chol * e;
}

struct Trial {
  Eigen::MatrixXd x;  // n x q: intercept, treatment indicator, then N(0,1) covariates
  Eigen::MatrixXd y;  // complete latent or continuous outcomes
  std::vector<std::string> ids, arms;
};

/// Two-arm trial: subject i is active with probability 1/2; x = (1, arm, z...).
inline Trial simulate_trial(int n, const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& sigma, mda::Rng& rng) {
  const int p = static_cast<int>(alpha.rows()), q = static_cast<int>(alpha.cols());
  Trial t;
  t.x.resize(n, q);
  t.y.resize(n, p);
  const Eigen::MatrixXd chol = sigma.llt().matrixL();
  for (int i = 0; i < n; ++i) {
    t.x(i, 0) = 1.0;
    if (q > 1) t.x(i, 1) = rng.uniform() < 0.5 ? 1.0 : 0.0;
    for (int k = 2; k < q; ++k) t.x(i, k) = rng.normal();
    t.y.row(i) = mvn(alpha * t.x.row(i).transpose(), chol, rng).transpose();
    t.ids.push_back("s" + std::to_string(i + 1));
    t.arms.push_back(q > 1 && t.x(i, 1) == 1.0 ? "active" : "control");
  }
  return t;
}

/// MAR dropout: after each observed visit j < p the subject drops out with
/// probability logistic(a + b * y_j); cells after dropout are set to NaN.
inline Eigen::MatrixXd apply_mar_dropout(const Eigen::MatrixXd& y, double a, double b, mda::Rng& rng) {
  Eigen::MatrixXd out = y;
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j + 1 < y.cols(); ++j) {
      const double pr = 1.0 / (1.0 + std::exp(-(a + b * y(i, j))));
      if (rng.uniform() < pr) {
        out.row(i).tail(y.cols() - j - 1).setConstant(std::nan(""));
        break;
      }
    }
  return out;
}

/// Dropout fraction a + b y chosen to give roughly `rate` of subjects dropping out
/// over p - 1 opportunities when b = 0.
inline double dropout_intercept(double rate, int p) {
  const double per_visit = 1.0 - std::pow(1.0 - rate, 1.0 / (p - 1));
  return std::log(per_visit / (1.0 - per_visit));
}

inline mda::LongitudinalDataset continuous_data(const Trial& t, const Eigen::MatrixXd& y) {
  std::vector<std::string> names;
  for (Eigen::Index k = 0; k < t.x.cols(); ++k) names.push_back("x" + std::to_string(k + 1));
  return mda::LongitudinalDataset::continuous(t.ids, t.arms, t.x, y, names);
}

/// Categories from latent values: w = 1 + #{cutoffs below y}.
inline Eigen::MatrixXi categorize_latent(const Eigen::MatrixXd& latent, const std::vector<double>& cutoffs) {
  Eigen::MatrixXi w(latent.rows(), latent.cols());
  for (Eigen::Index i = 0; i < latent.rows(); ++i)
    for (Eigen::Index j = 0; j < latent.cols(); ++j) {
      if (std::isnan(latent(i, j))) {
        w(i, j) = 0;
        continue;
      }
      int k = 1;
      for (double c : cutoffs) k += latent(i, j) > c ? 1 : 0;
      w(i, j) = k;
    }
  return w;
}

inline mda::LongitudinalDataset categorical_data(const Trial& t, const Eigen::MatrixXi& w, int categories) {
  std::vector<std::string> names;
  for (Eigen::Index k = 0; k < t.x.cols(); ++k) names.push_back("x" + std::to_string(k + 1));
  return mda::LongitudinalDataset::categorical(t.ids, t.arms, t.x, w, categories, names);
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;  // iid standard error
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  const double n = static_cast<double>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / (n - 1));
  m.se = m.sd / std::sqrt(n);
  return m;
}

/// Mean with a batch-means standard error, for autocorrelated chains.
inline Moments batch_moments(const std::vector<double>& v, int batches = 50) {
  std::vector<double> means;
  const std::size_t len = v.size() / static_cast<std::size_t>(batches);
  for (int b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += v[i];
    means.push_back(s / static_cast<double>(len));
  }
  return moments(means);
}

}  // namespace mdatest
