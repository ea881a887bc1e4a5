#include <Eigen/Dense>

#include "doctest.h"
#include "mda/linalg.hpp"
#include "support.hpp"

using namespace mda;

TEST_CASE("ldl of the identity") {
  const auto f = ldl_decompose(Eigen::MatrixXd::Identity(2, 2));
  CHECK(f.L.isApprox(Eigen::MatrixXd::Identity(2, 2)));
  CHECK(f.lambda.isApprox(Eigen::VectorXd::Ones(2)));
}

TEST_CASE("ldl of a 2x2 correlation matrix by hand") {
  Eigen::MatrixXd s(2, 2);
  s << 1, 0.5, 0.5, 1;
  const auto f = ldl_decompose(s);
  CHECK(f.L(1, 0) == doctest::Approx(0.5));
  CHECK(f.lambda(1) == doctest::Approx(0.75));
  CHECK(f.gamma()(1) == doctest::Approx(4.0 / 3.0));
  // beta_21 sits in U with a minus sign
  CHECK(f.U(1, 0) == doctest::Approx(-0.5));
}

TEST_CASE("ldl round trip and inverse on random matrices") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const int p = 2 + rep % 6;
    const Eigen::MatrixXd s = mdatest::random_spd(p, rng);
    const auto f = ldl_decompose(s);
    CHECK((s - f.recompose()).norm() / s.norm() < 1e-12);
    CHECK((f.U * f.L - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-10);
    for (int j = 0; j < p; ++j) {
      CHECK(f.U(j, j) == 1.0);
      for (int k = j + 1; k < p; ++k) CHECK(f.U(j, k) == 0.0);
    }
  }
}

TEST_CASE("beta entries are sequential regression coefficients") {
  Rng rng(9);
  const Eigen::MatrixXd s = mdatest::random_spd(4, rng);
  const auto f = ldl_decompose(s);
  for (int j = 1; j < 4; ++j) {
    const Eigen::VectorXd coef = s.topLeftCorner(j, j).llt().solve(s.row(j).head(j).transpose());
    const Eigen::VectorXd beta = -f.U.row(j).head(j).transpose();
    CHECK((coef - beta).cwiseAbs().maxCoeff() < 1e-10);
    const double resid = s(j, j) - s.row(j).head(j).dot(coef);
    CHECK(f.lambda(j) == doctest::Approx(resid).epsilon(1e-10));
  }
}

TEST_CASE("not positive definite is rejected") {
  Eigen::MatrixXd s(2, 2);
  s << 1, 1, 1, 1;
  CHECK_THROWS_AS(ldl_decompose(s), Error);
  try {
    ldl_decompose(s);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
  }
  CHECK_THROWS_AS(checked_cholesky(s), Error);
}

TEST_CASE("matrix-free identities against dense computation") {
  Rng rng(21);
  for (int rep = 0; rep < 25; ++rep) {
    const int p = 2 + rep % 7;
    const Eigen::MatrixXd s = mdatest::random_spd(p, rng);
    const auto f = ldl_decompose(s);
    const Eigen::VectorXd g = f.gamma();
    const Eigen::VectorXd d = marginal_variances(f.L, g);
    const Eigen::MatrixXd inv = s.inverse();
    const Eigen::VectorXd sjj = precision_diagonal(f.U, g);
    const Eigen::MatrixXd r = correlation_from_covariance(s);
    const Eigen::MatrixXd rinv = r.inverse();
    for (int j = 0; j < p; ++j) {
      CHECK(d(j) == doctest::Approx(s(j, j)).epsilon(1e-10));
      CHECK(sjj(j) == doctest::Approx(inv(j, j)).epsilon(1e-10));
      CHECK(d(j) * sjj(j) == doctest::Approx(rinv(j, j)).epsilon(1e-10));
    }
    CHECK(log_det_covariance(g) == doctest::Approx(std::log(s.determinant())).epsilon(1e-10));
    CHECK(log_det_correlation(g, d) == doctest::Approx(std::log(r.determinant())).epsilon(1e-9));
  }
}

TEST_CASE("correlation matrix has unit diagonal") {
  Rng rng(3);
  const Eigen::MatrixXd r = correlation_from_covariance(mdatest::random_spd(5, rng));
  for (int j = 0; j < 5; ++j) CHECK(r(j, j) == 1.0);
}

TEST_CASE("conditional normal matches the bivariate closed form") {
  Eigen::VectorXd mu(2);
  mu << 1.0, -2.0;
  Eigen::MatrixXd s(2, 2);
  s << 1, 0.6, 0.6, 1;
  Eigen::VectorXd v(1);
  v << 0.5;
  const auto c = conditional_normal(mu, s, {0}, {1}, v);
  CHECK(c.mean(0) == doctest::Approx(1.0 + 0.6 * (0.5 + 2.0)));
  CHECK(c.cov(0, 0) == doctest::Approx(1.0 - 0.36));
}

TEST_CASE("templated linalg works in long double") {
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> s(2, 2);
  s << 2, 1, 1, 2;
  const auto f = ldl_decompose(s);
  CHECK(static_cast<double>((s - f.recompose()).norm()) < 1e-15);
}
