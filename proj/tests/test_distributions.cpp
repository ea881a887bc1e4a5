#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mda/distributions.hpp"
#include "support.hpp"

using namespace mda;
using mdatest::moments;

namespace {

// Gauss-Legendre free trapezoid on a fine grid; enough for smooth integrands.
template <typename F>
double integrate(F f, double a, double b, int n = 200000) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

}  // namespace

TEST_CASE("normal quantile inverts the cdf") {
  for (double p : {1e-12, 1e-5, 0.025, 0.3, 0.5, 0.8, 0.975, 1 - 1e-9}) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  }
  CHECK(normal_quantile(0.8) == doctest::Approx(0.8416212335729143));
  CHECK(normal_upper_tail(10.0) == doctest::Approx(7.619853024160527e-24).epsilon(1e-8));
}

TEST_CASE("two normal-gamma forms are pathwise identical") {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const int m = 2 + rep % 5;
    const Eigen::MatrixXd d = mdatest::random_spd(m, rng);
    const Eigen::MatrixXd chol = checked_cholesky(d);
    const auto innov = draw_innovation(m, 3.5, rng);
    const auto a = normal_gamma_transform(chol, innov);
    const auto b = normal_gamma_transform_factored(chol, innov);
    CHECK(std::abs(a.gamma - b.gamma) <= 1e-10 * a.gamma);
    CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + a.theta.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("normal-gamma: D = I, f = 5") {
  Rng rng(2);
  NormalGammaParams ng{5.0, Eigen::MatrixXd::Identity(2, 2)};
  std::vector<double> g, t;
  for (int i = 0; i < 200000; ++i) {
    const auto d = normal_gamma_sample(ng, rng);
    g.push_back(d.gamma);
    t.push_back(d.theta(0));
  }
  const auto mg = moments(g), mt = moments(t);
  CHECK(std::abs(mg.mean - 5.0) < 3 * mg.se);
  CHECK(std::abs(mt.mean) < 3 * mt.se);
}

TEST_CASE("normal-gamma: conditional scale from B_tt") {
  Rng rng(3);
  Eigen::MatrixXd d(2, 2);
  d << 4, 0, 0, 1;
  NormalGammaParams ng{1.0, d};
  std::vector<double> v;
  for (int i = 0; i < 200000; ++i) {
    const auto s = normal_gamma_sample(ng, rng);
    const double z = s.theta(0) * std::sqrt(s.gamma);
    v.push_back(z * z);
  }
  const auto m = moments(v);
  CHECK(std::abs(m.mean - 0.25) < 3 * m.se);
}

TEST_CASE("marginal-then-conditional normal-gamma matches the joint law") {
  Rng rng(4);
  NormalGammaParams ng{4.0, Eigen::MatrixXd::Identity(3, 3)};
  ng.D(2, 0) = ng.D(0, 2) = 0.4;  // B21 != 0
  std::vector<double> a1, b1, g1, a2, b2, g2;
  for (int i = 0; i < 200000; ++i) {
    const auto j = normal_gamma_sample(ng, rng);
    a1.push_back(j.theta(0));
    b1.push_back(j.theta(1));
    g1.push_back(j.gamma);
    const auto m = normal_gamma_sample_marginal(ng, 1, rng);
    a2.push_back(m.alpha(0));
    b2.push_back(m.beta(0));
    g2.push_back(m.gamma);
  }
  auto agree = [](const std::vector<double>& x, const std::vector<double>& y) {
    const auto mx = moments(x), my = moments(y);
    return std::abs(mx.mean - my.mean) < 3 * std::hypot(mx.se, my.se);
  };
  CHECK(agree(a1, a2));
  CHECK(agree(b1, b2));
  CHECK(agree(g1, g2));
}

TEST_CASE("marginal normal-gamma without a beta block") {
  Rng rng(5);
  NormalGammaParams ng{6.0, Eigen::MatrixXd::Identity(2, 2)};
  const auto m = normal_gamma_sample_marginal(ng, 1, rng);
  CHECK(m.beta.size() == 0);
  CHECK(m.alpha.size() == 1);
  CHECK(m.gamma > 0);
}

TEST_CASE("normal-gamma errors") {
  Rng rng(6);
  NormalGammaParams bad{0.0, Eigen::MatrixXd::Identity(2, 2)};
  CHECK_THROWS(normal_gamma_sample(bad, rng));
  NormalGammaParams sing{3.0, Eigen::MatrixXd::Ones(2, 2)};
  try {
    normal_gamma_sample(sing, rng);
    FAIL("expected SingularCholesky");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularCholesky);
  }
}

TEST_CASE("univariate truncated normal: far tail (Mills ratio)") {
  Rng rng(7);
  std::vector<double> v;
  for (int i = 0; i < 100000; ++i) {
    const double x = univariate_truncated_normal(0.0, 1.0, 5.0, INFINITY, rng);
    REQUIRE(x > 5.0);
    v.push_back(x);
  }
  CHECK(std::abs(moments(v).mean - 5.1865) < 0.01);
}

TEST_CASE("univariate truncated normal: deep tail stays in bounds") {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double x = univariate_truncated_normal(0.0, 1.0, 12.0, 12.5, rng);
    CHECK(x > 12.0);
    CHECK(x < 12.5);
    const double y = univariate_truncated_normal(0.0, 1.0, -INFINITY, -9.0, rng);
    CHECK(y < -9.0);
  }
}

TEST_CASE("univariate truncated normal: bounded interval vs quadrature") {
  Rng rng(9);
  // N(2, 4) on (1, 3)
  const double num = integrate([](double x) { return x * phi((x - 2) / 2); }, 1, 3);
  const double den = integrate([](double x) { return phi((x - 2) / 2); }, 1, 3);
  std::vector<double> v;
  for (int i = 0; i < 100000; ++i) {
    const double x = univariate_truncated_normal(2.0, 4.0, 1.0, 3.0, rng);
    REQUIRE((x > 1.0 && x < 3.0));
    v.push_back(x);
  }
  const auto m = moments(v);
  CHECK(std::abs(m.mean - num / den) < 3 * m.se);
}

TEST_CASE("univariate truncated normal: unbounded is standard normal (KS)") {
  Rng rng(10);
  std::vector<double> v;
  for (int i = 0; i < 100000; ++i) v.push_back(univariate_truncated_normal(0.0, 1.0, -INFINITY, INFINITY, rng));
  std::sort(v.begin(), v.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = normal_cdf(v[i]);
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / v.size()), std::abs(f - static_cast<double>(i + 1) / v.size())});
  }
  CHECK(ks < 0.01);
}

TEST_CASE("univariate truncated normal: empty interval") {
  Rng rng(11);
  try {
    univariate_truncated_normal(0, 1, 1.0, 1.0, rng);
    FAIL("expected EmptyInterval");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyInterval);
  }
}

TEST_CASE("truncated mvn: untruncated and half-normal") {
  Rng rng(12);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(1), x = Eigen::VectorXd::Constant(1, 0.5);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(1, 1);
  std::vector<double> free, half;
  const auto unb = TruncationBox::unbounded(1);
  TruncationBox pos{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, INFINITY)};
  Eigen::VectorXd y = x;
  for (int i = 0; i < 100000; ++i) {
    x = truncated_mvn_sample(mean, cov, unb, x, rng);
    free.push_back(x(0));
    y = truncated_mvn_sample(mean, cov, pos, y, rng);
    REQUIRE(y(0) > 0.0);
    half.push_back(y(0));
  }
  const auto mf = moments(free), mh = moments(half);
  CHECK(std::abs(mf.mean) < 3 * mf.se);
  CHECK(std::abs(mh.mean - std::sqrt(2.0 / M_PI)) < 3 * mh.se);
}

TEST_CASE("truncated mvn: correlated orthant vs 2-d quadrature") {
  Rng rng(13);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd cov(2, 2);
  cov << 1, 0.8, 0.8, 1;
  TruncationBox box{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, INFINITY)};
  // Quadrature of E[x1] over the positive orthant.
  const Eigen::MatrixXd prec = cov.inverse();
  double z = 0, m1 = 0;
  const double h = 0.01;
  for (double a = h / 2; a < 8; a += h)
    for (double b = h / 2; b < 8; b += h) {
      const double q = prec(0, 0) * a * a + 2 * prec(0, 1) * a * b + prec(1, 1) * b * b;
      const double w = std::exp(-0.5 * q);
      z += w;
      m1 += a * w;
    }
  const double oracle = m1 / z;
  Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 0.5);
  std::vector<double> v;
  for (int i = 0; i < 1000; ++i) x = truncated_mvn_sample(mean, cov, box, x, rng);
  for (int i = 0; i < 200000; ++i) {
    x = truncated_mvn_sample(mean, cov, box, x, rng);
    REQUIRE(box.strictly_contains(x));
    v.push_back(x(0));
  }
  // Gibbs draws are autocorrelated; thin to near independence for the SE.
  std::vector<double> thin;
  for (std::size_t i = 0; i < v.size(); i += 20) thin.push_back(v[i]);
  const auto m = moments(thin);
  CHECK(std::abs(m.mean - oracle) < 3 * m.se);
}

TEST_CASE("truncated mvn: infeasible start and empty box") {
  Rng rng(14);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(1, 1);
  TruncationBox pos{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, INFINITY)};
  try {
    truncated_mvn_sample(mean, cov, pos, Eigen::VectorXd::Constant(1, -1.0), rng);
    FAIL("expected InfeasibleStart");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InfeasibleStart);
  }
  TruncationBox empty{Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)};
  try {
    truncated_mvn_sample(mean, cov, empty, Eigen::VectorXd::Ones(1), rng);
    FAIL("expected EmptyBox");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyBox);
  }
}

TEST_CASE("inverse wishart mean") {
  Rng rng(15);
  Eigen::MatrixXd scale(2, 2);
  scale << 2, 0.5, 0.5, 1;
  const double df = 8;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(2, 2);
  std::vector<double> s00;
  for (int i = 0; i < 100000; ++i) {
    const Eigen::MatrixXd s = inverse_wishart_sample(df, scale, rng);
    acc += s;
    s00.push_back(s(0, 0));
  }
  const auto m = moments(s00);
  CHECK(std::abs(m.mean - scale(0, 0) / (df - 3)) < 3 * m.se);
  CHECK((acc / 100000.0 - scale / (df - 3)).cwiseAbs().maxCoeff() < 0.01);
}
