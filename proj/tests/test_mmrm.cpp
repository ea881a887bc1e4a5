#include <Eigen/Dense>

#include <cmath>

#include "doctest.h"
#include "mda/errors.hpp"
#include "mda/mmrm.hpp"
#include "support.hpp"

using namespace mda;
using mdatest::moments;

namespace {

const double NA = std::nan("");

LongitudinalDataset synthetic(int n, double dropout, std::uint64_t seed, int p = 3, int q = 2) {
  Rng rng(seed);
  Eigen::MatrixXd alpha(p, q);
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < q; ++k) alpha(j, k) = 0.3 * (j + 1) - 0.2 * k;
  const auto t = mdatest::simulate_trial(n, alpha, mdatest::exchangeable(p, 0.5), rng);
  const Eigen::MatrixXd y =
      dropout > 0 ? mdatest::apply_mar_dropout(t.y, mdatest::dropout_intercept(dropout, p), 0.3, rng) : t.y;
  return mdatest::continuous_data(t, y);
}

// Log density of the MNIW prior at (alpha, Sigma), up to a constant.
double mniw_log_density(const MniwPrior& pr, const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& sigma) {
  const int p = static_cast<int>(sigma.rows());
  const int r = pr.rank();
  const Eigen::MatrixXd inv = sigma.inverse();
  const Eigen::MatrixXd v = alpha - pr.B0.transpose();
  return -0.5 * (pr.nu0 + p + 1 + r) * std::log(sigma.determinant()) -
         0.5 * (inv * pr.A).trace() - 0.5 * (pr.M * v.transpose() * inv * v).trace();
}

}  // namespace

TEST_CASE("prior decomposition examples") {
  auto schafer = decompose_prior(MniwPrior::jeffreys_flat(2, 1), 2, 1);
  CHECK(schafer.visits[0].f == -2.0);
  CHECK(schafer.visits[0].D.isZero());
  CHECK(schafer.rank == 0);

  MniwPrior wi = MniwPrior::weakly_informative(4, 3, 0.5);
  const auto d = decompose_prior(wi, 4, 3);
  CHECK(d.visits[3].f == 5.0);
  CHECK(d.visits[3].D.rows() == 7);

  MniwPrior flat = MniwPrior::jeffreys_flat(2, 1);
  flat.A = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  const auto fd = decompose_prior(flat, 2, 1);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(3, 3);
  expect.bottomRightCorner(2, 2) = flat.A;
  CHECK(fd.visits[1].D.isApprox(expect));
}

TEST_CASE("rank of M uses a relative tolerance") {
  MniwPrior pr = MniwPrior::weakly_informative(2, 3, 1e-12);
  CHECK(pr.rank() == 3);
  pr.M(2, 2) = 0.0;
  CHECK(pr.rank() == 2);
  CHECK(pr.flat_covariates() == std::vector<int>{2});
}

TEST_CASE("prior validation") {
  MniwPrior pr = MniwPrior::weakly_informative(2, 2);
  pr.M(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(pr.validate(2, 2), Error);
  MniwPrior flat = MniwPrior::weakly_informative(2, 2);
  flat.M(1, 1) = 0.0;
  flat.B0(1, 0) = 1.0;  // flat covariate with a nonzero prior mean
  CHECK_THROWS_AS(flat.validate(2, 2), Error);
}

TEST_CASE("decomposed prior recombines to the MNIW density") {
  Rng rng(31);
  const int p = 3, q = 2;
  MniwPrior pr;
  pr.A = mdatest::random_spd(p, rng);
  pr.nu0 = 6;
  pr.B0 = Eigen::MatrixXd::Random(q, p);
  pr.M = mdatest::random_spd(q, rng);
  const auto dec = decompose_prior(pr, p, q);
  auto ng_sum = [&](const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& sigma) {
    const auto s = SeqRegState::from_alpha_sigma(alpha, sigma);
    double acc = 0.0;
    for (int j = 0; j < p; ++j) acc += normal_gamma_log_kernel(dec.visits[j], s.theta[j], s.gamma(j));
    return acc;
  };
  // The NG kernels are a density in (theta, gamma). Sigma = L Lambda L' has
  // Jacobian prod lambda_j^{p - j}, unit-triangular inversion has Jacobian 1,
  // and lambda = 1 / gamma contributes gamma^-2; alpha -> U alpha has Jacobian 1.
  auto jac = [&](const Eigen::MatrixXd& sigma) {
    const Eigen::VectorXd g = ldl_decompose(sigma).gamma();
    double lj = 0.0;
    for (int j = 0; j < p; ++j) lj -= (p - j + 1) * std::log(g(j));
    return lj;
  };
  const Eigen::MatrixXd a1 = Eigen::MatrixXd::Random(p, q), a2 = Eigen::MatrixXd::Random(p, q);
  const Eigen::MatrixXd s1 = mdatest::random_spd(p, rng), s2 = mdatest::random_spd(p, rng);
  const double lhs = mniw_log_density(pr, a1, s1) - mniw_log_density(pr, a2, s2);
  const double rhs = (ng_sum(a1, s1) - jac(s1)) - (ng_sum(a2, s2) - jac(s2));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
}

TEST_CASE("posterior df and Gram update") {
  const auto data = synthetic(60, 0.3, 1);
  const auto arr = arrange_monotone(data);
  const auto pr = MniwPrior::weakly_informative(3, 2);
  const auto dec = decompose_prior(pr, 3, 2);
  const auto filled = initial_fill(data, false);
  const auto post = mda_posterior(dec, data, arr, filled);
  for (int j = 0; j < 3; ++j) CHECK(post.visits[j].f == arr.counts[j] + dec.visits[j].f);
  // Dense construction of D_1.
  Eigen::MatrixXd g = dec.visits[1].D;
  for (int i = 0; i < data.n(); ++i)
    if (data.pattern(i) >= 2) {
      const Eigen::VectorXd z = z_row(data, i, 2, filled);
      g += z * z.transpose();
    }
  CHECK((post.visits[1].D - g).norm() < 1e-9 * g.norm());

  GramCache cache(data, arr);
  const auto post2 = mda_posterior(dec, cache, arr.counts, filled);
  for (int j = 0; j < 3; ++j) CHECK((post2.visits[j].D - post.visits[j].D).norm() < 1e-9 * g.norm());
}

TEST_CASE("single subject Gram equals z z'") {
  Eigen::MatrixXd y(1, 1);
  y << 2.0;
  const auto d = LongitudinalDataset::continuous({"a"}, {"P"}, Eigen::MatrixXd::Ones(1, 1), y);
  MniwPrior pr = MniwPrior::jeffreys_flat(1, 1);
  pr.nu0 = 3;
  const auto post = mda_posterior(decompose_prior(pr, 1, 1), d, arrange_monotone(d), y, {true});
  Eigen::MatrixXd zz(2, 2);
  zz << 1, 2, 2, 4;
  CHECK((post.visits[0].D - zz).norm() < 1e-6);
  CHECK(post.ridge_applied);
}

TEST_CASE("collinear covariates under a flat prior are improper") {
  const auto base = synthetic(40, 0.0, 2);
  Eigen::MatrixXd x(base.n(), 3);
  x << base.covariates(), base.covariates().col(1);
  const auto d = LongitudinalDataset::continuous(base.ids(), base.arms(), x, base.outcomes());
  MniwPrior pr = MniwPrior::jeffreys_flat(3, 3);
  pr.nu0 = 6;
  try {
    mda_posterior(decompose_prior(pr, 3, 3), d, arrange_monotone(d), d.outcomes());
    FAIL("expected ImproperPosterior");
  } catch (const ImproperPosterior& e) {
    CHECK(e.visit() == 1);
  }
  // The ridge makes the posterior usable for exploration.
  const auto post = mda_posterior(decompose_prior(pr, 3, 3), d, arrange_monotone(d), d.outcomes(), {true});
  CHECK(post.ridge_applied);
}

TEST_CASE("nonpositive posterior df is improper") {
  Eigen::MatrixXd y(1, 2);
  y << 1, 2;
  const auto d = LongitudinalDataset::continuous({"a"}, {"P"}, Eigen::MatrixXd::Ones(1, 1), y);
  CHECK_THROWS_AS(mda_posterior(decompose_prior(MniwPrior::jeffreys_flat(2, 1), 2, 1), d, arrange_monotone(d), y),
                  ImproperPosterior);
}

TEST_CASE("sample_seq_reg: gamma mean and independence across visits") {
  NgPosteriorSet post;
  for (int j = 0; j < 2; ++j) {
    post.visits.push_back({6.0, Eigen::MatrixXd::Identity(j + 2, j + 2)});
    post.chol.push_back(Eigen::MatrixXd::Identity(j + 2, j + 2));
  }
  Rng rng(4);
  std::vector<double> g1, g2, g1m, prod;
  for (int i = 0; i < 200000; ++i) {
    const auto s = sample_seq_reg(post, 1, rng);
    g1.push_back(s.gamma(0));
    g2.push_back(s.gamma(1));
    prod.push_back((s.gamma(0) - 6) * (s.gamma(1) - 6));
    g1m.push_back(sample_seq_reg(post, 1, rng, SamplingMode::Marginal).gamma(0));
  }
  const auto m1 = moments(g1), mm = moments(g1m), mp = moments(prod);
  CHECK(std::abs(m1.mean - 6.0) < 3 * m1.se);
  CHECK(std::abs(mm.mean - 6.0) < 3 * mm.se);
  CHECK(std::abs(mp.mean) < 3 * mp.se);
}

TEST_CASE("state reconstruction round trip") {
  Rng rng(5);
  const Eigen::MatrixXd sigma = mdatest::random_spd(4, rng);
  const Eigen::MatrixXd alpha = Eigen::MatrixXd::Random(4, 3);
  const auto s = SeqRegState::from_alpha_sigma(alpha, sigma);
  CHECK((s.sigma() - sigma).norm() < 1e-10 * sigma.norm());
  CHECK((s.alpha() - alpha).norm() < 1e-10);
  CHECK((s.U() * s.alpha() - s.alpha_tilde()).norm() < 1e-10);
}

TEST_CASE("intermittent imputation: bivariate conditional") {
  Eigen::MatrixXd y(1, 2);
  y << NA, 1.0;
  const auto d = LongitudinalDataset::continuous({"a"}, {"P"}, Eigen::MatrixXd::Ones(1, 1), y);
  const auto arr = arrange_monotone(d);
  Eigen::MatrixXd alpha(2, 1);
  alpha << 0.5, -0.5;
  const double rho = 0.6;
  const auto state = SeqRegState::from_alpha_sigma(alpha, mdatest::exchangeable(2, rho));
  Rng rng(6);
  std::vector<double> v;
  Eigen::MatrixXd filled = y;
  for (int i = 0; i < 100000; ++i) {
    impute_intermittent(state, d, arr, filled, rng);
    CHECK(filled(0, 1) == 1.0);
    v.push_back(filled(0, 0));
  }
  const auto m = moments(v);
  CHECK(std::abs(m.mean - (0.5 + rho * (1.0 + 0.5))) < 3 * m.se);
  CHECK(m.sd * m.sd == doctest::Approx(1 - rho * rho).epsilon(0.02));
}

TEST_CASE("intermittent imputation leaves data without holes unchanged") {
  const auto d = synthetic(20, 0.3, 7);
  const auto arr = arrange_monotone(d);
  REQUIRE(arr.intermittent.empty());
  const auto state = SeqRegState::from_alpha_sigma(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Identity(3, 3));
  Eigen::MatrixXd filled = d.outcomes();
  Rng rng(1);
  impute_intermittent(state, d, arr, filled, rng);
  CHECK(filled.array().isNaN().count() == d.outcomes().array().isNaN().count());
}

TEST_CASE("FDA: q = 1 posterior mean formula") {
  Rng rng(8);
  const int n = 30;
  Eigen::MatrixXd y(n, 2);
  for (int i = 0; i < n; ++i) y.row(i) << 1 + rng.normal(), -1 + rng.normal();
  MniwPrior pr = MniwPrior::weakly_informative(2, 1, 3.0);
  pr.B0 << 2.0, 0.5;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(n, 1);
  std::vector<double> a0;
  for (int k = 0; k < 100000; ++k) a0.push_back(fda_posterior_sample(pr, x, y, rng).alpha(0, 0));
  const double expect = (n * y.col(0).mean() + 3.0 * 2.0) / (n + 3.0);
  const auto m = moments(a0);
  CHECK(std::abs(m.mean - expect) < 3 * m.se);
}

TEST_CASE("FDA recovers Sigma on large samples") {
  const auto d = synthetic(3000, 0.0, 9);
  Rng rng(10);
  const auto pr = MniwPrior::weakly_informative(3, 2);
  std::vector<double> s01;
  for (int k = 0; k < 2000; ++k) s01.push_back(fda_posterior_sample(pr, d.covariates(), d.outcomes(), rng).sigma(0, 1));
  const auto m = moments(s01);
  CHECK(std::abs(m.mean - 0.5) < 3 * m.sd);
}

TEST_CASE("chain bookkeeping") {
  ChainConfig c;
  c.iterations = 1000;
  c.burn_in = 100;
  c.thin = 7;
  CHECK(c.retained() == 128);
  int kept = 0;
  for (int i = 0; i < c.iterations; ++i) kept += c.keep(i) ? 1 : 0;
  CHECK(kept == c.retained());
  const auto d = synthetic(30, 0.2, 11);
  Rng rng(12);
  const auto chain = mmrm_mda_chain(d, MniwPrior::weakly_informative(3, 2), c, rng);
  CHECK(static_cast<int>(chain.draws.size()) == 128);
  c.burn_in = 1000;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("MDA and FDA agree on data with dropout and intermittent holes") {
  auto base = synthetic(120, 0.3, 13);
  Eigen::MatrixXd y = base.outcomes();
  for (int i = 0; i < 20; ++i)
    if (!std::isnan(y(i, 2))) y(i, 1) = NA;
  const auto d = LongitudinalDataset::continuous(base.ids(), base.arms(), base.covariates(), y, base.covariate_names());
  REQUIRE(!arrange_monotone(d).intermittent.empty());
  ChainConfig c;
  c.iterations = 12000;
  c.burn_in = 1000;
  const auto pr = MniwPrior::weakly_informative(3, 2);
  Rng r1(14), r2(15);
  const auto mda = mmrm_mda_chain(d, pr, c, r1);
  const auto fda = mmrm_fda_chain(d, pr, c, r2);
  // Compare alpha(2, 0) and Sigma(1, 2) with batch-means standard errors.
  const auto batch = [](const std::vector<double>& v) { return mdatest::batch_moments(v); };
  std::vector<double> am, af, sm, sf;
  for (const auto& s : mda.draws) {
    am.push_back(s.alpha()(2, 0));
    sm.push_back(s.sigma()(1, 2));
  }
  for (const auto& s : fda.draws) {
    af.push_back(s.alpha()(2, 0));
    sf.push_back(s.sigma()(1, 2));
  }
  const auto ma = batch(am), fa = batch(af), ms = batch(sm), fs = batch(sf);
  CHECK(std::abs(ma.mean - fa.mean) < 3 * std::hypot(ma.se, fa.se));
  CHECK(std::abs(ms.mean - fs.mean) < 3 * std::hypot(ms.se, fs.se));
}
