#include "mda/mmrm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "mda/errors.hpp"

namespace mda {

namespace {

Error config_error(const std::string& msg) { return Error(ErrorKind::Config, msg); }

bool is_psd(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() >= -1e-10 * scale;
}

}  // namespace

// ---------------------------------------------------------------------------
// Prior
// ---------------------------------------------------------------------------

int MniwPrior::rank() const {
  if (M.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  const double largest = es.eigenvalues().cwiseAbs().maxCoeff();
  if (largest == 0.0) return 0;
  // Relative tolerance: M = 1e-12 I is a (very) diffuse proper prior, not a flat one.
  return static_cast<int>((es.eigenvalues().array() > 1e-10 * largest).count());
}

std::vector<int> MniwPrior::flat_covariates() const {
  std::vector<int> flat;
  for (Eigen::Index k = 0; k < M.rows(); ++k)
    if ((M.row(k).array() == 0.0).all() && (M.col(k).array() == 0.0).all())
      flat.push_back(static_cast<int>(k));
  return flat;
}

void MniwPrior::validate(int p, int q) const {
  if (A.rows() != p || A.cols() != p)
    throw config_error("prior: A must be " + std::to_string(p) + "x" + std::to_string(p));
  if (M.rows() != q || M.cols() != q)
    throw config_error("prior: M must be " + std::to_string(q) + "x" + std::to_string(q));
  if (B0.rows() != q || B0.cols() != p)
    throw config_error("prior: B0 must be " + std::to_string(q) + "x" + std::to_string(p));
  if (!std::isfinite(nu0) || nu0 < 0.0) throw config_error("prior: nu0 must be finite and >= 0");
  if (!A.allFinite() || !M.allFinite() || !B0.allFinite())
    throw config_error("prior: A, M and B0 must be finite");
  if (!is_symmetric(A, 1e-12) || !is_psd(A)) throw config_error("prior: A must be symmetric PSD");
  if (!is_symmetric(M, 1e-12) || !is_psd(M)) throw config_error("prior: M must be symmetric PSD");
  for (int k : flat_covariates())
    if (!(B0.row(k).array() == 0.0).all())
      throw config_error("prior: covariate " + std::to_string(k + 1) +
                         " has a flat prior (zero row of M), so its B0 row must be zero");
}

MniwPrior MniwPrior::weakly_informative(int p, int q, double m) {
  MniwPrior prior;
  prior.A = Eigen::MatrixXd::Identity(p, p);
  prior.nu0 = p + 1;
  prior.B0 = Eigen::MatrixXd::Zero(q, p);
  prior.M = m * Eigen::MatrixXd::Identity(q, q);
  return prior;
}

MniwPrior MniwPrior::jeffreys_flat(int p, int q) {
  MniwPrior prior;
  prior.A = Eigen::MatrixXd::Zero(p, p);
  prior.nu0 = 0.0;
  prior.B0 = Eigen::MatrixXd::Zero(q, p);
  prior.M = Eigen::MatrixXd::Zero(q, q);
  return prior;
}

PriorDecomposition decompose_prior(const MniwPrior& prior, int p, int q) {
  prior.validate(p, q);
  PriorDecomposition out;
  out.p = p;
  out.q = q;
  out.rank = prior.rank();
  out.flat_covariates = prior.flat_covariates();

  Eigen::MatrixXd d0(q + p, q + p);
  const Eigen::MatrixXd mb = prior.M * prior.B0;
  d0.topLeftCorner(q, q) = prior.M;
  d0.topRightCorner(q, p) = mb;
  d0.bottomLeftCorner(p, q) = mb.transpose();
  d0.bottomRightCorner(p, p) = prior.B0.transpose() * mb + prior.A;
  d0 = (0.5 * (d0 + d0.transpose())).eval();

  for (int j = 1; j <= p; ++j) {
    NormalGammaParams ng;
    ng.f = prior.nu0 + j - p - (q - out.rank);
    ng.D = d0.topLeftCorner(q + j, q + j);
    out.visits.push_back(std::move(ng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequential-regression state
// ---------------------------------------------------------------------------

Eigen::MatrixXd SeqRegState::U() const {
  const int np = p();
  const int nq = q();
  Eigen::MatrixXd u = Eigen::MatrixXd::Identity(np, np);
  for (int j = 1; j < np; ++j) u.row(j).head(j) = -theta[static_cast<std::size_t>(j)].segment(nq, j).transpose();
  return u;
}

LdlFactors<double> SeqRegState::ldl() const {
  LdlFactors<double> f;
  f.U = U();
  f.L = unit_lower_inverse(f.U);
  f.lambda = gamma.cwiseInverse();
  return f;
}

Eigen::MatrixXd SeqRegState::alpha_tilde() const {
  Eigen::MatrixXd at(p(), q());
  for (int j = 0; j < p(); ++j) at.row(j) = theta[static_cast<std::size_t>(j)].head(q()).transpose();
  return at;
}

Eigen::MatrixXd SeqRegState::alpha() const {
  return U().triangularView<Eigen::UnitLower>().solve(alpha_tilde());
}

Eigen::MatrixXd SeqRegState::sigma() const { return ldl().recompose(); }

SeqRegState SeqRegState::from_alpha_sigma(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& sigma) {
  const auto f = ldl_decompose(sigma);
  const Eigen::MatrixXd at = f.U * alpha;
  const int p = static_cast<int>(alpha.rows());
  const int q = static_cast<int>(alpha.cols());
  SeqRegState s;
  s.gamma = f.gamma();
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd th(q + j);
    th.head(q) = at.row(j).transpose();
    th.tail(j) = -f.U.row(j).head(j).transpose();
    s.theta.push_back(std::move(th));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Posterior
// ---------------------------------------------------------------------------

GramCache::GramCache(const LongitudinalDataset& data, const MonotoneArrangement& arrangement,
                     bool all_variable)
    : data_(&data), q_(data.q()), p_(data.p()) {
  const int dim = q_ + p_;
  fixed_.assign(static_cast<std::size_t>(p_), Eigen::MatrixXd::Zero(dim, dim));
  variable_.assign(static_cast<std::size_t>(p_), {});
  std::vector<bool> has_intermittent(static_cast<std::size_t>(data.n()), false);
  for (const auto& cell : arrangement.intermittent) has_intermittent[static_cast<std::size_t>(cell.subject)] = true;
  Eigen::VectorXd z(dim);
  for (int i : arrangement.order) {
    const int s = data.pattern(i);
    if (s == 0) continue;
    if (all_variable || has_intermittent[static_cast<std::size_t>(i)]) {
      variable_[static_cast<std::size_t>(s - 1)].push_back(i);
      continue;
    }
    z.setZero();
    z.head(q_) = data.covariates().row(i).transpose();
    z.segment(q_, s) = data.outcomes().row(i).head(s).transpose();
    fixed_[static_cast<std::size_t>(s - 1)].selfadjointView<Eigen::Lower>().rankUpdate(z);
  }
}

std::vector<Eigen::MatrixXd> GramCache::cumulative(const Eigen::MatrixXd& filled) const {
  const int dim = q_ + p_;
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(p_));
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd z(dim);
  for (int s = p_; s >= 1; --s) {
    acc += fixed_[static_cast<std::size_t>(s - 1)];
    for (int i : variable_[static_cast<std::size_t>(s - 1)]) {
      z.setZero();
      z.head(q_) = data_->covariates().row(i).transpose();
      z.segment(q_, s) = filled.row(i).head(s).transpose();
      acc.selfadjointView<Eigen::Lower>().rankUpdate(z);
    }
    Eigen::MatrixXd full = acc.selfadjointView<Eigen::Lower>();
    out[static_cast<std::size_t>(s - 1)] = full.topLeftCorner(q_ + s, q_ + s);
  }
  return out;
}

NgPosteriorSet mda_posterior(const PriorDecomposition& prior, const GramCache& cache,
                             const std::vector<int>& counts, const Eigen::MatrixXd& filled,
                             const PosteriorOptions& options) {
  const auto grams = cache.cumulative(filled);
  NgPosteriorSet post;
  for (int j = 1; j <= prior.p; ++j) {
    const auto& pj = prior.visits[static_cast<std::size_t>(j - 1)];
    NormalGammaParams ng;
    ng.f = counts[static_cast<std::size_t>(j - 1)] + pj.f;
    ng.D = pj.D + grams[static_cast<std::size_t>(j - 1)];
    if (!(ng.f > 0.0))
      throw ImproperPosterior(j, "improper posterior at visit " + std::to_string(j) + ": df f_j = " +
                                     format_double(ng.f) + " <= 0 (n_j = " +
                                     std::to_string(counts[static_cast<std::size_t>(j - 1)]) +
                                     "); use a more informative prior");
    if (options.ridge) {
      ng.D.diagonal().array() += 1e-8 * ng.D.trace() / static_cast<double>(ng.D.rows());
      post.ridge_applied = true;
    }
    try {
      post.chol.push_back(checked_cholesky(ng.D, ErrorKind::SingularCholesky));
    } catch (const Error&) {
      throw ImproperPosterior(j, "improper posterior at visit " + std::to_string(j) +
                                     ": precision matrix D_j is rank deficient (collinear covariates "
                                     "under a flat prior?); use a proper prior on the coefficients or "
                                     "set ridge = true");
    }
    post.visits.push_back(std::move(ng));
  }
  return post;
}

NgPosteriorSet mda_posterior(const PriorDecomposition& prior, const LongitudinalDataset& data,
                             const MonotoneArrangement& arrangement, const Eigen::MatrixXd& filled,
                             const PosteriorOptions& options) {
  const GramCache cache(data, arrangement, true);
  return mda_posterior(prior, cache, arrangement.counts, filled, options);
}

SeqRegState sample_seq_reg(const NgPosteriorSet& posteriors, int q, Rng& rng, SamplingMode mode) {
  SeqRegState s;
  const auto p = posteriors.visits.size();
  s.gamma.resize(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) {
    const double f = posteriors.visits[j].f;
    if (mode == SamplingMode::Joint) {
      auto d = normal_gamma_sample(posteriors.chol[j], f, rng);
      s.gamma(static_cast<Eigen::Index>(j)) = d.gamma;
      s.theta.push_back(std::move(d.theta));
    } else {
      const auto d = normal_gamma_sample_marginal(posteriors.chol[j], f, q, rng);
      s.gamma(static_cast<Eigen::Index>(j)) = d.gamma;
      s.theta.push_back(d.theta());
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Imputation of intermittent cells
// ---------------------------------------------------------------------------

void impute_subject_missing(const Eigen::VectorXd& mean, const Eigen::MatrixXd& sigma,
                            const std::vector<int>& missing, const std::vector<int>& observed,
                            Eigen::MatrixXd& filled, int subject, Rng& rng) {
  if (missing.empty()) return;
  Eigen::VectorXd values(static_cast<Eigen::Index>(observed.size()));
  for (std::size_t k = 0; k < observed.size(); ++k)
    values(static_cast<Eigen::Index>(k)) = filled(subject, observed[k]);
  const auto cond = conditional_normal(mean, sigma, missing, observed, values);
  const Eigen::MatrixXd chol = checked_cholesky(cond.cov, ErrorKind::NotPositiveDefinite);
  Eigen::VectorXd e(static_cast<Eigen::Index>(missing.size()));
  for (Eigen::Index k = 0; k < e.size(); ++k) e(k) = rng.normal();
  const Eigen::VectorXd draw = cond.mean + chol * e;
  for (std::size_t k = 0; k < missing.size(); ++k) filled(subject, missing[k]) = draw(static_cast<Eigen::Index>(k));
}

void impute_intermittent(const SeqRegState& state, const LongitudinalDataset& data,
                         const MonotoneArrangement& arrangement, Eigen::MatrixXd& filled, Rng& rng) {
  if (arrangement.intermittent.empty()) return;
  const Eigen::MatrixXd alpha = state.alpha();
  const Eigen::MatrixXd sigma = state.sigma();
  std::size_t k = 0;
  const auto& cells = arrangement.intermittent;
  while (k < cells.size()) {
    const int i = cells[k].subject;
    std::vector<int> missing;
    while (k < cells.size() && cells[k].subject == i) missing.push_back(cells[k++].visit);
    const int s = data.pattern(i);
    std::vector<int> observed;
    for (int j = 0; j < s; ++j)
      if (data.is_observed(i, j)) observed.push_back(j);
    const Eigen::VectorXd mean = alpha.topRows(s) * data.covariates().row(i).transpose();
    impute_subject_missing(mean, sigma.topLeftCorner(s, s), missing, observed, filled, i, rng);
  }
}

// ---------------------------------------------------------------------------
// Full data augmentation
// ---------------------------------------------------------------------------

FdaDraw fda_posterior_sample(const MniwPrior& prior, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             Rng& rng) {
  const auto n = x.rows();
  const auto q = x.cols();
  const auto p = y.cols();
  const Eigen::MatrixXd omega = x.transpose() * x + prior.M;
  Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success)
    throw ImproperPosterior(0, "improper posterior: X'X + M is singular");
  const Eigen::MatrixXd gpos_t = llt.solve(x.transpose() * y + prior.M * prior.B0);  // q x p
  const Eigen::MatrixXd gpos = gpos_t.transpose();
  Eigen::MatrixXd a_pos = prior.A + y.transpose() * y + prior.B0.transpose() * prior.M * prior.B0 -
                          gpos * omega * gpos_t;
  a_pos = (0.5 * (a_pos + a_pos.transpose())).eval();
  const double df = static_cast<double>(n) + prior.nu0 + prior.rank() - static_cast<double>(q);
  if (!(df > static_cast<double>(p) - 1.0))
    throw ImproperPosterior(0, "improper posterior: inverse-Wishart df " + format_double(df) +
                                   " must exceed p - 1");
  FdaDraw out;
  out.sigma = inverse_wishart_sample(df, a_pos, rng);
  const Eigen::MatrixXd ls = checked_cholesky(out.sigma, ErrorKind::NotPositiveDefinite);
  Eigen::MatrixXd e(p, q);
  for (Eigen::Index c = 0; c < q; ++c)
    for (Eigen::Index r = 0; r < p; ++r) e(r, c) = rng.normal();
  // alpha = gamma_pos + L_Sigma E C^{-1}, Omega = C C'.
  const Eigen::MatrixXd c = llt.matrixL();
  const Eigen::MatrixXd e_cinv =
      c.transpose().triangularView<Eigen::Upper>().solve((ls * e).transpose()).transpose();
  out.alpha = gpos + e_cinv;
  return out;
}

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

void ChainConfig::validate() const {
  if (iterations <= 0) throw config_error("chain: iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations)
    throw config_error("chain: burn_in must satisfy 0 <= burn_in < iterations");
  if (thin < 1) throw config_error("chain: thin must be >= 1");
}

Eigen::MatrixXd initial_fill(const LongitudinalDataset& data, bool all_missing) {
  const int n = data.n();
  const int p = data.p();
  const Eigen::MatrixXd& x = data.covariates();
  Eigen::MatrixXd filled = data.outcomes();
  // Covariate-only least-squares fits, computed lazily per visit.
  std::map<int, Eigen::VectorXd> fits;
  const auto predict = [&](int i, int j) {
    auto it = fits.find(j);
    if (it == fits.end()) {
      std::vector<int> rows;
      for (int r = 0; r < n; ++r)
        if (data.is_observed(r, j)) rows.push_back(r);
      Eigen::VectorXd coef = Eigen::VectorXd::Zero(data.q());
      if (!rows.empty()) {
        const Eigen::MatrixXd xs = x(rows, Eigen::all);
        const Eigen::VectorXd ys = data.outcomes()(rows, j);
        coef = xs.colPivHouseholderQr().solve(ys);
      }
      it = fits.emplace(j, coef).first;
    }
    return x.row(i).dot(it->second);
  };
  for (int i = 0; i < n; ++i) {
    const int limit = all_missing ? p : std::max(0, data.pattern(i) - 1);
    for (int j = 0; j < limit; ++j) {
      if (data.is_observed(i, j)) continue;
      filled(i, j) = j > 0 ? filled(i, j - 1) : predict(i, j);
    }
  }
  return filled;
}

namespace {

Eigen::VectorXd gather_cells(const std::vector<Cell>& cells, const Eigen::MatrixXd& filled) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t k = 0; k < cells.size(); ++k)
    v(static_cast<Eigen::Index>(k)) = filled(cells[k].subject, cells[k].visit);
  return v;
}

}  // namespace

MmrmChain mmrm_mda_chain(const LongitudinalDataset& data, const MniwPrior& prior,
                         const ChainConfig& config, Rng& rng) {
  config.validate();
  if (data.kind() != OutcomeKind::Continuous)
    throw config_error("the MMRM sampler requires continuous outcomes");
  MmrmChain chain;
  chain.arrangement = arrange_monotone(data);
  const auto decomp = decompose_prior(prior, data.p(), data.q());
  const GramCache cache(data, chain.arrangement);
  Eigen::MatrixXd filled = initial_fill(data, false);
  const PosteriorOptions options{config.ridge};
  chain.draws.reserve(static_cast<std::size_t>(config.retained()));
  for (int it = 0; it < config.iterations; ++it) {
    const auto post = mda_posterior(decomp, cache, chain.arrangement.counts, filled, options);
    chain.ridge_applied = chain.ridge_applied || post.ridge_applied;
    auto state = sample_seq_reg(post, data.q(), rng, config.mode);
    impute_intermittent(state, data, chain.arrangement, filled, rng);
    if (config.keep(it)) {
      chain.intermittent.push_back(gather_cells(chain.arrangement.intermittent, filled));
      chain.draws.push_back(std::move(state));
    }
  }
  return chain;
}

MmrmChain mmrm_fda_chain(const LongitudinalDataset& data, const MniwPrior& prior,
                         const ChainConfig& config, Rng& rng) {
  config.validate();
  if (data.kind() != OutcomeKind::Continuous)
    throw config_error("the FDA sampler requires continuous outcomes");
  prior.validate(data.p(), data.q());
  MmrmChain chain;
  chain.arrangement = arrange_monotone(data);
  Eigen::MatrixXd filled = initial_fill(data, true);

  struct Pattern {
    int subject;
    std::vector<int> missing, observed;
  };
  std::vector<Pattern> incomplete;
  for (int i = 0; i < data.n(); ++i) {
    Pattern pat{i, {}, {}};
    for (int j = 0; j < data.p(); ++j) (data.is_observed(i, j) ? pat.observed : pat.missing).push_back(j);
    if (!pat.missing.empty()) incomplete.push_back(std::move(pat));
  }

  chain.draws.reserve(static_cast<std::size_t>(config.retained()));
  for (int it = 0; it < config.iterations; ++it) {
    const auto draw = fda_posterior_sample(prior, data.covariates(), filled, rng);
    for (const auto& pat : incomplete) {
      const Eigen::VectorXd mean = draw.alpha * data.covariates().row(pat.subject).transpose();
      impute_subject_missing(mean, draw.sigma, pat.missing, pat.observed, filled, pat.subject, rng);
    }
    if (config.keep(it)) {
      chain.intermittent.push_back(gather_cells(chain.arrangement.intermittent, filled));
      chain.draws.push_back(SeqRegState::from_alpha_sigma(draw.alpha, draw.sigma));
    }
  }
  return chain;
}

}  // namespace mda
