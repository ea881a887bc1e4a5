#include "mda/mvp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "mda/errors.hpp"

namespace mda {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Error config_error(const std::string& msg) { return Error(ErrorKind::Config, msg); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// Latent interval for category k (1-based) at visit row `j` of the cutoff matrix.
std::pair<double, double> category_interval(const Eigen::MatrixXd& cutoffs, int j, int k) {
  const int kmax = static_cast<int>(cutoffs.cols()) + 1;
  const double lo = k <= 1 ? -kInf : cutoffs(j, k - 2);
  const double hi = k >= kmax ? kInf : cutoffs(j, k - 1);
  return {lo, hi};
}

}  // namespace

// ---------------------------------------------------------------------------
// Prior
// ---------------------------------------------------------------------------

void MvpPrior::validate(int p, int q, int categories) const {
  if (!(nu0 > p - 1)) throw config_error("mvp prior: nu0 must exceed p - 1 = " + std::to_string(p - 1));
  if (M.rows() != q || M.cols() != q) throw config_error("mvp prior: M must be q x q");
  if (B0.size() != 0 && (B0.rows() != q || B0.cols() != p))
    throw config_error("mvp prior: B0 must be q x p");
  MniwPrior tmp = mniw(p);
  tmp.validate(p, q);
  if (!allow_flat_covariates && tmp.rank() != q) throw config_error("mvp prior: M must have full rank (no flat covariates)");
  if (categories >= 3 && cutoff_kind == CutoffPriorKind::Normal) {
    if (cutoff_mean.size() != static_cast<std::size_t>(p) || cutoff_cov.size() != static_cast<std::size_t>(p))
      throw config_error("mvp prior: one cutoff mean and covariance per visit are required");
    for (int j = 0; j < p; ++j) {
      const auto& mu = cutoff_mean[static_cast<std::size_t>(j)];
      const auto& v = cutoff_cov[static_cast<std::size_t>(j)];
      if (mu.size() != categories - 2 || v.rows() != categories - 2 || v.cols() != categories - 2)
        throw config_error("mvp prior: cutoff prior at visit " + std::to_string(j + 1) +
                           " must have dimension K - 2 = " + std::to_string(categories - 2));
      Eigen::LLT<Eigen::MatrixXd> llt(v);
      if (llt.info() != Eigen::Success || !is_symmetric(v, 1e-12))
        throw config_error("mvp prior: cutoff covariance at visit " + std::to_string(j + 1) +
                           " must be symmetric positive definite");
    }
  }
}

MniwPrior MvpPrior::mniw(int p) const {
  MniwPrior out;
  out.A = Eigen::MatrixXd::Identity(p, p);
  out.nu0 = nu0;
  out.M = M;
  out.B0 = B0.size() == 0 ? Eigen::MatrixXd::Zero(M.rows(), p) : B0;
  return out;
}

MvpPrior MvpPrior::standard(int p, int q, int categories, double m) {
  MvpPrior prior;
  prior.nu0 = p + 1;
  prior.M = m * Eigen::MatrixXd::Identity(q, q);
  prior.B0 = Eigen::MatrixXd::Zero(q, p);
  if (categories >= 3) {
    for (int j = 0; j < p; ++j) {
      prior.cutoff_mean.push_back(Eigen::VectorXd::Zero(categories - 2));
      prior.cutoff_cov.push_back(100.0 * Eigen::MatrixXd::Identity(categories - 2, categories - 2));
    }
  }
  return prior;
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

Eigen::VectorXd MvpState::d() const {
  const auto f = seq.ldl();
  return marginal_variances(f.L, seq.gamma);
}

Eigen::MatrixXd MvpState::correlation() const { return correlation_from_covariance(seq.sigma()); }

Eigen::MatrixXd MvpState::alpha_ring() const {
  return d().cwiseSqrt().cwiseInverse().asDiagonal() * seq.alpha();
}

Eigen::MatrixXd MvpState::cutoffs_ring() const {
  return d().cwiseSqrt().cwiseInverse().asDiagonal() * cutoffs;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace {

// Ordered probit of w on z: P(w <= k) = Phi(tau_k - z'b), tau_1 = 0.
struct OrderedProbit {
  Eigen::VectorXd b;
  Eigen::VectorXd tau;  // tau_1 .. tau_{K-1}
};

double probit_loglik(const Eigen::MatrixXd& z, const std::vector<int>& w, int K, const Eigen::VectorXd& b,
                     const Eigen::VectorXd& tau, double penalty, Eigen::VectorXd* grad) {
  const auto nb = b.size();
  const auto nt = static_cast<Eigen::Index>(K - 2);
  if (grad) grad->setZero(nb + nt);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int k = w[static_cast<std::size_t>(i)];
    const double eta = z.row(i).dot(b);
    const double u = k == K ? kInf : tau(k - 1) - eta;
    const double l = k == 1 ? -kInf : tau(k - 2) - eta;
    // Difference of tails taken on the side that avoids cancellation.
    double prob = l > 0.0 ? normal_upper_tail(l) - normal_upper_tail(u) : normal_cdf(u) - normal_cdf(l);
    prob = std::max(prob, 1e-300);
    ll += std::log(prob);
    if (grad) {
      const double pu = std::isfinite(u) ? normal_pdf(u) : 0.0;
      const double pl = std::isfinite(l) ? normal_pdf(l) : 0.0;
      grad->head(nb) -= (pu - pl) / prob * z.row(i).transpose();
      if (k <= K - 1 && k >= 2) (*grad)(nb + k - 2) += pu / prob;
      if (k - 1 >= 2) (*grad)(nb + k - 3) -= pl / prob;
    }
  }
  // Small ridge on the slopes guards against separation.
  ll -= 0.5 * penalty * b.tail(nb - 1).squaredNorm();
  if (grad) grad->segment(1, nb - 1) -= penalty * b.tail(nb - 1);
  return ll;
}

OrderedProbit fit_ordered_probit(const Eigen::MatrixXd& z, const std::vector<int>& w, int K,
                                 const Eigen::VectorXd& tau0, double intercept0) {
  const auto nb = z.cols();
  const auto nt = static_cast<Eigen::Index>(K - 2);
  Eigen::VectorXd par = Eigen::VectorXd::Zero(nb + nt);
  par(0) = intercept0;
  par.tail(nt) = tau0.segment(1, nt);
  const double penalty = 1e-2;
  const auto unpack = [&](const Eigen::VectorXd& v, Eigen::VectorXd& b, Eigen::VectorXd& tau) {
    b = v.head(nb);
    tau.resize(K - 1);
    tau(0) = 0.0;
    tau.tail(nt) = v.tail(nt);
  };
  const auto ordered = [&](const Eigen::VectorXd& v) {
    double prev = 0.0;
    for (Eigen::Index t = 0; t < nt; ++t) {
      if (!(v(nb + t) > prev)) return false;
      prev = v(nb + t);
    }
    return true;
  };
  Eigen::VectorXd b, tau, grad;
  unpack(par, b, tau);
  double ll = probit_loglik(z, w, K, b, tau, penalty, &grad);
  for (int iter = 0; iter < 50; ++iter) {
    // Hessian by central differences of the analytic gradient.
    const auto dim = par.size();
    Eigen::MatrixXd h(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c) {
      const double eps = 1e-5 * std::max(1.0, std::abs(par(c)));
      Eigen::VectorXd pp = par, pm = par, gp, gm;
      pp(c) += eps;
      pm(c) -= eps;
      Eigen::VectorXd bp, tp, bm, tm;
      unpack(pp, bp, tp);
      unpack(pm, bm, tm);
      probit_loglik(z, w, K, bp, tp, penalty, &gp);
      probit_loglik(z, w, K, bm, tm, penalty, &gm);
      h.col(c) = (gp - gm) / (2.0 * eps);
    }
    h = (0.5 * (h + h.transpose())).eval();
    Eigen::MatrixXd neg = -h;
    double damping = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(neg);
    while (llt.info() != Eigen::Success && damping < 1e6) {
      damping = damping == 0.0 ? 1e-6 * std::max(1.0, neg.diagonal().cwiseAbs().maxCoeff()) : damping * 10;
      llt.compute(neg + damping * Eigen::MatrixXd::Identity(dim, dim));
    }
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = llt.solve(grad);
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half, scale *= 0.5) {
      const Eigen::VectorXd cand = par + scale * step;
      if (!ordered(cand)) continue;
      Eigen::VectorXd bc, tc, gc;
      unpack(cand, bc, tc);
      const double llc = probit_loglik(z, w, K, bc, tc, penalty, &gc);
      if (std::isfinite(llc) && llc >= ll) {
        const double gain = llc - ll;
        par = cand;
        ll = llc;
        grad = gc;
        improved = gain > 1e-10;
        break;
      }
    }
    if (!improved) break;
  }
  OrderedProbit out;
  unpack(par, out.b, out.tau);
  return out;
}

}  // namespace

MvpState init_latent(const LongitudinalDataset& data, Rng& rng, const InitOptions& options) {
  if (data.kind() != OutcomeKind::Categorical)
    throw config_error("the probit sampler requires categorical outcomes");
  const int n = data.n();
  const int p = data.p();
  const int q = data.q();
  const int K = data.categories();
  const Eigen::MatrixXi counts = data.category_counts();

  MvpState state;
  state.cutoffs = Eigen::MatrixXd::Zero(p, K - 1);
  Eigen::VectorXd means(p);
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd freq = counts.row(j).cast<double>().transpose();
    if ((counts.row(j).array() == 0).any()) freq.array() += 0.5;
    const Eigen::VectorXd cum = freq / freq.sum();
    double acc = 0.0;
    Eigen::VectorXd q_k(K - 1);
    for (int k = 0; k < K - 1; ++k) {
      acc += cum(k);
      q_k(k) = normal_quantile(std::min(acc, 1.0 - 1e-12));
    }
    for (int k = 0; k < K - 1; ++k) state.cutoffs(j, k) = q_k(k) - q_k(0);
    means(j) = -q_k(0);
  }

  // Per-subject latent means; the probit initializer replaces them (and the cutoffs).
  Eigen::MatrixXd mu = means.transpose().replicate(n, 1);
  if (options.probit) {
    Eigen::VectorXi mode(p);
    for (int j = 0; j < p; ++j) {
      Eigen::Index best;
      counts.row(j).maxCoeff(&best);
      mode(j) = static_cast<int>(best) + 1;
    }
    for (int j = 0; j < p; ++j) {
      std::vector<int> rows;
      std::vector<int> w;
      for (int i = 0; i < n; ++i) {
        if (!data.is_observed(i, j)) continue;
        bool complete = true;
        for (int h = 0; h < j; ++h) complete = complete && data.is_observed(i, h);
        if (!complete) continue;
        rows.push_back(i);
        w.push_back(data.category(i, j));
      }
      const auto design = [&](int i) {
        Eigen::VectorXd z(q + j);
        z.head(q) = data.covariates().row(i).transpose();
        for (int h = 0; h < j; ++h) z(q + h) = data.is_observed(i, h) ? data.category(i, h) : mode(h);
        return z;
      };
      if (static_cast<int>(rows.size()) <= q + j + K) continue;  // too few rows to fit; keep quantile rule
      Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), q + j);
      for (std::size_t r = 0; r < rows.size(); ++r) z.row(static_cast<Eigen::Index>(r)) = design(rows[r]).transpose();
      const auto fit = fit_ordered_probit(z, w, K, state.cutoffs.row(j).transpose(), means(j));
      state.cutoffs.row(j) = fit.tau.transpose();
      for (int i = 0; i < n; ++i) mu(i, j) = design(i).dot(fit.b);
    }
  }

  state.latent = Eigen::MatrixXd::Constant(n, p, kNaN);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < data.pattern(i); ++j) {
      if (data.is_observed(i, j)) {
        const auto [lo, hi] = category_interval(state.cutoffs, j, data.category(i, j));
        state.latent(i, j) = univariate_truncated_normal(mu(i, j), 1.0, lo, hi, rng);
      } else {
        state.latent(i, j) = mu(i, j) + rng.normal();
      }
    }
  }

  state.seq.gamma = Eigen::VectorXd::Ones(p);
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd th = Eigen::VectorXd::Zero(q + j);
    th(0) = means(j);
    state.seq.theta.push_back(std::move(th));
  }
  return state;
}

// ---------------------------------------------------------------------------
// Gibbs steps
// ---------------------------------------------------------------------------

std::pair<double, double> cutoff_bounds(const Eigen::MatrixXd& latent, const LongitudinalDataset& data,
                                        int visit, int k) {
  const int j = visit - 1;
  double lo = -kInf;
  double hi = kInf;
  for (int i = 0; i < data.n(); ++i) {
    if (!data.is_observed(i, j)) continue;
    const int w = data.category(i, j);
    if (w == k) lo = std::max(lo, latent(i, j));
    else if (w == k + 1) hi = std::min(hi, latent(i, j));
  }
  return {lo, hi};
}

void sample_cutoffs(MvpState& state, const LongitudinalDataset& data, const MvpPrior& prior, Rng& rng) {
  const int K = data.categories();
  if (K < 3) return;
  const int m = K - 2;
  const Eigen::VectorXd d = state.d();
  for (int j = 0; j < data.p(); ++j) {
    Eigen::VectorXd lo(m), hi(m);
    for (int t = 0; t < m; ++t) {
      const auto [a, b] = cutoff_bounds(state.latent, data, j + 1, t + 2);
      lo(t) = a;
      hi(t) = b;
    }
    lo(0) = std::max(lo(0), 0.0);
    Eigen::VectorXd current = state.cutoffs.row(j).segment(1, m).transpose();
    if (prior.cutoff_kind == CutoffPriorKind::Flat) {
      for (int t = 0; t < m; ++t) {
        const double a = std::max(lo(t), t == 0 ? 0.0 : current(t - 1));
        const double b = std::min(hi(t), t + 1 < m ? current(t + 1) : kInf);
        if (!std::isfinite(b))
          throw ImproperPosterior(j + 1, "flat cutoff prior: cutoff " + std::to_string(t + 2) + " at visit " +
                                             std::to_string(j + 1) +
                                             " has no upper bound (empty higher categories); use a normal "
                                             "cutoff prior");
        current(t) = a + (b - a) * rng.uniform();
      }
    } else {
      const Eigen::VectorXd mean = std::sqrt(d(j)) * prior.cutoff_mean[static_cast<std::size_t>(j)];
      const Eigen::MatrixXd cov = d(j) * prior.cutoff_cov[static_cast<std::size_t>(j)];
      LinearConstraints lc;
      lc.F = Eigen::MatrixXd::Zero(2 * m - 1, m);
      lc.lower.resize(2 * m - 1);
      lc.upper.resize(2 * m - 1);
      for (int t = 0; t < m; ++t) {
        lc.F(t, t) = 1.0;
        lc.lower(t) = lo(t);
        lc.upper(t) = hi(t);
      }
      for (int t = 1; t < m; ++t) {
        lc.F(m + t - 1, t) = 1.0;
        lc.F(m + t - 1, t - 1) = -1.0;
        lc.lower(m + t - 1) = 0.0;
        lc.upper(m + t - 1) = kInf;
      }
      current = truncated_mvn_sample(mean, cov, lc, current, rng, 1);
    }
    state.cutoffs.row(j).segment(1, m) = current.transpose();
  }
}

void sample_latent(MvpState& state, const LongitudinalDataset& data, Rng& rng) {
  const auto f = state.seq.ldl();
  const Eigen::MatrixXd chol_full = f.L * f.lambda.cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd alpha = f.L * state.seq.alpha_tilde();
  for (int i = 0; i < data.n(); ++i) {
    const int s = data.pattern(i);
    if (s == 0) continue;
    const Eigen::VectorXd mean = alpha.topRows(s) * data.covariates().row(i).transpose();
    TruncationBox box = TruncationBox::unbounded(s);
    for (int j = 0; j < s; ++j) {
      if (!data.is_observed(i, j)) continue;
      const auto [lo, hi] = category_interval(state.cutoffs, j, data.category(i, j));
      box.lower(j) = lo;
      box.upper(j) = hi;
    }
    const Eigen::VectorXd current = state.latent.row(i).head(s).transpose();
    state.latent.row(i).head(s) =
        truncated_mvn_sample_chol(mean, chol_full.topLeftCorner(s, s), box, current, rng, 1).transpose();
  }
}

Eigen::VectorXd px_rescale_factors(const MvpState& state, double nu0, Rng& rng) {
  if (!(nu0 > 0.0)) throw Error(ErrorKind::NonpositiveDf, "expansion step: nu0 must be positive");
  const Eigen::VectorXd prec = precision_diagonal(state.seq.U(), state.seq.gamma);
  Eigen::VectorXd dstar(prec.size());
  for (Eigen::Index j = 0; j < prec.size(); ++j) dstar(j) = prec(j) / rng.chi_square(nu0);
  return dstar;
}

void apply_px_transform(MvpState& state, const Eigen::VectorXd& dstar) {
  if (!(dstar.array() > 0.0).all())
    throw Error(ErrorKind::PreconditionViolated, "expansion step: factors must be positive");
  const Eigen::VectorXd sq = dstar.cwiseSqrt();
  const int q = state.seq.q();
  for (int j = 0; j < state.seq.p(); ++j) {
    auto& th = state.seq.theta[static_cast<std::size_t>(j)];
    th.head(q) *= sq(j);
    for (int k = 0; k < j; ++k) th(q + k) *= sq(j) / sq(k);
    state.seq.gamma(j) /= dstar(j);
    state.cutoffs.row(j) *= sq(j);
    state.latent.col(j) *= sq(j);
  }
}

MvpContext::MvpContext(const LongitudinalDataset& d, MvpPrior pr)
    : data(&d),
      prior(std::move(pr)),
      decomposition((prior.validate(d.p(), d.q(), d.categories()), decompose_prior(prior.mniw(d.p()), d.p(), d.q()))),
      arrangement(arrange_monotone(d)),
      cache(d, arrangement, true) {}

NgPosteriorSet MvpContext::posterior(const MvpState& state) const {
  return mda_posterior(decomposition, cache, arrangement.counts, state.latent);
}

ParameterStep gibbs_parameter_step(SamplingMode mode) {
  return [mode](MvpState& state, const MvpContext& ctx, Rng& rng) {
    state.seq = sample_seq_reg(ctx.posterior(state), ctx.data->q(), rng, mode);
  };
}

void mvp_gibbs_iteration(MvpState& state, const MvpContext& context, Rng& rng, const ParameterStep& step) {
  step(state, context, rng);
  sample_cutoffs(state, *context.data, context.prior, rng);
  sample_latent(state, *context.data, rng);
  apply_px_transform(state, px_rescale_factors(state, context.prior.nu0, rng));
}

MvpDraw restricted_draw(const MvpState& state) {
  MvpDraw draw;
  draw.seq = state.seq;
  draw.d = state.d();
  const Eigen::VectorXd inv_sd = draw.d.cwiseSqrt().cwiseInverse();
  draw.R = correlation_from_covariance(state.seq.sigma());
  draw.alpha_ring = inv_sd.asDiagonal() * state.seq.alpha();
  draw.cutoffs_ring = inv_sd.asDiagonal() * state.cutoffs;
  return draw;
}

MvpChain mvp_chain(const LongitudinalDataset& data, const MvpPrior& prior, const ChainConfig& config, Rng& rng,
                   const ParameterStep& step, const std::vector<int>& snapshot_indices,
                   const InitOptions& init) {
  config.validate();
  const MvpContext ctx(data, prior);
  MvpState state = init_latent(data, rng, init);
  const std::set<int> wanted(snapshot_indices.begin(), snapshot_indices.end());
  MvpChain chain;
  chain.draws.reserve(static_cast<std::size_t>(config.retained()));
  for (int it = 0; it < config.iterations; ++it) {
    mvp_gibbs_iteration(state, ctx, rng, step);
    if (!config.keep(it)) continue;
    const int index = static_cast<int>(chain.draws.size());
    chain.draws.push_back(restricted_draw(state));
    if (wanted.count(index)) {
      const Eigen::VectorXd inv_sd = chain.draws.back().d.cwiseSqrt().cwiseInverse();
      chain.latent_snapshots.emplace(index, state.latent * inv_sd.asDiagonal());
    }
  }
  return chain;
}

}  // namespace mda
