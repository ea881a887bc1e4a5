#include "mda/imh.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <set>
#include <string>

#include "mda/errors.hpp"

namespace mda {

namespace {

Error config_error(const std::string& msg) { return Error(ErrorKind::Config, msg); }

double log_det_spd(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// tr(M V' Sigma^{-1} V) with V = alpha - B, using Sigma^{-1} = U' diag(gamma) U.
double quadratic(const Eigen::MatrixXd& alpha_tilde, const Eigen::MatrixXd& U, const Eigen::VectorXd& gamma,
                 const Eigen::MatrixXd& M, const Eigen::MatrixXd& B) {
  const Eigen::MatrixXd v = alpha_tilde - U * B;
  double s = 0.0;
  for (Eigen::Index j = 0; j < v.rows(); ++j) s += gamma(j) * v.row(j).dot(M * v.row(j).transpose());
  return s;
}

bool accept(double log_cand, double log_curr, Rng& rng, ImhStats& stats) {
  if (!std::isfinite(log_cand)) {
    ++stats.nonfinite;
    return false;
  }
  if (!std::isfinite(log_curr)) return true;
  const double diff = log_cand - log_curr;
  if (diff >= 0.0) return true;
  return std::log(rng.uniform()) < diff;
}

}  // namespace

// ---------------------------------------------------------------------------
// Prior weights
// ---------------------------------------------------------------------------

PriorWeight PriorWeight::identity() {
  PriorWeight w;
  w.name = "identity";
  w.log_g = [](const Eigen::MatrixXd&, const Eigen::MatrixXd&) { return 0.0; };
  return w;
}

PriorWeight PriorWeight::det_power(double delta) {
  PriorWeight w;
  w.name = "det_power";
  w.log_g = [delta](const Eigen::MatrixXd& r, const Eigen::MatrixXd&) { return delta * log_det_spd(r); };
  return w;
}

PriorWeight PriorWeight::correlation_beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw config_error("correlation beta weight: shapes must be positive");
  PriorWeight w;
  w.name = "correlation_beta";
  w.log_g = [a, b](const Eigen::MatrixXd& r, const Eigen::MatrixXd&) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < r.rows(); ++j)
      for (Eigen::Index k = j + 1; k < r.cols(); ++k) {
        const double u = 0.5 * (1.0 + r(j, k));
        s += (a - 1.0) * std::log(u) + (b - 1.0) * std::log1p(-u);
      }
    return s;
  };
  return w;
}

// ---------------------------------------------------------------------------
// General prior
// ---------------------------------------------------------------------------

int GeneralPrior::rank() const {
  MniwPrior tmp;
  tmp.M = M;
  return tmp.rank();
}

double GeneralPrior::delta(int categories) const {
  const double q = static_cast<double>(M.rows());
  double d = 0.5 * (q - rank());
  if (cutoff_kind == CutoffPriorKind::Flat && categories >= 3) d += 0.5 * (categories - 2);
  return d;
}

void GeneralPrior::validate(int p, int q, int categories) const {
  if (!g.log_g) throw config_error("general prior: weight function is not set");
  if (B0_ring.size() != 0 && (B0_ring.rows() != q || B0_ring.cols() != p))
    throw config_error("general prior: B0_ring must be q x p");
  if (proposal_mean.size() != 0 && (proposal_mean.rows() != q || proposal_mean.cols() != p))
    throw config_error("general prior: proposal mean must be q x p");
  MniwPrior tmp;
  tmp.A = Eigen::MatrixXd::Identity(p, p);
  tmp.nu0 = nu0;
  tmp.M = M;
  tmp.B0 = B0_ring.size() ? B0_ring : Eigen::MatrixXd::Zero(q, p);
  tmp.validate(p, q);
  proposal(p).validate(p, q, categories);
}

MvpPrior GeneralPrior::proposal(int p) const {
  MvpPrior out;
  out.nu0 = nu0;
  out.M = M;
  out.B0 = proposal_mean.size() ? proposal_mean : Eigen::MatrixXd::Zero(M.rows(), p);
  out.cutoff_kind = cutoff_kind;
  out.cutoff_mean = cutoff_mean;
  out.cutoff_cov = cutoff_cov;
  out.allow_flat_covariates = true;
  return out;
}

GeneralPrior GeneralPrior::standard(int p, int q, int categories, double m) {
  const MvpPrior base = MvpPrior::standard(p, q, categories, m);
  GeneralPrior out;
  out.nu0 = base.nu0;
  out.M = base.M;
  out.B0_ring = Eigen::MatrixXd::Zero(q, p);
  out.cutoff_mean = base.cutoff_mean;
  out.cutoff_cov = base.cutoff_cov;
  out.proposal_mean = Eigen::MatrixXd::Zero(q, p);
  return out;
}

// ---------------------------------------------------------------------------
// phi
// ---------------------------------------------------------------------------

namespace {

double log_phi_parts(const SeqRegState& seq, const Eigen::MatrixXd& cutoffs, const GeneralPrior& prior,
                     int categories, bool with_coefficients) {
  const auto f = seq.ldl();
  const Eigen::VectorXd d = marginal_variances(f.L, seq.gamma);
  const Eigen::VectorXd sd = d.cwiseSqrt();
  const Eigen::MatrixXd sigma = f.recompose();
  const Eigen::MatrixXd r = correlation_from_covariance(sigma);
  const int q = static_cast<int>(prior.M.rows());
  const int p = static_cast<int>(d.size());

  Eigen::MatrixXd alpha_tilde, alpha_ring;
  if (with_coefficients) {
    alpha_tilde = seq.alpha_tilde();
    alpha_ring = sd.cwiseInverse().asDiagonal() * (f.L * alpha_tilde);
  }
  double lp = prior.g.log_g(r, alpha_ring);

  const double sum_log_d = d.array().log().sum();
  lp -= 0.5 * (q - prior.rank()) * sum_log_d;

  if (categories >= 3) {
    const int m = categories - 2;
    if (prior.cutoff_kind == CutoffPriorKind::Flat) {
      lp -= 0.5 * m * sum_log_d;
    } else {
      for (int j = 0; j < p; ++j) {
        const Eigen::VectorXd c = cutoffs.row(j).segment(1, m).transpose();
        // Expanded-scale density N(c; sqrt(d) mu, d V).
        const Eigen::VectorXd z = c / sd(j) - prior.cutoff_mean[static_cast<std::size_t>(j)];
        Eigen::LLT<Eigen::MatrixXd> llt(prior.cutoff_cov[static_cast<std::size_t>(j)]);
        lp -= 0.5 * m * std::log(d(j)) + 0.5 * z.dot(llt.solve(z));
      }
    }
  }

  if (with_coefficients) {
    const Eigen::MatrixXd target = prior.B0_ring.size()
                                       ? Eigen::MatrixXd(sd.asDiagonal() * prior.B0_ring.transpose())
                                       : Eigen::MatrixXd::Zero(p, q);
    const Eigen::MatrixXd proposal = prior.proposal_mean.size() ? Eigen::MatrixXd(prior.proposal_mean.transpose())
                                                                : Eigen::MatrixXd::Zero(p, q);
    if (!target.isZero(0.0) || !proposal.isZero(0.0))
      lp += 0.5 * (quadratic(alpha_tilde, f.U, seq.gamma, prior.M, proposal) -
                   quadratic(alpha_tilde, f.U, seq.gamma, prior.M, target));
  }
  return lp;
}

bool coefficient_free(const GeneralPrior& prior) {
  return !prior.g.uses_coefficients && (prior.B0_ring.size() == 0 || prior.B0_ring.isZero(0.0)) &&
         (prior.proposal_mean.size() == 0 || prior.proposal_mean.isZero(0.0));
}

}  // namespace

double log_phi(const MvpState& state, const GeneralPrior& prior, int categories) {
  return log_phi_parts(state.seq, state.cutoffs, prior, categories, true);
}

// ---------------------------------------------------------------------------
// Updates
// ---------------------------------------------------------------------------

void imh_update_joint(MvpState& state, const GeneralPrior& prior, const MvpContext& context, Rng& rng,
                      ImhStats& stats) {
  const int K = context.data->categories();
  SeqRegState cand = sample_seq_reg(context.posterior(state), context.data->q(), rng, SamplingMode::Joint);
  const double lc = log_phi_parts(cand, state.cutoffs, prior, K, true);
  const double lo = log_phi_parts(state.seq, state.cutoffs, prior, K, true);
  ++stats.proposals;
  if (accept(lc, lo, rng, stats)) {
    state.seq = std::move(cand);
    ++stats.accepted;
  }
}

void imh_update_sequential(MvpState& state, const GeneralPrior& prior, const MvpContext& context, Rng& rng,
                           ImhStats& stats) {
  const int K = context.data->categories();
  const int p = context.data->p();
  if (stats.visit_proposals.size() != static_cast<std::size_t>(p)) {
    stats.visit_proposals.assign(static_cast<std::size_t>(p), 0);
    stats.visit_accepted.assign(static_cast<std::size_t>(p), 0);
  }
  const auto post = context.posterior(state);
  double lo = log_phi_parts(state.seq, state.cutoffs, prior, K, true);
  for (int l = 0; l < p; ++l) {
    const auto idx = static_cast<std::size_t>(l);
    auto draw = normal_gamma_sample(post.chol[idx], post.visits[idx].f, rng);
    SeqRegState cand = state.seq;
    cand.theta[idx] = std::move(draw.theta);
    cand.gamma(l) = draw.gamma;
    const double lc = log_phi_parts(cand, state.cutoffs, prior, K, true);
    ++stats.proposals;
    ++stats.visit_proposals[idx];
    if (accept(lc, lo, rng, stats)) {
      state.seq = std::move(cand);
      lo = lc;
      ++stats.accepted;
      ++stats.visit_accepted[idx];
    }
  }
}

void imh_update_marginal(MvpState& state, const GeneralPrior& prior, const MvpContext& context, Rng& rng,
                         ImhStats& stats) {
  if (!coefficient_free(prior))
    throw Error(ErrorKind::PreconditionViolated,
                "marginal Metropolis update requires alpha°_0 = 0, a zero proposal mean and a weight g "
                "that depends on R only");
  const int K = context.data->categories();
  const int q = context.data->q();
  const int p = context.data->p();
  const auto post = context.posterior(state);
  SeqRegState cand = state.seq;
  for (int j = 0; j < p; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    const auto block = normal_gamma_marginal_block(post.chol[idx], q, post.visits[idx].f, rng);
    cand.theta[idx].tail(j) = block.theta;
    cand.gamma(j) = block.gamma;
  }
  // phi depends on (beta, gamma) only here.
  const double lc = log_phi_parts(cand, state.cutoffs, prior, K, false);
  const double lo = log_phi_parts(state.seq, state.cutoffs, prior, K, false);
  ++stats.proposals;
  if (accept(lc, lo, rng, stats)) {
    state.seq = std::move(cand);
    ++stats.accepted;
  }
  for (int j = 0; j < p; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    const Eigen::VectorXd beta = state.seq.theta[idx].tail(j);
    state.seq.theta[idx].head(q) =
        normal_gamma_conditional_alpha(post.chol[idx], q, beta, state.seq.gamma(j), rng);
  }
}

// ---------------------------------------------------------------------------
// Chain
// ---------------------------------------------------------------------------

ImhChain imh_chain(const LongitudinalDataset& data, const GeneralPrior& prior_in, ImhMode mode,
                   const ChainConfig& config, Rng& rng, const std::vector<int>& snapshot_indices,
                   const InitOptions& init) {
  config.validate();
  GeneralPrior prior = prior_in;
  prior.validate(data.p(), data.q(), data.categories());
  if (mode == ImhMode::Marginal && !coefficient_free(prior))
    throw Error(ErrorKind::PreconditionViolated,
                "marginal Metropolis update requires alpha°_0 = 0, a zero proposal mean and a weight g "
                "that depends on R only");
  auto context = std::make_unique<MvpContext>(data, prior.proposal(data.p()));
  MvpState state = init_latent(data, rng, init);
  const std::set<int> wanted(snapshot_indices.begin(), snapshot_indices.end());

  ImhChain out;
  auto& stats = out.stats;
  const ParameterStep step = [&](MvpState& s, const MvpContext& ctx, Rng& r) {
    switch (mode) {
      case ImhMode::Joint: imh_update_joint(s, prior, ctx, r, stats); break;
      case ImhMode::Sequential: imh_update_sequential(s, prior, ctx, r, stats); break;
      case ImhMode::Marginal: imh_update_marginal(s, prior, ctx, r, stats); break;
    }
  };

  Eigen::MatrixXd alpha_sum = Eigen::MatrixXd::Zero(data.p(), data.q());
  out.chain.draws.reserve(static_cast<std::size_t>(config.retained()));
  for (int it = 0; it < config.iterations; ++it) {
    if (it == prior.recenter_at && it > 0) {
      prior.proposal_mean = (alpha_sum / it).transpose();
      context = std::make_unique<MvpContext>(data, prior.proposal(data.p()));
    }
    mvp_gibbs_iteration(state, *context, rng, step);
    if (prior.recenter_at > it) alpha_sum += state.seq.alpha();
    if (!config.keep(it)) continue;
    const int index = static_cast<int>(out.chain.draws.size());
    out.chain.draws.push_back(restricted_draw(state));
    if (wanted.count(index)) {
      const Eigen::VectorXd inv_sd = out.chain.draws.back().d.cwiseSqrt().cwiseInverse();
      out.chain.latent_snapshots.emplace(index, state.latent * inv_sd.asDiagonal());
    }
  }
  return out;
}

}  // namespace mda
