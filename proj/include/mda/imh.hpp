#pragma once

// Independence Metropolis-Hastings for the probit model under priors that are
// not conjugate to the expanded-scale sampler. Candidates come from the
// conjugate MDA draw (the proposal) and are corrected by the weight phi.

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "mda/mvp.hpp"

namespace mda {

/// Nonnegative prior weight g(R, alpha°), supplied in the log domain.
struct PriorWeight {
  std::string name = "identity";
  std::function<double(const Eigen::MatrixXd& R, const Eigen::MatrixXd& alpha_ring)> log_g;
  /// False when log_g ignores alpha° (required by the marginal update).
  bool uses_coefficients = false;

  static PriorWeight identity();
  /// g = |R|^delta.
  static PriorWeight det_power(double delta);
  /// g = prod_{j<k} Beta((1 + r_jk) / 2; a, b).
  static PriorWeight correlation_beta(double a, double b);
};

struct GeneralPrior {
  PriorWeight g = PriorWeight::identity();
  double nu0 = 0.0;
  Eigen::MatrixXd M;         // q x q, rank r <= q
  Eigen::MatrixXd B0_ring;   // q x p restricted-scale prior mean of alpha°'
  CutoffPriorKind cutoff_kind = CutoffPriorKind::Normal;
  std::vector<Eigen::VectorXd> cutoff_mean;  // restricted scale, per visit
  std::vector<Eigen::MatrixXd> cutoff_cov;
  Eigen::MatrixXd proposal_mean;  // q x p expanded-scale mean of the proposal (alpha*_0'); zero by default
  /// Iteration at which the proposal mean is moved to the running posterior mean; -1 = never.
  int recenter_at = -1;

  int rank() const;
  /// Exponent Delta: (q - r)/2, plus (K - 2)/2 under flat cutoff priors.
  double delta(int categories) const;
  void validate(int p, int q, int categories) const;
  /// Conjugate prior generating the candidates.
  MvpPrior proposal(int p) const;

  /// g = 1, alpha°_0 = 0, nu0 = p + 1, M = m I, cutoffs N(0, 100 I).
  static GeneralPrior standard(int p, int q, int categories, double m = 0.01);
};

/// log phi(R, alpha°, D) for the state's parameters and cutoffs. Target over
/// proposal density ratio on the expanded scale:
///   log g + (q - r)/2 * sum log(1/d_j) + log p(c | d)
///   + [Q(alpha*_0) - Q(D^{1/2} alpha°_0)] / 2,
/// with Q(B) = tr(M (alpha - B)' Sigma^{-1} (alpha - B)) and p(c | d) the
/// expanded-scale cutoff prior (d^{-(K-2)/2} under a flat prior). Infinite or
/// NaN results are returned as is.
double log_phi(const MvpState& state, const GeneralPrior& prior, int categories);

struct ImhStats {
  long proposals = 0;
  long accepted = 0;
  long nonfinite = 0;
  std::vector<long> visit_proposals;  // sequential mode
  std::vector<long> visit_accepted;

  double rate() const { return proposals ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0; }
};

enum class ImhMode { Joint, Sequential, Marginal };

/// All (theta_j, gamma_j) proposed at once; accepted or rejected together.
void imh_update_joint(MvpState& state, const GeneralPrior& prior, const MvpContext& context, Rng& rng,
                      ImhStats& stats);
/// One (theta_l, gamma_l) at a time, others held at their current values.
void imh_update_sequential(MvpState& state, const GeneralPrior& prior, const MvpContext& context, Rng& rng,
                           ImhStats& stats);
/// (beta_j, gamma_j) proposed from their marginal, accepted on g(R) and d
/// alone, then alpha~ drawn exactly given the accepted values. Requires
/// alpha°_0 = 0, a zero proposal mean and a g that ignores alpha°.
void imh_update_marginal(MvpState& state, const GeneralPrior& prior, const MvpContext& context, Rng& rng,
                         ImhStats& stats);

struct ImhChain {
  MvpChain chain;
  ImhStats stats;
};

ImhChain imh_chain(const LongitudinalDataset& data, const GeneralPrior& prior, ImhMode mode,
                   const ChainConfig& config, Rng& rng, const std::vector<int>& snapshot_indices = {},
                   const InitOptions& init = {});

}  // namespace mda
