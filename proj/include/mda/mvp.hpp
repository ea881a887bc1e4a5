#pragma once

// Parameter-expanded multivariate probit sampler for binary and ordinal
// longitudinal outcomes. The expanded model has latent y_ij = sqrt(d_j) y°_ij
// with covariance Sigma = D^{1/2} R D^{1/2}; the identified (restricted)
// quantities are R, alpha° and c°.

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "mda/dataset.hpp"
#include "mda/mmrm.hpp"
#include "mda/random.hpp"

namespace mda {

enum class CutoffPriorKind { Normal, Flat };

struct MvpPrior {
  double nu0 = 0.0;
  Eigen::MatrixXd M;   // q x q, full rank
  Eigen::MatrixXd B0;  // q x p prior mean of alpha' in the conjugate (proposal) prior; zero by default
  CutoffPriorKind cutoff_kind = CutoffPriorKind::Normal;
  // Restricted-scale prior on (c°_j2 .. c°_j,K-1), per visit.
  std::vector<Eigen::VectorXd> cutoff_mean;
  std::vector<Eigen::MatrixXd> cutoff_cov;
  /// Permits a rank-deficient M (proposal priors of the Metropolis samplers).
  bool allow_flat_covariates = false;

  void validate(int p, int q, int categories) const;
  /// Conjugate MNIW(nu0, I, B0, M) prior used for (theta_j, gamma_j).
  MniwPrior mniw(int p) const;

  /// nu0 = p + 1 (marginally uniform correlations), M = m I, cutoffs N(0, 100 I).
  static MvpPrior standard(int p, int q, int categories, double m = 0.01);
};

/// Expanded-scale state. cutoffs(j, k-1) = c_jk for k = 1..K-1; column 0 is 0.
struct MvpState {
  SeqRegState seq;
  Eigen::MatrixXd cutoffs;
  /// n x p latent outcomes on the expanded scale; NaN after each subject's pattern.
  Eigen::MatrixXd latent;

  /// d_j = Sigma_jj.
  Eigen::VectorXd d() const;
  /// Restricted-scale quantities.
  Eigen::MatrixXd correlation() const;
  Eigen::MatrixXd alpha_ring() const;  // p x q
  Eigen::MatrixXd cutoffs_ring() const;
};

struct InitOptions {
  /// Sequential ordered-probit fits instead of the marginal-quantile rule.
  bool probit = false;
};

/// Cutoffs from marginal category frequencies (c°_jk = Phi^{-1}(F_jk) - Phi^{-1}(F_j1)),
/// latent draws from unit-variance normals truncated to the observed category,
/// and R = I. Empty categories are smoothed by adding one half to every count.
MvpState init_latent(const LongitudinalDataset& data, Rng& rng, const InitOptions& options = {});

/// Bounds for c_jk (1-based visit and category): (max y over w = k, min y over w = k+1).
std::pair<double, double> cutoff_bounds(const Eigen::MatrixXd& latent, const LongitudinalDataset& data,
                                        int visit, int k);

/// Cutoff update; no-op for binary outcomes.
void sample_cutoffs(MvpState& state, const LongitudinalDataset& data, const MvpPrior& prior, Rng& rng);

/// One decorrelated Gibbs sweep of every subject's latent vector (visits 1..s_i).
void sample_latent(MvpState& state, const LongitudinalDataset& data, Rng& rng);

/// d*_j = Sigma^{jj} / kappa_j with kappa_j ~ chi^2_nu0.
Eigen::VectorXd px_rescale_factors(const MvpState& state, double nu0, Rng& rng);

/// Moves to expansion d_new = d * dstar: scales latents, alpha~, beta, cutoffs
/// and gamma while leaving R, alpha° and c° unchanged.
void apply_px_transform(MvpState& state, const Eigen::VectorXd& dstar);

/// Shared per-dataset sampler context.
struct MvpContext {
  const LongitudinalDataset* data = nullptr;
  MvpPrior prior;
  PriorDecomposition decomposition;
  MonotoneArrangement arrangement;
  GramCache cache;

  MvpContext(const LongitudinalDataset& data, MvpPrior prior);
  NgPosteriorSet posterior(const MvpState& state) const;
};

/// Step 1 of an iteration: update state.seq given the latents.
using ParameterStep = std::function<void(MvpState&, const MvpContext&, Rng&)>;

/// Conjugate Gibbs draw of every (theta_j, gamma_j).
ParameterStep gibbs_parameter_step(SamplingMode mode = SamplingMode::Joint);

/// Parameters, cutoffs, latents, then the expansion move.
void mvp_gibbs_iteration(MvpState& state, const MvpContext& context, Rng& rng,
                         const ParameterStep& step = gibbs_parameter_step());

struct MvpDraw {
  Eigen::MatrixXd R;
  Eigen::MatrixXd alpha_ring;    // p x q
  Eigen::MatrixXd cutoffs_ring;  // p x (K-1)
  SeqRegState seq;               // expanded scale
  Eigen::VectorXd d;
};

MvpDraw restricted_draw(const MvpState& state);

struct MvpChain {
  std::vector<MvpDraw> draws;
  /// Restricted-scale latent matrices at the requested retained indices.
  std::map<int, Eigen::MatrixXd> latent_snapshots;
};

MvpChain mvp_chain(const LongitudinalDataset& data, const MvpPrior& prior, const ChainConfig& config,
                   Rng& rng, const ParameterStep& step = gibbs_parameter_step(),
                   const std::vector<int>& snapshot_indices = {}, const InitOptions& init = {});

}  // namespace mda
