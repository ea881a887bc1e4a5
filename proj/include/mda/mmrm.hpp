#pragma once

// Multivariate normal regression with unstructured covariance (MMRM), sampled
// through its sequential-regression factorization under monotone missingness.

#include <Eigen/Dense>

#include <vector>

#include "mda/dataset.hpp"
#include "mda/distributions.hpp"
#include "mda/linalg.hpp"
#include "mda/random.hpp"

namespace mda {

/// Conjugate matrix-normal-inverse-Wishart prior:
///   Sigma ~ IW(A, nu0),  alpha | Sigma ~ MN(B0', Sigma, M^+).
/// Zero rows/columns of M give the matching covariates a flat prior.
struct MniwPrior {
  Eigen::MatrixXd A;   // p x p
  double nu0 = 0.0;
  Eigen::MatrixXd B0;  // q x p, prior mean of alpha'
  Eigen::MatrixXd M;   // q x q column precision

  /// Rank of M at tolerance 1e-10 (number of covariates with a proper prior).
  int rank() const;
  /// Covariate indices whose row and column of M are entirely zero.
  std::vector<int> flat_covariates() const;
  /// Shape, symmetry and semidefiniteness checks; throws Config.
  void validate(int p, int q) const;

  /// nu0 = p + 1, A = I, B0 = 0, M = m I.
  static MniwPrior weakly_informative(int p, int q, double m = 0.01);
  /// Jeffreys prior on Sigma with flat covariates (nu0 = 0, A = 0, M = 0).
  static MniwPrior jeffreys_flat(int p, int q);
};

/// Per-visit normal-gamma priors for (theta_j, gamma_j).
struct PriorDecomposition {
  int p = 0;
  int q = 0;
  int rank = 0;
  std::vector<NormalGammaParams> visits;  // (f_j0, D_j0), j = 1..p
  std::vector<int> flat_covariates;
};

PriorDecomposition decompose_prior(const MniwPrior& prior, int p, int q);

/// (theta_j, gamma_j), theta_j = (alpha~_j1..alpha~_jq, beta_j1..beta_j,j-1).
struct SeqRegState {
  std::vector<Eigen::VectorXd> theta;
  Eigen::VectorXd gamma;

  int p() const { return static_cast<int>(gamma.size()); }
  int q() const { return theta.empty() ? 0 : static_cast<int>(theta[0].size()); }

  /// Unit lower-triangular U with -beta below the diagonal.
  Eigen::MatrixXd U() const;
  LdlFactors<double> ldl() const;
  /// p x q, rows indexed by visit.
  Eigen::MatrixXd alpha_tilde() const;
  Eigen::MatrixXd alpha() const;
  Eigen::MatrixXd sigma() const;

  static SeqRegState from_alpha_sigma(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& sigma);
};

struct NgPosteriorSet {
  std::vector<NormalGammaParams> visits;  // (f_j, D_j)
  std::vector<Eigen::MatrixXd> chol;      // lower Cholesky factors of D_j
  bool ridge_applied = false;
};

struct PosteriorOptions {
  /// Add eps I (eps = 1e-8 trace/dim) to each D_j instead of failing on rank deficiency.
  bool ridge = false;
};

/// Gram matrices of the rows of Z_j, grouped by dropout pattern. Rows that do
/// not change between iterations (no imputed cells) are summed once.
class GramCache {
 public:
  /// `all_variable` treats every row as changing (latent-variable samplers).
  GramCache(const LongitudinalDataset& data, const MonotoneArrangement& arrangement,
            bool all_variable = false);

  /// Cumulative Gram: element j-1 is sum over {i : s_i >= j} of z z', where
  /// z = (x_i, y_i1 .. y_ip) restricted to the first q + s_i entries.
  std::vector<Eigen::MatrixXd> cumulative(const Eigen::MatrixXd& filled) const;

 private:
  const LongitudinalDataset* data_;
  int q_;
  int p_;
  std::vector<Eigen::MatrixXd> fixed_;          // per pattern s = 1..p
  std::vector<std::vector<int>> variable_;      // per pattern s = 1..p
};

/// f_j = n_j + f_j0, D_j = D_j0 + Z_j'Z_j. Throws ImproperPosterior(j) when
/// f_j <= 0 or D_j is rank deficient.
NgPosteriorSet mda_posterior(const PriorDecomposition& prior, const LongitudinalDataset& data,
                             const MonotoneArrangement& arrangement, const Eigen::MatrixXd& filled,
                             const PosteriorOptions& options = {});
NgPosteriorSet mda_posterior(const PriorDecomposition& prior, const GramCache& cache,
                             const std::vector<int>& counts, const Eigen::MatrixXd& filled,
                             const PosteriorOptions& options = {});

enum class SamplingMode { Joint, Marginal };

SeqRegState sample_seq_reg(const NgPosteriorSet& posteriors, int q, Rng& rng,
                           SamplingMode mode = SamplingMode::Joint);

/// Draws every subject's intermittent cells jointly from N(x_i'alpha, Sigma)
/// restricted to visits 1..s_i, conditional on the subject's observed cells.
void impute_intermittent(const SeqRegState& state, const LongitudinalDataset& data,
                         const MonotoneArrangement& arrangement, Eigen::MatrixXd& filled, Rng& rng);

/// Draws the `missing` visits of one subject given its `observed` visits
/// under N(mean, sigma), writing them into `filled` row `subject`.
void impute_subject_missing(const Eigen::VectorXd& mean, const Eigen::MatrixXd& sigma,
                            const std::vector<int>& missing, const std::vector<int>& observed,
                            Eigen::MatrixXd& filled, int subject, Rng& rng);

struct FdaDraw {
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd alpha;  // p x q
};

/// Complete-data conjugate posterior draw:
/// Sigma ~ IW(n + nu0 + r - q, A_pos), alpha | Sigma ~ MN(gamma_pos, Sigma, Omega^{-1}).
FdaDraw fda_posterior_sample(const MniwPrior& prior, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             Rng& rng);

struct ChainConfig {
  int iterations = 6000;  // total, including burn-in
  int burn_in = 1000;
  int thin = 1;
  SamplingMode mode = SamplingMode::Joint;
  bool ridge = false;

  int retained() const { return iterations > burn_in ? (iterations - burn_in) / thin : 0; }
  bool keep(int iteration) const {
    return iteration >= burn_in && (iteration - burn_in + 1) % thin == 0;
  }
  void validate() const;
};

struct MmrmChain {
  std::vector<SeqRegState> draws;
  /// Per retained draw, imputed values of arrangement.intermittent in order.
  std::vector<Eigen::VectorXd> intermittent;
  MonotoneArrangement arrangement;
  bool ridge_applied = false;
};

/// Initial fill of the intermittent cells (and, with `all_missing`, every
/// missing cell): last observation carried forward, with a covariate-only
/// least-squares prediction where no earlier value exists.
Eigen::MatrixXd initial_fill(const LongitudinalDataset& data, bool all_missing);

MmrmChain mmrm_mda_chain(const LongitudinalDataset& data, const MniwPrior& prior,
                         const ChainConfig& config, Rng& rng);

/// Full data augmentation: imputes every missing cell each iteration and
/// draws (alpha, Sigma) from the complete-data posterior.
MmrmChain mmrm_fda_chain(const LongitudinalDataset& data, const MniwPrior& prior,
                         const ChainConfig& config, Rng& rng);

}  // namespace mda
