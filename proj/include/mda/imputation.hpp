#pragma once

// Post-convergence imputation of dropout cells under MAR, jump-to-reference
// and copy-reference, plus Rubin's-rules combining of per-dataset analyses.

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "mda/dataset.hpp"
#include "mda/linalg.hpp"
#include "mda/mmrm.hpp"
#include "mda/mvp.hpp"
#include "mda/random.hpp"

namespace mda {

enum class Mechanism { MAR, J2R, CR };

const char* to_string(Mechanism m);
Mechanism parse_mechanism(const std::string& name);

struct ImputationSpec {
  Mechanism mechanism = Mechanism::MAR;
  int m = 20;
  std::string reference_arm;
  /// Covariate columns (0-based) coding treatment; replaced by the reference
  /// arm's values when building x_ref.
  std::vector<int> treatment_columns;
  /// Categories (1-based) counted as response in the proportion analysis.
  std::vector<int> responder_categories;

  /// Throws Config for bad settings and UnknownArm if the reference arm is absent.
  void validate(const LongitudinalDataset& data) const;
  /// Treatment-column values shared by the reference arm. Throws Data when
  /// reference subjects disagree.
  Eigen::VectorXd reference_coding(const LongitudinalDataset& data) const;
  /// x_i with treatment columns set to the reference coding.
  Eigen::VectorXd reference_covariates(const Eigen::VectorXd& x, const Eigen::VectorXd& coding) const;
};

/// Conditional law of visits s+1..p given visits 1..s (`history`, length s)
/// under the mechanism. alpha is p x q.
ConditionalNormal<double> dropout_law(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& sigma,
                                      const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref,
                                      const Eigen::VectorXd& history, Mechanism mechanism);

/// Completed trajectory: history followed by a draw from dropout_law.
Eigen::VectorXd impute_dropout(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& sigma,
                               const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref,
                               const Eigen::VectorXd& history, Mechanism mechanism, Rng& rng);

/// w = k such that c_{k-1} < y <= c_k, with c_0 = -inf and c_K = +inf.
/// `cutoffs` holds c_1..c_{K-1}.
int categorize(double y, const Eigen::RowVectorXd& cutoffs);

/// Retained-draw indices used for M imputations: 0, s, 2s, ... with s = retained / M.
std::vector<int> imputation_draw_indices(int retained, int m);

/// M completed outcome matrices from an MMRM chain. Dataset k uses stream k of `seed`.
std::vector<Eigen::MatrixXd> complete_continuous(const MmrmChain& chain, const LongitudinalDataset& data,
                                                 const ImputationSpec& spec, std::uint64_t seed,
                                                 int threads = 1);

/// M completed category matrices from a probit chain. The chain must hold
/// restricted-scale latent snapshots at imputation_draw_indices.
std::vector<Eigen::MatrixXd> complete_categorical(const MvpChain& chain, const LongitudinalDataset& data,
                                                  const ImputationSpec& spec, std::uint64_t seed,
                                                  int threads = 1);

struct Estimate {
  double point = 0.0;
  double variance = 0.0;
};

/// Active minus reference mean at the last visit, with s1^2/n1 + s0^2/n0.
Estimate mean_difference(const LongitudinalDataset& data, const Eigen::MatrixXd& completed,
                         const ImputationSpec& spec);
/// Active minus reference response proportion at the last visit, binomial variance.
Estimate proportion_difference(const LongitudinalDataset& data, const Eigen::MatrixXd& completed,
                               const ImputationSpec& spec);

struct MiResult {
  double point = 0.0;
  double within = 0.0;
  double between = 0.0;
  double total = 0.0;
  double se = 0.0;
  double df = 0.0;  // +inf when the between-imputation variance is zero
  int m = 0;
  std::vector<Estimate> per_imputation;
};

MiResult rubin_combine(const std::vector<Estimate>& estimates);

/// {"point", "se", "df", "m", "mechanism", "within", "between", "per_imputation"}.
/// An infinite df is written as null.
std::string mi_result_json(const MiResult& result, Mechanism mechanism);

}  // namespace mda
