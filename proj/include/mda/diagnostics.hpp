#pragma once

// Chain summaries: autocorrelation, effective sample size and a split-chain
// mean check. Also the MDA-versus-FDA comparison.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mda/dataset.hpp"
#include "mda/mmrm.hpp"
#include "mda/mvp.hpp"

namespace mda {

/// Retained draws flattened to named scalar columns (rows = draws).
struct DrawTable {
  std::vector<std::string> names;
  Eigen::MatrixXd values;
};

/// alpha[j][k], Sigma[j][k] (j <= k), gamma[j]; indices are 1-based.
DrawTable draw_table(const std::vector<SeqRegState>& draws);
/// Restricted scale: alpha[j][k], R[j][k] (j < k), c[j][k] (k = 2..K-1).
DrawTable draw_table(const std::vector<MvpDraw>& draws);

void write_draws_csv(std::ostream& out, const DrawTable& table);

/// Normalized autocorrelations at lags 0..max_lag (FFT based).
Eigen::VectorXd autocorrelation(const Eigen::VectorXd& x, int max_lag);

/// Initial positive sequence estimate, capped at the draw count. A constant
/// chain returns the draw count.
double effective_sample_size(const Eigen::VectorXd& x);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double ess = 0.0;
  double mcse = 0.0;  // sd / sqrt(ess)
  /// |mean(first half) - mean(second half)| over its standard error.
  double split_discrepancy = 0.0;
  Eigen::VectorXd acf;  // lags 0..50 (fewer for short chains)
  bool degenerate = false;
};

struct ChainSummary {
  int draws = 0;
  double seconds_per_iteration = 0.0;  // 0 when not measured
  std::vector<ParameterSummary> parameters;
  std::vector<std::string> warnings;
};

/// Requires at least 100 draws.
ChainSummary summarize_chain(const DrawTable& table, int max_lag = 50);

std::string summary_json(const ChainSummary& summary);
std::string summary_table(const ChainSummary& summary);

struct ComparisonReport {
  ChainSummary mda;
  ChainSummary fda;
  std::vector<std::string> names;
  std::vector<double> mda_ess_per_second;
  std::vector<double> fda_ess_per_second;
  /// (mean_mda - mean_fda) / sqrt(mcse_mda^2 + mcse_fda^2).
  std::vector<double> z;
  double fraction_mda_faster = 0.0;  // share of parameters with MDA ESS/s >= FDA ESS/s
  double max_abs_z = 0.0;
};

/// Runs both schemes from the same seed on the same data and compares the
/// shared parameters (alpha and Sigma).
ComparisonReport compare_mda_fda(const LongitudinalDataset& data, const MniwPrior& prior,
                                 const ChainConfig& config, std::uint64_t seed);

std::string comparison_json(const ComparisonReport& report);

}  // namespace mda
