#pragma once

// Run orchestration behind the command-line tool: fit, impute, analyze,
// validate and bench. All outputs depend only on (config, seed).

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mda/config.hpp"
#include "mda/diagnostics.hpp"

namespace mda {

/// 2 config, 3 data, 4 improper posterior, 5 numerical failure.
int exit_code(const Error& e);

struct FitResult {
  std::optional<MmrmChain> mmrm;  // continuous outcomes
  std::optional<MvpChain> mvp;    // categorical outcomes, chains merged in order
  std::vector<ImhStats> imh;      // per chain, iMH samplers only
  std::vector<ChainSummary> summaries;
  DrawTable table;
};

LongitudinalDataset load_data(const RunConfig& config);

/// Runs config.chains chains in parallel (stream c of the seed for chain c)
/// and merges them in chain order. `snapshot_indices` are merged-chain
/// retained indices at which to keep probit latent snapshots.
FitResult fit(const RunConfig& config, const LongitudinalDataset& data,
              const std::vector<int>& snapshot_indices = {});

/// Completed outcome matrices for the configured imputation.
std::vector<Eigen::MatrixXd> impute(const RunConfig& config, const LongitudinalDataset& data,
                                    const FitResult& fit);

MiResult analyze(const RunConfig& config, const LongitudinalDataset& data,
                 const std::vector<Eigen::MatrixXd>& completed);

/// Dry-run report: patterns, prior propriety, rank checks, category coverage.
std::string validate_report(const RunConfig& config, const LongitudinalDataset& data);

enum class Command { Fit, Impute, Analyze, Validate, Bench };

/// Executes a command and writes its artifacts into config.out_dir. Returns
/// the process exit status; errors are reported as one line on `err`.
int run_command(Command command, const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace mda
