#pragma once

// Declarative run configuration (INI: key = value under [sections]).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mda/dataset.hpp"
#include "mda/imh.hpp"
#include "mda/imputation.hpp"
#include "mda/mmrm.hpp"
#include "mda/mvp.hpp"

namespace mda {

enum class SamplerKind { Gibbs, Fda, ImhJoint, ImhSequential, ImhMarginal };

const char* to_string(SamplerKind s);
SamplerKind parse_sampler(const std::string& name);

struct RunConfig {
  // [data]
  std::string input;
  std::string outcome = "continuous";  // continuous | binary | ordinal
  int categories = 0;                  // ordinal only

  // [prior]
  std::string preset = "weakly-informative";  // weakly-informative | jeffreys-flat | custom
  double nu0 = -1.0;                          // < 0: preset value
  double m = 0.01;                            // M = m I (M = 0 under jeffreys-flat)
  double a_scale = 1.0;                       // A = a_scale I (continuous)
  std::string cutoff_prior = "normal";        // normal | flat
  double cutoff_sd = 10.0;

  // [general_prior]
  bool general_prior = false;
  std::string weight = "identity";  // identity | det-power | correlation-beta
  double weight_delta = 0.0;
  double weight_a = 1.0;
  double weight_b = 1.0;
  int recenter_at = -1;

  // [sampler]
  SamplerKind sampler = SamplerKind::Gibbs;
  std::string parameter_draw = "joint";  // joint | marginal
  bool probit_init = false;
  bool ridge = false;

  // [chain]
  int iterations = 6000;
  int burn_in = 1000;
  int thin = 1;
  int chains = 1;
  std::optional<std::uint64_t> seed;

  // [imputation]
  Mechanism mechanism = Mechanism::MAR;
  int m_imputations = 20;
  std::string reference_arm;
  std::vector<std::string> treatment_columns;  // covariate names
  std::vector<int> responder_categories;
  int threads = 1;

  // [output]
  std::string out_dir = "out";

  OutcomeKind outcome_kind() const;
  /// Categories of the outcome (2 for binary, 0 for continuous).
  int outcome_categories() const;
  /// Throws Config with a message naming the violated constraint.
  void validate() const;

  ChainConfig chain_config() const;
  MniwPrior mniw_prior(int p, int q) const;
  MvpPrior mvp_prior(int p, int q) const;
  GeneralPrior general(int p, int q) const;
  ImputationSpec imputation(const LongitudinalDataset& data) const;

  /// INI text with every setting resolved (no implicit defaults). Loading it
  /// back yields an equal configuration.
  std::string to_ini() const;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& base_dir = "");

}  // namespace mda
