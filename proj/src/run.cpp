#include "mda/run.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mda/errors.hpp"

namespace mda {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Config, "cannot write '" + path.string() + "'");
  out << text;
}

ImhMode imh_mode(SamplerKind s) {
  switch (s) {
    case SamplerKind::ImhSequential: return ImhMode::Sequential;
    case SamplerKind::ImhMarginal: return ImhMode::Marginal;
    default: return ImhMode::Joint;
  }
}

bool is_imh(SamplerKind s) {
  return s == SamplerKind::ImhJoint || s == SamplerKind::ImhSequential || s == SamplerKind::ImhMarginal;
}

// Runs body(c) for each chain on its own thread; rethrows the first failure
// in chain order.
template <typename Body>
void for_each_chain(int chains, const Body& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
  if (chains == 1) {
    body(0);
    return;
  }
  std::vector<std::thread> pool;
  for (int c = 0; c < chains; ++c)
    pool.emplace_back([&, c] {
      try {
        body(c);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::uint64_t imputation_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

}  // namespace

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::UnknownArm:
      return 2;
    case ErrorKind::Data:
    case ErrorKind::MissingHistory:
      return 3;
    case ErrorKind::ImproperPosterior:
    case ErrorKind::NonpositiveDf:
      return 4;
    default:
      return 5;
  }
}

LongitudinalDataset load_data(const RunConfig& config) {
  return read_dataset_csv(config.input, config.outcome_kind(), config.outcome_categories());
}

FitResult fit(const RunConfig& config, const LongitudinalDataset& data, const std::vector<int>& snapshot_indices) {
  config.validate();
  if ((data.kind() == OutcomeKind::Continuous) != (config.outcome_kind() == OutcomeKind::Continuous))
    throw Error(ErrorKind::Config, "config: outcome kind does not match the data");
  const ChainConfig cc = config.chain_config();
  const int chains = config.chains;
  const int per_chain = cc.retained();
  const std::uint64_t seed = *config.seed;
  FitResult out;

  if (data.kind() == OutcomeKind::Continuous) {
    const MniwPrior prior = config.mniw_prior(data.p(), data.q());
    std::vector<MmrmChain> parts(static_cast<std::size_t>(chains));
    for_each_chain(chains, [&](int c) {
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(c));
      parts[static_cast<std::size_t>(c)] = config.sampler == SamplerKind::Fda ? mmrm_fda_chain(data, prior, cc, rng)
                                                                              : mmrm_mda_chain(data, prior, cc, rng);
    });
    MmrmChain merged = std::move(parts.front());
    for (std::size_t c = 1; c < parts.size(); ++c) {
      merged.draws.insert(merged.draws.end(), parts[c].draws.begin(), parts[c].draws.end());
      merged.intermittent.insert(merged.intermittent.end(), parts[c].intermittent.begin(), parts[c].intermittent.end());
    }
    for (int c = 0; c < chains; ++c) {
      std::vector<SeqRegState> part(merged.draws.begin() + c * per_chain, merged.draws.begin() + (c + 1) * per_chain);
      if (per_chain >= 100) out.summaries.push_back(summarize_chain(draw_table(part)));
    }
    out.table = draw_table(merged.draws);
    out.mmrm = std::move(merged);
    return out;
  }

  // Snapshot requests per chain, in local retained indices.
  std::vector<std::vector<int>> local(static_cast<std::size_t>(chains));
  for (int g : snapshot_indices)
    if (g >= 0 && g < per_chain * chains) local[static_cast<std::size_t>(g / per_chain)].push_back(g % per_chain);

  std::vector<MvpChain> parts(static_cast<std::size_t>(chains));
  out.imh.resize(is_imh(config.sampler) ? static_cast<std::size_t>(chains) : 0);
  InitOptions init;
  init.probit = config.probit_init;
  for_each_chain(chains, [&](int c) {
    const auto ci = static_cast<std::size_t>(c);
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(c));
    if (is_imh(config.sampler)) {
      auto r = imh_chain(data, config.general(data.p(), data.q()), imh_mode(config.sampler), cc, rng, local[ci], init);
      parts[ci] = std::move(r.chain);
      out.imh[ci] = r.stats;
    } else {
      parts[ci] = mvp_chain(data, config.mvp_prior(data.p(), data.q()), cc, rng, gibbs_parameter_step(cc.mode),
                            local[ci], init);
    }
  });
  MvpChain merged;
  for (int c = 0; c < chains; ++c) {
    auto& part = parts[static_cast<std::size_t>(c)];
    if (per_chain >= 100) out.summaries.push_back(summarize_chain(draw_table(part.draws)));
    for (auto& [k, v] : part.latent_snapshots) merged.latent_snapshots.emplace(c * per_chain + k, std::move(v));
    merged.draws.insert(merged.draws.end(), std::make_move_iterator(part.draws.begin()),
                        std::make_move_iterator(part.draws.end()));
  }
  out.table = draw_table(merged.draws);
  out.mvp = std::move(merged);
  return out;
}

std::vector<Eigen::MatrixXd> impute(const RunConfig& config, const LongitudinalDataset& data, const FitResult& fit) {
  const ImputationSpec spec = config.imputation(data);
  const std::uint64_t seed = imputation_seed(*config.seed);
  if (fit.mmrm) return complete_continuous(*fit.mmrm, data, spec, seed, config.threads);
  return complete_categorical(*fit.mvp, data, spec, seed, config.threads);
}

MiResult analyze(const RunConfig& config, const LongitudinalDataset& data,
                 const std::vector<Eigen::MatrixXd>& completed) {
  const ImputationSpec spec = config.imputation(data);
  std::vector<Estimate> est;
  for (const auto& c : completed)
    est.push_back(data.kind() == OutcomeKind::Continuous ? mean_difference(data, c, spec)
                                                          : proportion_difference(data, c, spec));
  return rubin_combine(est);
}

// ---------------------------------------------------------------------------
// Validation report
// ---------------------------------------------------------------------------

std::string validate_report(const RunConfig& config, const LongitudinalDataset& data) {
  std::ostringstream o;
  const int n = data.n(), p = data.p(), q = data.q();
  o << "subjects " << n << ", visits " << p << ", covariates " << q;
  if (data.kind() == OutcomeKind::Categorical) o << ", categories " << data.categories();
  o << '\n';

  const auto arr = arrange_monotone(data);
  std::vector<int> hist(static_cast<std::size_t>(p + 1), 0);
  for (int i = 0; i < n; ++i) ++hist[static_cast<std::size_t>(data.pattern(i))];
  o << "pattern histogram (s_i: count):";
  for (int s = 0; s <= p; ++s) o << ' ' << s << ':' << hist[static_cast<std::size_t>(s)];
  o << "\nn_j:";
  for (int c : arr.counts) o << ' ' << c;
  o << "\nintermittent missing cells: " << arr.intermittent.size() << '\n';

  const MniwPrior prior = data.kind() == OutcomeKind::Continuous ? config.mniw_prior(p, q)
                                                                 : config.mvp_prior(p, q).mniw(p);
  o << "rank(M) = " << prior.rank() << " of " << q << '\n';
  const auto flat = prior.flat_covariates();
  if (!flat.empty()) {
    o << "flat-prior covariates:";
    for (int k : flat) o << ' ' << data.covariate_names()[static_cast<std::size_t>(k)];
    o << '\n';
  }
  try {
    const auto dec = decompose_prior(prior, p, q);
    bool ok = true;
    o << "prior propriety (f_j0 -> f_j):";
    for (int j = 0; j < p; ++j) {
      const double f0 = dec.visits[static_cast<std::size_t>(j)].f;
      const double f = f0 + arr.counts[static_cast<std::size_t>(j)];
      o << ' ' << format_double(f0) << "->" << format_double(f);
      if (!(f > 0.0)) ok = false;
    }
    o << (ok ? "  ok\n" : "  IMPROPER: some f_j <= 0\n");
  } catch (const Error& e) {
    o << "prior: " << e.what() << '\n';
  }

  // Covariate collinearity matters when any covariate has a flat prior.
  const Eigen::MatrixXd& x = data.covariates();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < q) {
    std::string pairs;
    for (int a = 0; a < q; ++a)
      for (int b = a + 1; b < q; ++b) {
        const double na = x.col(a).norm(), nb = x.col(b).norm();
        if (na > 0 && nb > 0 && std::abs(std::abs(x.col(a).dot(x.col(b))) - na * nb) <= 1e-12 * na * nb)
          pairs += " (" + data.covariate_names()[static_cast<std::size_t>(a)] + ", " +
                   data.covariate_names()[static_cast<std::size_t>(b)] + ")";
      }
    o << (flat.empty() ? "note" : "WARNING") << ": covariate matrix has rank " << qr.rank() << " < " << q;
    if (!pairs.empty()) o << "; collinear columns:" << pairs;
    o << (flat.empty() ? " (prior on M keeps the posterior proper)\n" : " with a flat covariate prior\n");
  }
  // Z_j Gram ranks on subjects observed through visit j.
  for (int j = 1; j <= p && data.kind() == OutcomeKind::Continuous; ++j) {
    std::vector<Eigen::VectorXd> rows;
    for (int i = 0; i < n; ++i) {
      bool full = true;
      for (int v = 0; v < j; ++v) full = full && data.is_observed(i, v);
      if (full) rows.push_back(z_row(data, i, j, data.outcomes()));
    }
    Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), q + j);
    for (std::size_t r = 0; r < rows.size(); ++r) z.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> zq(z);
    zq.setThreshold(1e-10);
    const int rank = rows.empty() ? 0 : static_cast<int>(zq.rank());
    if (rank < q + j)
      o << "note: Z_" << j << " (complete-history rows " << rows.size() << ") has rank " << rank << " < " << q + j
        << '\n';
  }
  if (data.kind() == OutcomeKind::Categorical) {
    const Eigen::MatrixXi counts = data.category_counts();
    o << "category counts per visit:\n";
    for (int j = 0; j < p; ++j) {
      o << "  visit " << j + 1 << ':';
      for (int k = 0; k < counts.cols(); ++k) o << ' ' << counts(j, k);
      o << '\n';
      for (int k = 0; k < counts.cols(); ++k)
        if (counts(j, k) == 0)
          o << "  note: visit " << j + 1 << " has no category " << k + 1
            << " responses (legal; the adjacent cutoff bounds are infinite on that side)\n";
    }
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace {

std::string manifest(const RunConfig& config, Command command) {
  static const char* names[] = {"fit", "impute", "analyze", "validate", "bench"};
  std::ostringstream o;
  o << "; mdaimpute " << kVersion << " manifest; rerun with: mdaimpute " << names[static_cast<int>(command)]
    << " --config manifest.ini\n";
  o << "; eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
#ifdef __VERSION__
  o << ", compiler " << __VERSION__;
#endif
  o << "\n\n" << config.to_ini();
  return o.str();
}

std::string diagnostics_json(const FitResult& f) {
  nlohmann::ordered_json j;
  auto chains = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < f.summaries.size(); ++c) {
    auto s = nlohmann::ordered_json::parse(summary_json(f.summaries[c]));
    s.erase("seconds_per_iteration");
    if (c < f.imh.size()) {
      s["imh_acceptance_rate"] = f.imh[c].rate();
      s["imh_proposals"] = f.imh[c].proposals;
      s["imh_nonfinite"] = f.imh[c].nonfinite;
    }
    chains.push_back(std::move(s));
  }
  j["chains"] = std::move(chains);
  return j.dump(2) + "\n";
}

std::string padded(int k, int width) {
  std::ostringstream o;
  o << std::setw(width) << std::setfill('0') << k;
  return o.str();
}

}  // namespace

int run_command(Command command, const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
    const LongitudinalDataset data = load_data(config);
    if (command == Command::Validate) {
      out << validate_report(config, data);
      return 0;
    }
    const fs::path dir(config.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Config, "cannot create output directory '" + dir.string() + "': " + ec.message());

    if (command == Command::Bench) {
      if (data.kind() != OutcomeKind::Continuous)
        throw Error(ErrorKind::Config, "bench compares MDA and FDA and needs continuous outcomes");
      const auto report = compare_mda_fda(data, config.mniw_prior(data.p(), data.q()), config.chain_config(),
                                          *config.seed);
      write_file(dir / "bench.json", comparison_json(report));
      out << "MDA s/iter " << report.mda.seconds_per_iteration << ", FDA s/iter " << report.fda.seconds_per_iteration
          << ", share of parameters with MDA ESS/s >= FDA: " << report.fraction_mda_faster
          << ", max |z| of mean difference: " << report.max_abs_z << '\n';
      write_file(dir / "manifest.ini", manifest(config, command));
      return 0;
    }

    const ImputationSpec spec = config.imputation(data);
    if (command != Command::Fit) spec.validate(data);
    std::vector<int> snapshots;
    const int retained = config.chain_config().retained() * config.chains;
    if (command != Command::Fit && data.kind() == OutcomeKind::Categorical)
      snapshots = imputation_draw_indices(retained, spec.m);
    const FitResult f = fit(config, data, snapshots);
    {
      std::ostringstream draws;
      write_draws_csv(draws, f.table);
      write_file(dir / "draws.csv", draws.str());
    }
    write_file(dir / "diagnostics.json", diagnostics_json(f));
    for (const auto& s : f.summaries) out << summary_table(s);

    if (command != Command::Fit) {
      const auto completed = impute(config, data, f);
      const int width = static_cast<int>(std::to_string(completed.size()).size());
      for (std::size_t k = 0; k < completed.size(); ++k) {
        std::ostringstream csv;
        write_completed_csv(csv, data, completed[k], static_cast<int>(k + 1));
        write_file(dir / ("completed_" + padded(static_cast<int>(k + 1), width) + ".csv"), csv.str());
      }
      if (command == Command::Analyze) {
        const MiResult mi = analyze(config, data, completed);
        write_file(dir / "mi.json", mi_result_json(mi, config.mechanism));
        out << "MI estimate " << format_double(mi.point) << " (se " << format_double(mi.se) << ", m = " << mi.m
            << ", " << to_string(config.mechanism) << ")\n";
      }
    }
    write_file(dir / "manifest.ini", manifest(config, command));
    return 0;
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 5;
  }
}

}  // namespace mda
