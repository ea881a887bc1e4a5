#include "mda/diagnostics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "mda/errors.hpp"

namespace mda {

namespace {

std::string idx(const char* base, int j) { return std::string(base) + "[" + std::to_string(j) + "]"; }
std::string idx(const char* base, int j, int k) {
  return std::string(base) + "[" + std::to_string(j) + "][" + std::to_string(k) + "]";
}

}  // namespace

DrawTable draw_table(const std::vector<SeqRegState>& draws) {
  DrawTable t;
  if (draws.empty()) return t;
  const int p = draws.front().p(), q = draws.front().q();
  for (int j = 1; j <= p; ++j)
    for (int k = 1; k <= q; ++k) t.names.push_back(idx("alpha", j, k));
  for (int j = 1; j <= p; ++j)
    for (int k = j; k <= p; ++k) t.names.push_back(idx("Sigma", j, k));
  for (int j = 1; j <= p; ++j) t.names.push_back(idx("gamma", j));
  t.values.resize(static_cast<Eigen::Index>(draws.size()), static_cast<Eigen::Index>(t.names.size()));
  for (std::size_t r = 0; r < draws.size(); ++r) {
    const Eigen::MatrixXd a = draws[r].alpha();
    const Eigen::MatrixXd s = draws[r].sigma();
    Eigen::Index c = 0;
    const auto row = static_cast<Eigen::Index>(r);
    for (int j = 0; j < p; ++j)
      for (int k = 0; k < q; ++k) t.values(row, c++) = a(j, k);
    for (int j = 0; j < p; ++j)
      for (int k = j; k < p; ++k) t.values(row, c++) = s(j, k);
    for (int j = 0; j < p; ++j) t.values(row, c++) = draws[r].gamma(j);
  }
  return t;
}

DrawTable draw_table(const std::vector<MvpDraw>& draws) {
  DrawTable t;
  if (draws.empty()) return t;
  const auto& f = draws.front();
  const int p = static_cast<int>(f.alpha_ring.rows()), q = static_cast<int>(f.alpha_ring.cols());
  const int kc = static_cast<int>(f.cutoffs_ring.cols());  // K - 1
  for (int j = 1; j <= p; ++j)
    for (int k = 1; k <= q; ++k) t.names.push_back(idx("alpha", j, k));
  for (int j = 1; j <= p; ++j)
    for (int k = j + 1; k <= p; ++k) t.names.push_back(idx("R", j, k));
  for (int j = 1; j <= p; ++j)
    for (int k = 2; k <= kc; ++k) t.names.push_back(idx("c", j, k));
  t.values.resize(static_cast<Eigen::Index>(draws.size()), static_cast<Eigen::Index>(t.names.size()));
  for (std::size_t r = 0; r < draws.size(); ++r) {
    const auto& d = draws[r];
    Eigen::Index c = 0;
    const auto row = static_cast<Eigen::Index>(r);
    for (int j = 0; j < p; ++j)
      for (int k = 0; k < q; ++k) t.values(row, c++) = d.alpha_ring(j, k);
    for (int j = 0; j < p; ++j)
      for (int k = j + 1; k < p; ++k) t.values(row, c++) = d.R(j, k);
    for (int j = 0; j < p; ++j)
      for (int k = 1; k < kc; ++k) t.values(row, c++) = d.cutoffs_ring(j, k);
  }
  return t;
}

void write_draws_csv(std::ostream& out, const DrawTable& table) {
  out << "draw";
  for (const auto& n : table.names) out << ',' << n;
  out << '\n';
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) out << ',' << format_double(table.values(r, c));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Autocorrelation and ESS
// ---------------------------------------------------------------------------

namespace {

// Autocovariances at lags 0..n-1 (biased, divided by n).
Eigen::VectorXd autocovariance(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::Index m = 1;
  while (m < 2 * n) m <<= 1;
  std::vector<double> buf(static_cast<std::size_t>(m), 0.0);
  const double mean = x.mean();
  for (Eigen::Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = x(i) - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  for (auto& z : spec) z = std::complex<double>(std::norm(z), 0.0);
  std::vector<double> back;
  fft.inv(back, spec);
  Eigen::VectorXd out(n);
  for (Eigen::Index k = 0; k < n; ++k) out(k) = back[static_cast<std::size_t>(k)] / static_cast<double>(n);
  return out;
}

bool is_constant(const Eigen::VectorXd& x) { return (x.array() == x(0)).all(); }

}  // namespace

Eigen::VectorXd autocorrelation(const Eigen::VectorXd& x, int max_lag) {
  const Eigen::Index n = x.size();
  const Eigen::Index l = std::min<Eigen::Index>(max_lag, n - 1);
  if (n == 0) return {};
  if (is_constant(x)) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(l + 1);
    out(0) = 1.0;
    return out;
  }
  const Eigen::VectorXd acov = autocovariance(x);
  return acov.head(l + 1) / acov(0);
}

double effective_sample_size(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n < 4 || is_constant(x)) return static_cast<double>(n);
  const Eigen::VectorXd acov = autocovariance(x);
  const Eigen::VectorXd rho = acov / acov(0);
  double tau = -1.0;
  for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
    const double pair = rho(2 * k) + rho(2 * k + 1);
    if (!(pair > 0.0)) break;
    tau += 2.0 * pair;
  }
  const double ess = static_cast<double>(n) / tau;
  return std::min(ess, static_cast<double>(n));
}

ChainSummary summarize_chain(const DrawTable& table, int max_lag) {
  const Eigen::Index n = table.values.rows();
  if (n < 100)
    throw Error(ErrorKind::PreconditionViolated,
                "summarize_chain: need at least 100 retained draws, have " + std::to_string(n));
  ChainSummary s;
  s.draws = static_cast<int>(n);
  const Eigen::Index h = n / 2;
  for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
    const Eigen::VectorXd x = table.values.col(c);
    ParameterSummary ps;
    ps.name = table.names[static_cast<std::size_t>(c)];
    ps.mean = x.mean();
    ps.sd = std::sqrt((x.array() - ps.mean).square().sum() / static_cast<double>(n - 1));
    ps.acf = autocorrelation(x, max_lag);
    ps.ess = effective_sample_size(x);
    if (is_constant(x)) {
      ps.degenerate = true;
      s.warnings.push_back(ps.name + ": constant chain (sd = 0)");
    } else {
      ps.mcse = ps.sd / std::sqrt(ps.ess);
      const Eigen::VectorXd a = x.head(h), b = x.tail(n - h);
      auto se2 = [](const Eigen::VectorXd& v) {
        const double m = v.mean();
        const double var = (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
        return var / effective_sample_size(v);
      };
      const double denom = std::sqrt(se2(a) + se2(b));
      ps.split_discrepancy = denom > 0.0 ? std::abs(a.mean() - b.mean()) / denom : 0.0;
      if (ps.split_discrepancy > 4.0)
        s.warnings.push_back(ps.name + ": first- and second-half means differ by " +
                             std::to_string(ps.split_discrepancy) + " standard errors");
    }
    s.parameters.push_back(std::move(ps));
  }
  return s;
}

std::string summary_json(const ChainSummary& summary) {
  nlohmann::ordered_json j;
  j["draws"] = summary.draws;
  j["seconds_per_iteration"] = summary.seconds_per_iteration;
  auto params = nlohmann::ordered_json::array();
  for (const auto& p : summary.parameters) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["mean"] = p.mean;
    e["sd"] = p.sd;
    e["ess"] = p.ess;
    e["mcse"] = p.mcse;
    e["split_discrepancy"] = p.split_discrepancy;
    e["degenerate"] = p.degenerate;
    e["acf"] = std::vector<double>(p.acf.data(), p.acf.data() + p.acf.size());
    params.push_back(std::move(e));
  }
  j["parameters"] = std::move(params);
  j["warnings"] = summary.warnings;
  return j.dump(2) + "\n";
}

std::string summary_table(const ChainSummary& summary) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "parameter" << std::right << std::setw(12) << "mean" << std::setw(12)
      << "sd" << std::setw(10) << "ess" << std::setw(10) << "acf1" << std::setw(8) << "split" << '\n';
  out << std::setprecision(4);
  for (const auto& p : summary.parameters) {
    out << std::left << std::setw(16) << p.name << std::right << std::setw(12) << p.mean << std::setw(12) << p.sd
        << std::setw(10) << std::fixed << std::setprecision(1) << p.ess << std::setw(10) << std::setprecision(3)
        << (p.acf.size() > 1 ? p.acf(1) : 0.0) << std::setw(8) << std::setprecision(2) << p.split_discrepancy
        << std::defaultfloat << std::setprecision(4) << '\n';
  }
  for (const auto& w : summary.warnings) out << "warning: " << w << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// MDA versus FDA
// ---------------------------------------------------------------------------

ComparisonReport compare_mda_fda(const LongitudinalDataset& data, const MniwPrior& prior,
                                 const ChainConfig& config, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  auto timed = [&](bool full, std::uint64_t stream) {
    Rng rng = Rng::stream(seed, stream);
    const auto t0 = clock::now();
    MmrmChain chain = full ? mmrm_fda_chain(data, prior, config, rng) : mmrm_mda_chain(data, prior, config, rng);
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    return std::make_pair(std::move(chain), secs);
  };
  auto [mda_chain, mda_secs] = timed(false, 0);
  auto [fda_chain, fda_secs] = timed(true, 1);

  // Shared parameters: drop the gamma columns.
  auto shared = [](DrawTable t) {
    std::vector<Eigen::Index> keep;
    for (std::size_t c = 0; c < t.names.size(); ++c)
      if (t.names[c].rfind("gamma", 0) != 0) keep.push_back(static_cast<Eigen::Index>(c));
    DrawTable out;
    for (auto c : keep) out.names.push_back(t.names[static_cast<std::size_t>(c)]);
    out.values = t.values(Eigen::all, keep);
    return out;
  };
  ComparisonReport r;
  r.mda = summarize_chain(shared(draw_table(mda_chain.draws)));
  r.fda = summarize_chain(shared(draw_table(fda_chain.draws)));
  r.mda.seconds_per_iteration = mda_secs / config.iterations;
  r.fda.seconds_per_iteration = fda_secs / config.iterations;
  int faster = 0;
  for (std::size_t k = 0; k < r.mda.parameters.size(); ++k) {
    const auto& a = r.mda.parameters[k];
    const auto& b = r.fda.parameters[k];
    r.names.push_back(a.name);
    r.mda_ess_per_second.push_back(a.ess / mda_secs);
    r.fda_ess_per_second.push_back(b.ess / fda_secs);
    if (r.mda_ess_per_second.back() >= r.fda_ess_per_second.back()) ++faster;
    const double se = std::sqrt(a.mcse * a.mcse + b.mcse * b.mcse);
    const double z = se > 0.0 ? (a.mean - b.mean) / se : 0.0;
    r.z.push_back(z);
    r.max_abs_z = std::max(r.max_abs_z, std::abs(z));
  }
  r.fraction_mda_faster = r.names.empty() ? 0.0 : static_cast<double>(faster) / static_cast<double>(r.names.size());
  return r;
}

std::string comparison_json(const ComparisonReport& report) {
  nlohmann::ordered_json j;
  j["mda_seconds_per_iteration"] = report.mda.seconds_per_iteration;
  j["fda_seconds_per_iteration"] = report.fda.seconds_per_iteration;
  j["fraction_mda_ess_per_second_at_least_fda"] = report.fraction_mda_faster;
  j["max_abs_mean_z"] = report.max_abs_z;
  auto params = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < report.names.size(); ++k)
    params.push_back({{"name", report.names[k]},
                      {"mda_mean", report.mda.parameters[k].mean},
                      {"fda_mean", report.fda.parameters[k].mean},
                      {"mda_ess", report.mda.parameters[k].ess},
                      {"fda_ess", report.fda.parameters[k].ess},
                      {"mda_ess_per_second", report.mda_ess_per_second[k]},
                      {"fda_ess_per_second", report.fda_ess_per_second[k]},
                      {"z", report.z[k]}});
  j["parameters"] = std::move(params);
  return j.dump(2) + "\n";
}

}  // namespace mda
