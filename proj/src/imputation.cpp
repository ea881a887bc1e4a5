#include "mda/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "json.hpp"
#include "mda/errors.hpp"

namespace mda {

const char* to_string(Mechanism m) {
  switch (m) {
    case Mechanism::MAR: return "MAR";
    case Mechanism::J2R: return "J2R";
    case Mechanism::CR: return "CR";
  }
  return "?";
}

Mechanism parse_mechanism(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  if (s == "MAR") return Mechanism::MAR;
  if (s == "J2R") return Mechanism::J2R;
  if (s == "CR") return Mechanism::CR;
  throw Error(ErrorKind::Config, "unknown imputation mechanism '" + name + "' (expected MAR, J2R or CR)");
}

void ImputationSpec::validate(const LongitudinalDataset& data) const {
  if (m < 2) throw Error(ErrorKind::Config, "imputation: m must be at least 2");
  for (int c : treatment_columns)
    if (c < 0 || c >= data.q())
      throw Error(ErrorKind::Config, "imputation: treatment column " + std::to_string(c) + " out of range");
  for (int k : responder_categories)
    if (data.kind() == OutcomeKind::Categorical && (k < 1 || k > data.categories()))
      throw Error(ErrorKind::Config, "imputation: responder category " + std::to_string(k) + " out of range");
  if (mechanism != Mechanism::MAR && treatment_columns.empty())
    throw Error(ErrorKind::Config, "imputation: J2R and CR need the treatment covariate columns");
  const auto& arms = data.arms();
  if (std::find(arms.begin(), arms.end(), reference_arm) == arms.end())
    throw Error(ErrorKind::UnknownArm, "imputation: reference arm '" + reference_arm + "' not in the data");
  if (mechanism != Mechanism::MAR) reference_coding(data);
}

Eigen::VectorXd ImputationSpec::reference_coding(const LongitudinalDataset& data) const {
  Eigen::VectorXd coding(static_cast<Eigen::Index>(treatment_columns.size()));
  bool found = false;
  for (int i = 0; i < data.n(); ++i) {
    if (data.arms()[static_cast<std::size_t>(i)] != reference_arm) continue;
    for (std::size_t k = 0; k < treatment_columns.size(); ++k) {
      const double v = data.covariates()(i, treatment_columns[k]);
      const auto ki = static_cast<Eigen::Index>(k);
      if (!found) coding(ki) = v;
      else if (coding(ki) != v)
        throw Error(ErrorKind::Data, "reference arm '" + reference_arm + "' has inconsistent values in treatment column " +
                                         std::to_string(treatment_columns[k]));
    }
    found = true;
  }
  if (!found) throw Error(ErrorKind::UnknownArm, "reference arm '" + reference_arm + "' not in the data");
  return coding;
}

Eigen::VectorXd ImputationSpec::reference_covariates(const Eigen::VectorXd& x, const Eigen::VectorXd& coding) const {
  Eigen::VectorXd out = x;
  for (std::size_t k = 0; k < treatment_columns.size(); ++k)
    out(treatment_columns[k]) = coding(static_cast<Eigen::Index>(k));
  return out;
}

// ---------------------------------------------------------------------------
// Conditional laws
// ---------------------------------------------------------------------------

ConditionalNormal<double> dropout_law(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& sigma,
                                      const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref,
                                      const Eigen::VectorXd& history, Mechanism mechanism) {
  const int p = static_cast<int>(alpha.rows());
  const int s = static_cast<int>(history.size());
  const Eigen::VectorXd own = alpha * x;
  const Eigen::VectorXd ref = alpha * x_ref;
  Eigen::VectorXd mu(p);
  switch (mechanism) {
    case Mechanism::MAR: mu = own; break;
    case Mechanism::J2R: mu << own.head(s), ref.tail(p - s); break;
    case Mechanism::CR: mu = ref; break;
  }
  std::vector<int> observed(static_cast<std::size_t>(s)), missing(static_cast<std::size_t>(p - s));
  for (int j = 0; j < s; ++j) observed[static_cast<std::size_t>(j)] = j;
  for (int j = s; j < p; ++j) missing[static_cast<std::size_t>(j - s)] = j;
  return conditional_normal(mu, sigma, missing, observed, history);
}

Eigen::VectorXd impute_dropout(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& sigma,
                               const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref,
                               const Eigen::VectorXd& history, Mechanism mechanism, Rng& rng) {
  const auto p = alpha.rows();
  const auto s = history.size();
  Eigen::VectorXd out(p);
  out.head(s) = history;
  if (s == p) return out;
  const auto law = dropout_law(alpha, sigma, x, x_ref, history, mechanism);
  const Eigen::MatrixXd chol = checked_cholesky(law.cov, ErrorKind::NotPositiveDefinite);
  Eigen::VectorXd e(p - s);
  for (Eigen::Index k = 0; k < e.size(); ++k) e(k) = rng.normal();
  out.tail(p - s) = law.mean + chol * e;
  return out;
}

int categorize(double y, const Eigen::RowVectorXd& cutoffs) {
  int k = 1;
  while (k <= cutoffs.size() && y > cutoffs(k - 1)) ++k;
  return k;
}

std::vector<int> imputation_draw_indices(int retained, int m) {
  if (m < 1 || retained < m)
    throw Error(ErrorKind::Config, "imputation: need at least m = " + std::to_string(m) + " retained draws, have " +
                                       std::to_string(retained));
  const int stride = retained / m;
  std::vector<int> out(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) out[static_cast<std::size_t>(k)] = k * stride;
  return out;
}

namespace {

// Runs task(k) for k = 0..m-1 on up to `threads` workers. Each task writes
// only its own slot, so the result does not depend on scheduling.
template <typename Task>
void run_tasks(int m, int threads, const Task& task) {
  threads = std::max(1, std::min(threads, m));
  if (threads == 1) {
    for (int k = 0; k < m; ++k) task(k);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int k = t; k < m; k += threads) task(k);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Eigen::VectorXd reference_x(const ImputationSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& coding) {
  return spec.mechanism == Mechanism::MAR ? x : spec.reference_covariates(x, coding);
}

}  // namespace

std::vector<Eigen::MatrixXd> complete_continuous(const MmrmChain& chain, const LongitudinalDataset& data,
                                                 const ImputationSpec& spec, std::uint64_t seed, int threads) {
  spec.validate(data);
  const auto idx = imputation_draw_indices(static_cast<int>(chain.draws.size()), spec.m);
  const Eigen::VectorXd coding = spec.mechanism == Mechanism::MAR ? Eigen::VectorXd() : spec.reference_coding(data);
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(spec.m));
  run_tasks(spec.m, threads, [&](int k) {
    const auto d = static_cast<std::size_t>(idx[static_cast<std::size_t>(k)]);
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
    Eigen::MatrixXd filled = data.outcomes();
    const auto& cells = chain.arrangement.intermittent;
    for (std::size_t c = 0; c < cells.size(); ++c)
      filled(cells[c].subject, cells[c].visit) = chain.intermittent[d](static_cast<Eigen::Index>(c));
    const Eigen::MatrixXd alpha = chain.draws[d].alpha();
    const Eigen::MatrixXd sigma = chain.draws[d].sigma();
    for (int i = 0; i < data.n(); ++i) {
      const int s = data.pattern(i);
      if (s == data.p()) continue;
      const Eigen::VectorXd x = data.covariates().row(i).transpose();
      const Eigen::VectorXd hist = filled.row(i).head(s).transpose();
      filled.row(i) = impute_dropout(alpha, sigma, x, reference_x(spec, x, coding), hist, spec.mechanism, rng)
                          .transpose();
    }
    out[static_cast<std::size_t>(k)] = std::move(filled);
  });
  return out;
}

std::vector<Eigen::MatrixXd> complete_categorical(const MvpChain& chain, const LongitudinalDataset& data,
                                                  const ImputationSpec& spec, std::uint64_t seed, int threads) {
  spec.validate(data);
  const auto idx = imputation_draw_indices(static_cast<int>(chain.draws.size()), spec.m);
  for (int d : idx)
    if (!chain.latent_snapshots.count(d))
      throw Error(ErrorKind::PreconditionViolated,
                  "imputation: no latent snapshot stored for retained draw " + std::to_string(d));
  const Eigen::VectorXd coding = spec.mechanism == Mechanism::MAR ? Eigen::VectorXd() : spec.reference_coding(data);
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(spec.m));
  run_tasks(spec.m, threads, [&](int k) {
    const int d = idx[static_cast<std::size_t>(k)];
    const auto& draw = chain.draws[static_cast<std::size_t>(d)];
    const Eigen::MatrixXd& latent = chain.latent_snapshots.at(d);
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
    Eigen::MatrixXd filled = data.outcomes();
    const Eigen::MatrixXd cut = draw.cutoffs_ring;
    for (int i = 0; i < data.n(); ++i) {
      const int s = data.pattern(i);
      // Intermittent cells take the category of the stored latent value.
      for (int j = 0; j < s; ++j)
        if (!data.is_observed(i, j)) filled(i, j) = categorize(latent(i, j), cut.row(j));
      if (s == data.p()) continue;
      const Eigen::VectorXd x = data.covariates().row(i).transpose();
      const Eigen::VectorXd hist = latent.row(i).head(s).transpose();
      const Eigen::VectorXd y =
          impute_dropout(draw.alpha_ring, draw.R, x, reference_x(spec, x, coding), hist, spec.mechanism, rng);
      for (int j = s; j < data.p(); ++j) filled(i, j) = categorize(y(j), cut.row(j));
    }
    out[static_cast<std::size_t>(k)] = std::move(filled);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Analyses
// ---------------------------------------------------------------------------

namespace {

struct ArmSplit {
  std::vector<int> active, reference;
};

ArmSplit split_arms(const LongitudinalDataset& data, const ImputationSpec& spec) {
  ArmSplit s;
  for (int i = 0; i < data.n(); ++i)
    (data.arms()[static_cast<std::size_t>(i)] == spec.reference_arm ? s.reference : s.active).push_back(i);
  if (s.reference.size() < 2 || s.active.size() < 2)
    throw Error(ErrorKind::Data, "analysis: each arm needs at least two subjects");
  return s;
}

void mean_var(const Eigen::MatrixXd& v, const std::vector<int>& rows, int col, double& mean, double& var) {
  double s = 0.0;
  for (int i : rows) s += v(i, col);
  mean = s / static_cast<double>(rows.size());
  double ss = 0.0;
  for (int i : rows) ss += (v(i, col) - mean) * (v(i, col) - mean);
  var = ss / static_cast<double>(rows.size() - 1);
}

}  // namespace

Estimate mean_difference(const LongitudinalDataset& data, const Eigen::MatrixXd& completed,
                         const ImputationSpec& spec) {
  const auto arms = split_arms(data, spec);
  const int last = data.p() - 1;
  double m1, v1, m0, v0;
  mean_var(completed, arms.active, last, m1, v1);
  mean_var(completed, arms.reference, last, m0, v0);
  return {m1 - m0, v1 / static_cast<double>(arms.active.size()) + v0 / static_cast<double>(arms.reference.size())};
}

Estimate proportion_difference(const LongitudinalDataset& data, const Eigen::MatrixXd& completed,
                               const ImputationSpec& spec) {
  if (spec.responder_categories.empty())
    throw Error(ErrorKind::Config, "analysis: responder categories are not set");
  const auto arms = split_arms(data, spec);
  const int last = data.p() - 1;
  auto prop = [&](const std::vector<int>& rows) {
    int r = 0;
    for (int i : rows) {
      const int w = static_cast<int>(completed(i, last));
      if (std::find(spec.responder_categories.begin(), spec.responder_categories.end(), w) !=
          spec.responder_categories.end())
        ++r;
    }
    return static_cast<double>(r) / static_cast<double>(rows.size());
  };
  const double p1 = prop(arms.active), p0 = prop(arms.reference);
  return {p1 - p0, p1 * (1 - p1) / static_cast<double>(arms.active.size()) +
                       p0 * (1 - p0) / static_cast<double>(arms.reference.size())};
}

// ---------------------------------------------------------------------------
// Rubin's rules
// ---------------------------------------------------------------------------

MiResult rubin_combine(const std::vector<Estimate>& estimates) {
  const int m = static_cast<int>(estimates.size());
  if (m < 2) throw Error(ErrorKind::PreconditionViolated, "rubin_combine: need at least two estimates");
  for (const auto& e : estimates)
    if (!std::isfinite(e.point) || !std::isfinite(e.variance))
      throw Error(ErrorKind::PreconditionViolated, "rubin_combine: non-finite estimate");
  MiResult r;
  r.m = m;
  r.per_imputation = estimates;
  for (const auto& e : estimates) {
    r.point += e.point;
    r.within += e.variance;
  }
  r.point /= m;
  r.within /= m;
  for (const auto& e : estimates) r.between += (e.point - r.point) * (e.point - r.point);
  r.between /= (m - 1);
  const double inflated = (1.0 + 1.0 / m) * r.between;
  r.total = r.within + inflated;
  r.se = std::sqrt(r.total);
  if (inflated > 0.0) {
    const double ratio = 1.0 + r.within / inflated;
    r.df = (m - 1) * ratio * ratio;
  } else {
    r.df = std::numeric_limits<double>::infinity();
  }
  return r;
}

std::string mi_result_json(const MiResult& result, Mechanism mechanism) {
  nlohmann::ordered_json j;
  j["point"] = result.point;
  j["se"] = result.se;
  if (std::isfinite(result.df)) j["df"] = result.df;
  else j["df"] = nullptr;
  j["m"] = result.m;
  j["mechanism"] = to_string(mechanism);
  j["within"] = result.within;
  j["between"] = result.between;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : result.per_imputation) arr.push_back({{"estimate", e.point}, {"variance", e.variance}});
  j["per_imputation"] = arr;
  return j.dump(2) + "\n";
}

}  // namespace mda
