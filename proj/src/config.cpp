#include "mda/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mda/errors.hpp"

namespace mda {

namespace pt = boost::property_tree;

namespace {

Error config_error(const std::string& msg) { return Error(ErrorKind::Config, "config: " + msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error(key + " must be true or false, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw config_error(key + " must be a number, got '" + v + "'");
  return out;
}

std::string fmt(double v) { return format_double(v); }

const std::set<std::string> known_keys = {
    "data.input", "data.outcome", "data.categories",
    "prior.preset", "prior.nu0", "prior.m", "prior.a_scale", "prior.cutoff_prior", "prior.cutoff_sd",
    "general_prior.enabled", "general_prior.weight", "general_prior.delta", "general_prior.a", "general_prior.b",
    "general_prior.recenter_at",
    "sampler.method", "sampler.parameter_draw", "sampler.probit_init", "sampler.ridge",
    "chain.iterations", "chain.burn_in", "chain.thin", "chain.chains", "chain.seed",
    "imputation.mechanism", "imputation.m", "imputation.reference_arm", "imputation.treatment_columns",
    "imputation.responder_categories", "imputation.threads",
    "output.directory"};

}  // namespace

const char* to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::Gibbs: return "gibbs";
    case SamplerKind::Fda: return "fda";
    case SamplerKind::ImhJoint: return "imh-joint";
    case SamplerKind::ImhSequential: return "imh-sequential";
    case SamplerKind::ImhMarginal: return "imh-marginal";
  }
  return "?";
}

SamplerKind parse_sampler(const std::string& name) {
  for (auto s : {SamplerKind::Gibbs, SamplerKind::Fda, SamplerKind::ImhJoint, SamplerKind::ImhSequential,
                 SamplerKind::ImhMarginal})
    if (name == to_string(s)) return s;
  throw config_error("sampler.method '" + name + "' is not one of gibbs, fda, imh-joint, imh-sequential, imh-marginal");
}

OutcomeKind RunConfig::outcome_kind() const {
  return outcome == "continuous" ? OutcomeKind::Continuous : OutcomeKind::Categorical;
}

int RunConfig::outcome_categories() const {
  if (outcome == "binary") return 2;
  if (outcome == "ordinal") return categories;
  return 0;
}

void RunConfig::validate() const {
  if (input.empty()) throw config_error("data.input is required");
  if (outcome != "continuous" && outcome != "binary" && outcome != "ordinal")
    throw config_error("data.outcome must be continuous, binary or ordinal");
  if (outcome == "ordinal" && categories < 3) throw config_error("data.categories must be at least 3 for ordinal outcomes");
  if (preset != "weakly-informative" && preset != "jeffreys-flat" && preset != "custom")
    throw config_error("prior.preset must be weakly-informative, jeffreys-flat or custom");
  if (!(m >= 0.0)) throw config_error("prior.m must be nonnegative");
  if (!(a_scale >= 0.0)) throw config_error("prior.a_scale must be nonnegative");
  if (cutoff_prior != "normal" && cutoff_prior != "flat") throw config_error("prior.cutoff_prior must be normal or flat");
  if (!(cutoff_sd > 0.0)) throw config_error("prior.cutoff_sd must be positive");
  if (sampler == SamplerKind::Fda && outcome != "continuous")
    throw config_error("sampler.method = fda is only available for continuous outcomes");
  const bool imh = sampler == SamplerKind::ImhJoint || sampler == SamplerKind::ImhSequential ||
                   sampler == SamplerKind::ImhMarginal;
  if (imh && !general_prior)
    throw config_error("sampler.method = " + std::string(to_string(sampler)) +
                       " requires a [general_prior] block with enabled = true");
  if (imh && outcome == "continuous") throw config_error("imh samplers apply to binary or ordinal outcomes only");
  if (weight != "identity" && weight != "det-power" && weight != "correlation-beta")
    throw config_error("general_prior.weight must be identity, det-power or correlation-beta");
  if (parameter_draw != "joint" && parameter_draw != "marginal")
    throw config_error("sampler.parameter_draw must be joint or marginal");
  if (!seed) throw config_error("chain.seed is required (no wall-clock seeding); set it or pass --seed");
  if (chains < 1) throw config_error("chain.chains must be at least 1");
  if (threads < 1) throw config_error("imputation.threads must be at least 1");
  chain_config().validate();
  if (m_imputations < 2) throw config_error("imputation.m must be at least 2");
  if (m_imputations > chain_config().retained() * chains)
    throw config_error("imputation.m exceeds the number of retained draws");
  if (mechanism != Mechanism::MAR && treatment_columns.empty())
    throw config_error("imputation.treatment_columns is required for J2R and CR");
}

ChainConfig RunConfig::chain_config() const {
  ChainConfig c;
  c.iterations = iterations;
  c.burn_in = burn_in;
  c.thin = thin;
  c.mode = parameter_draw == "marginal" ? SamplingMode::Marginal : SamplingMode::Joint;
  c.ridge = ridge;
  return c;
}

MniwPrior RunConfig::mniw_prior(int p, int q) const {
  MniwPrior prior = preset == "jeffreys-flat" ? MniwPrior::jeffreys_flat(p, q) : MniwPrior::weakly_informative(p, q, m);
  if (preset == "custom") {
    prior.A = a_scale * Eigen::MatrixXd::Identity(p, p);
    prior.M = m * Eigen::MatrixXd::Identity(q, q);
  }
  if (nu0 >= 0.0) prior.nu0 = nu0;
  return prior;
}

MvpPrior RunConfig::mvp_prior(int p, int q) const {
  const int K = outcome_categories();
  MvpPrior prior = MvpPrior::standard(p, q, K, preset == "jeffreys-flat" ? 0.0 : m);
  if (preset == "jeffreys-flat") prior.allow_flat_covariates = true;
  if (nu0 >= 0.0) prior.nu0 = nu0;
  prior.cutoff_kind = cutoff_prior == "flat" ? CutoffPriorKind::Flat : CutoffPriorKind::Normal;
  for (auto& v : prior.cutoff_cov) v = cutoff_sd * cutoff_sd * Eigen::MatrixXd::Identity(v.rows(), v.cols());
  return prior;
}

GeneralPrior RunConfig::general(int p, int q) const {
  const MvpPrior base = mvp_prior(p, q);
  GeneralPrior g = GeneralPrior::standard(p, q, outcome_categories(), m);
  g.nu0 = base.nu0;
  g.M = base.M;
  g.cutoff_kind = base.cutoff_kind;
  g.cutoff_mean = base.cutoff_mean;
  g.cutoff_cov = base.cutoff_cov;
  g.recenter_at = recenter_at;
  if (weight == "det-power") g.g = PriorWeight::det_power(weight_delta);
  else if (weight == "correlation-beta") g.g = PriorWeight::correlation_beta(weight_a, weight_b);
  return g;
}

ImputationSpec RunConfig::imputation(const LongitudinalDataset& data) const {
  ImputationSpec spec;
  spec.mechanism = mechanism;
  spec.m = m_imputations;
  spec.reference_arm = reference_arm;
  spec.responder_categories = responder_categories;
  const auto& names = data.covariate_names();
  for (const auto& t : treatment_columns) {
    const auto it = std::find(names.begin(), names.end(), t);
    if (it == names.end()) throw config_error("imputation.treatment_columns: no covariate named '" + t + "'");
    spec.treatment_columns.push_back(static_cast<int>(it - names.begin()));
  }
  if (spec.responder_categories.empty() && data.kind() == OutcomeKind::Categorical)
    spec.responder_categories = {data.categories()};
  return spec;
}

std::string RunConfig::to_ini() const {
  auto join = [](const auto& v) {
    std::ostringstream o;
    for (std::size_t k = 0; k < v.size(); ++k) o << (k ? "," : "") << v[k];
    return o.str();
  };
  std::ostringstream o;
  o << "[data]\ninput = " << input << "\noutcome = " << outcome << "\ncategories = " << categories << "\n\n";
  o << "[prior]\npreset = " << preset << "\nnu0 = " << fmt(nu0) << "\nm = " << fmt(m) << "\na_scale = " << fmt(a_scale)
    << "\ncutoff_prior = " << cutoff_prior << "\ncutoff_sd = " << fmt(cutoff_sd) << "\n\n";
  o << "[general_prior]\nenabled = " << (general_prior ? "true" : "false") << "\nweight = " << weight
    << "\ndelta = " << fmt(weight_delta) << "\na = " << fmt(weight_a) << "\nb = " << fmt(weight_b)
    << "\nrecenter_at = " << recenter_at << "\n\n";
  o << "[sampler]\nmethod = " << to_string(sampler) << "\nparameter_draw = " << parameter_draw
    << "\nprobit_init = " << (probit_init ? "true" : "false") << "\nridge = " << (ridge ? "true" : "false") << "\n\n";
  o << "[chain]\niterations = " << iterations << "\nburn_in = " << burn_in << "\nthin = " << thin
    << "\nchains = " << chains << "\nseed = " << (seed ? std::to_string(*seed) : "") << "\n\n";
  o << "[imputation]\nmechanism = " << to_string(mechanism) << "\nm = " << m_imputations
    << "\nreference_arm = " << reference_arm << "\ntreatment_columns = " << join(treatment_columns)
    << "\nresponder_categories = " << join(responder_categories) << "\nthreads = " << threads << "\n\n";
  o << "[output]\ndirectory = " << out_dir << "\n";
  return o.str();
}

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw config_error(std::string("cannot parse INI: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw config_error("key '" + section + "' must be inside a [section]");
    for (const auto& kv : body)
      if (!known_keys.count(section + "." + kv.first))
        throw config_error("unknown key '" + kv.first + "' in [" + section + "]");
  }
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    const auto v = tree.get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return trim(*v);
  };
  RunConfig c;
  if (auto v = get("data.input")) {
    std::filesystem::path p(*v);
    if (!v->empty() && p.is_relative()) p = std::filesystem::absolute(std::filesystem::path(base_dir) / p);
    c.input = v->empty() ? "" : p.lexically_normal().string();
  }
  if (auto v = get("data.outcome")) c.outcome = *v;
  if (auto v = get("data.categories")) c.categories = parse_number<int>("data.categories", *v);
  if (auto v = get("prior.preset")) c.preset = *v;
  if (auto v = get("prior.nu0")) c.nu0 = parse_number<double>("prior.nu0", *v);
  if (auto v = get("prior.m")) c.m = parse_number<double>("prior.m", *v);
  if (auto v = get("prior.a_scale")) c.a_scale = parse_number<double>("prior.a_scale", *v);
  if (auto v = get("prior.cutoff_prior")) c.cutoff_prior = *v;
  if (auto v = get("prior.cutoff_sd")) c.cutoff_sd = parse_number<double>("prior.cutoff_sd", *v);
  if (tree.get_child_optional("general_prior")) c.general_prior = true;
  if (auto v = get("general_prior.enabled")) c.general_prior = parse_bool("general_prior.enabled", *v);
  if (auto v = get("general_prior.weight")) c.weight = *v;
  if (auto v = get("general_prior.delta")) c.weight_delta = parse_number<double>("general_prior.delta", *v);
  if (auto v = get("general_prior.a")) c.weight_a = parse_number<double>("general_prior.a", *v);
  if (auto v = get("general_prior.b")) c.weight_b = parse_number<double>("general_prior.b", *v);
  if (auto v = get("general_prior.recenter_at")) c.recenter_at = parse_number<int>("general_prior.recenter_at", *v);
  if (auto v = get("sampler.method")) c.sampler = parse_sampler(*v);
  if (auto v = get("sampler.parameter_draw")) c.parameter_draw = *v;
  if (auto v = get("sampler.probit_init")) c.probit_init = parse_bool("sampler.probit_init", *v);
  if (auto v = get("sampler.ridge")) c.ridge = parse_bool("sampler.ridge", *v);
  if (auto v = get("chain.iterations")) c.iterations = parse_number<int>("chain.iterations", *v);
  if (auto v = get("chain.burn_in")) c.burn_in = parse_number<int>("chain.burn_in", *v);
  if (auto v = get("chain.thin")) c.thin = parse_number<int>("chain.thin", *v);
  if (auto v = get("chain.chains")) c.chains = parse_number<int>("chain.chains", *v);
  if (auto v = get("chain.seed"); v && !v->empty()) c.seed = parse_number<std::uint64_t>("chain.seed", *v);
  if (auto v = get("imputation.mechanism")) c.mechanism = parse_mechanism(*v);
  if (auto v = get("imputation.m")) c.m_imputations = parse_number<int>("imputation.m", *v);
  if (auto v = get("imputation.reference_arm")) c.reference_arm = *v;
  if (auto v = get("imputation.treatment_columns")) c.treatment_columns = split_list(*v);
  if (auto v = get("imputation.responder_categories")) {
    c.responder_categories.clear();
    for (const auto& s : split_list(*v)) c.responder_categories.push_back(parse_number<int>("imputation.responder_categories", s));
  }
  if (auto v = get("imputation.threads")) c.threads = parse_number<int>("imputation.threads", *v);
  if (auto v = get("output.directory")) c.out_dir = *v;
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::filesystem::path(path).parent_path().string());
}

}  // namespace mda
