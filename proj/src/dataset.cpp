#include "mda/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mda/errors.hpp"

namespace mda {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Error data_error(const std::string& msg) { return Error(ErrorKind::Data, msg); }

std::vector<std::string> default_names(const char* prefix, int count) {
  std::vector<std::string> names;
  for (int k = 1; k <= count; ++k) names.push_back(prefix + std::to_string(k));
  return names;
}

void check_common(const std::vector<std::string>& ids, const std::vector<std::string>& arms,
                  const Eigen::MatrixXd& x, Eigen::Index outcome_rows) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (ids.size() != n || arms.size() != n || static_cast<std::size_t>(outcome_rows) != n)
    throw data_error("dataset: ids, arms, covariates and outcomes must have the same row count");
  if (x.cols() < 1) throw data_error("dataset: at least the intercept covariate is required");
  if (!(x.col(0).array() == 1.0).all()) throw data_error("dataset: covariate column 1 must be all ones");
  if (!x.allFinite()) throw data_error("dataset: covariates must be finite (no missing covariates)");
}

}  // namespace

LongitudinalDataset LongitudinalDataset::continuous(std::vector<std::string> ids,
                                                    std::vector<std::string> arms, Eigen::MatrixXd x,
                                                    Eigen::MatrixXd y,
                                                    std::vector<std::string> covariate_names) {
  check_common(ids, arms, x, y.rows());
  if (y.cols() < 1) throw data_error("dataset: at least one visit is required");
  LongitudinalDataset d;
  d.kind_ = OutcomeKind::Continuous;
  d.observed_ = y.array().isFinite();
  if ((y.array().isInf()).any()) throw data_error("dataset: infinite outcome value");
  d.ids_ = std::move(ids);
  d.arms_ = std::move(arms);
  d.covariate_names_ = covariate_names.empty() ? default_names("x", static_cast<int>(x.cols()))
                                               : std::move(covariate_names);
  d.x_ = std::move(x);
  d.y_ = std::move(y);
  d.finalize();
  return d;
}

LongitudinalDataset LongitudinalDataset::categorical(std::vector<std::string> ids,
                                                     std::vector<std::string> arms, Eigen::MatrixXd x,
                                                     const Eigen::MatrixXi& w, int categories,
                                                     std::vector<std::string> covariate_names) {
  check_common(ids, arms, x, w.rows());
  if (w.cols() < 1) throw data_error("dataset: at least one visit is required");
  if (categories < 2) throw data_error("dataset: categorical outcomes need K >= 2");
  LongitudinalDataset d;
  d.kind_ = OutcomeKind::Categorical;
  d.categories_ = categories;
  d.observed_ = MaskArray(w.rows(), w.cols());
  d.y_.resize(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const int v = w(i, j);
      if (v == 0) {
        d.observed_(i, j) = false;
        d.y_(i, j) = kNaN;
      } else if (v < 1 || v > categories) {
        throw data_error("dataset: category " + std::to_string(v) + " at row " + std::to_string(i + 1) +
                         " outside 1.." + std::to_string(categories));
      } else {
        d.observed_(i, j) = true;
        d.y_(i, j) = v;
      }
    }
  }
  d.ids_ = std::move(ids);
  d.arms_ = std::move(arms);
  d.covariate_names_ = covariate_names.empty() ? default_names("x", static_cast<int>(x.cols()))
                                               : std::move(covariate_names);
  d.x_ = std::move(x);
  d.finalize();
  return d;
}

void LongitudinalDataset::finalize() {
  if (static_cast<Eigen::Index>(covariate_names_.size()) != x_.cols())
    throw data_error("dataset: covariate name count does not match covariate columns");
  patterns_.assign(static_cast<std::size_t>(n()), 0);
  for (int i = 0; i < n(); ++i)
    for (int j = p() - 1; j >= 0; --j)
      if (observed_(i, j)) {
        patterns_[static_cast<std::size_t>(i)] = j + 1;
        break;
      }
}

std::vector<std::string> LongitudinalDataset::outcome_names() const {
  return default_names(kind_ == OutcomeKind::Continuous ? "y" : "w", p());
}

LongitudinalDataset LongitudinalDataset::subset(const std::vector<int>& rows) const {
  LongitudinalDataset d;
  d.kind_ = kind_;
  d.categories_ = categories_;
  d.covariate_names_ = covariate_names_;
  const auto idx = Eigen::Map<const Eigen::VectorXi>(rows.data(), static_cast<Eigen::Index>(rows.size()));
  d.x_ = x_(idx, Eigen::all);
  d.y_ = y_(idx, Eigen::all);
  d.observed_ = observed_(idx, Eigen::all);
  for (int r : rows) {
    d.ids_.push_back(ids_[static_cast<std::size_t>(r)]);
    d.arms_.push_back(arms_[static_cast<std::size_t>(r)]);
  }
  d.finalize();
  return d;
}

Eigen::MatrixXi LongitudinalDataset::category_counts() const {
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(p(), std::max(categories_, 1));
  if (kind_ != OutcomeKind::Categorical) return counts;
  for (int i = 0; i < n(); ++i)
    for (int j = 0; j < p(); ++j)
      if (observed_(i, j)) ++counts(j, category(i, j) - 1);
  return counts;
}

MonotoneArrangement arrange_monotone(const LongitudinalDataset& data) {
  MonotoneArrangement a;
  a.order.resize(static_cast<std::size_t>(data.n()));
  std::iota(a.order.begin(), a.order.end(), 0);
  std::stable_sort(a.order.begin(), a.order.end(),
                   [&](int l, int r) { return data.pattern(l) > data.pattern(r); });
  a.counts.assign(static_cast<std::size_t>(data.p()), 0);
  for (int i = 0; i < data.n(); ++i)
    for (int j = 0; j < data.pattern(i); ++j) ++a.counts[static_cast<std::size_t>(j)];
  for (int i : a.order)
    for (int j = 0; j + 1 < data.pattern(i); ++j)
      if (!data.is_observed(i, j)) a.intermittent.push_back({i, j});
  return a;
}

Eigen::VectorXd design_row(const LongitudinalDataset& data, int subject, int visit,
                           const Eigen::MatrixXd& filled) {
  const int q = data.q();
  Eigen::VectorXd row(q + visit - 1);
  row.head(q) = data.covariates().row(subject).transpose();
  for (int k = 0; k + 1 < visit; ++k) {
    const double v = filled(subject, k);
    if (std::isnan(v))
      throw Error(ErrorKind::MissingHistory, "design_row: subject " + std::to_string(subject + 1) +
                                                 " lacks outcome at visit " + std::to_string(k + 1));
    row(q + k) = v;
  }
  return row;
}

Eigen::VectorXd z_row(const LongitudinalDataset& data, int subject, int visit,
                      const Eigen::MatrixXd& filled) {
  Eigen::VectorXd z(data.q() + visit);
  z.head(data.q() + visit - 1) = design_row(data, subject, visit, filled);
  z(data.q() + visit - 1) = filled(subject, visit - 1);
  return z;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

bool is_missing_token(const std::string& s) {
  return s.empty() || ((s.size() == 2) && (s[0] == 'N' || s[0] == 'n') && (s[1] == 'A' || s[1] == 'a'));
}

double parse_number(const std::string& s, int line, const std::string& column) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
    throw data_error("csv line " + std::to_string(line) + ": column '" + column + "' value '" + s +
                     "' is not a finite number");
  return v;
}

// Index of columns named prefix1..prefixN, in numeric order.
std::vector<int> numbered_columns(const std::vector<std::string>& header, char prefix) {
  std::vector<std::pair<int, int>> found;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h.size() < 2 || h[0] != prefix) continue;
    int k = 0;
    const auto res = std::from_chars(h.data() + 1, h.data() + h.size(), k);
    if (res.ec == std::errc() && res.ptr == h.data() + h.size() && k >= 1)
      found.emplace_back(k, static_cast<int>(c));
  }
  std::sort(found.begin(), found.end());
  std::vector<int> cols;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (found[i].first != static_cast<int>(i) + 1)
      throw data_error(std::string("csv header: columns ") + prefix + "1.." + prefix +
                       "k must be consecutive");
    cols.push_back(found[i].second);
  }
  return cols;
}

}  // namespace

LongitudinalDataset read_dataset_csv(std::istream& in, OutcomeKind kind, int categories) {
  std::string line;
  if (!std::getline(in, line)) throw data_error("csv: empty input (header required)");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  const auto header = split_csv_line(line);
  const auto find = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw data_error("csv header: missing column '" + name + "'");
    return static_cast<int>(it - header.begin());
  };
  const int id_col = find("id");
  const int arm_col = find("arm");
  const auto x_cols = numbered_columns(header, 'x');
  const auto y_cols = numbered_columns(header, kind == OutcomeKind::Continuous ? 'y' : 'w');
  if (x_cols.empty()) throw data_error("csv header: no covariate columns x1..xq");
  if (y_cols.empty())
    throw data_error(std::string("csv header: no outcome columns ") +
                     (kind == OutcomeKind::Continuous ? "y1..yp" : "w1..wp"));

  std::vector<std::string> ids, arms;
  std::vector<std::vector<double>> xs, ys;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw data_error("csv line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    ids.push_back(f[static_cast<std::size_t>(id_col)]);
    arms.push_back(f[static_cast<std::size_t>(arm_col)]);
    std::vector<double> xr, yr;
    for (int c : x_cols) {
      const auto& s = f[static_cast<std::size_t>(c)];
      if (is_missing_token(s))
        throw data_error("csv line " + std::to_string(line_no) + ": missing covariate '" +
                         header[static_cast<std::size_t>(c)] + "'");
      xr.push_back(parse_number(s, line_no, header[static_cast<std::size_t>(c)]));
    }
    for (int c : y_cols) {
      const auto& s = f[static_cast<std::size_t>(c)];
      yr.push_back(is_missing_token(s) ? kNaN : parse_number(s, line_no, header[static_cast<std::size_t>(c)]));
    }
    xs.push_back(std::move(xr));
    ys.push_back(std::move(yr));
  }
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (n == 0) throw data_error("csv: no data rows");
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(x_cols.size()));
  Eigen::MatrixXd y(n, static_cast<Eigen::Index>(y_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) x(i, k) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    for (Eigen::Index k = 0; k < y.cols(); ++k) y(i, k) = ys[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  std::vector<std::string> x_names;
  for (int c : x_cols) x_names.push_back(header[static_cast<std::size_t>(c)]);
  if (kind == OutcomeKind::Continuous)
    return LongitudinalDataset::continuous(std::move(ids), std::move(arms), std::move(x), std::move(y),
                                           std::move(x_names));
  Eigen::MatrixXi w = Eigen::MatrixXi::Zero(n, y.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      if (std::isnan(y(i, j))) continue;
      if (y(i, j) != std::round(y(i, j)))
        throw data_error("csv: category at row " + std::to_string(i + 1) + " is not an integer");
      w(i, j) = static_cast<int>(y(i, j));
      if (w(i, j) == 0)
        throw data_error("csv: category 0 at row " + std::to_string(i + 1) +
                         " (categories are coded 1..K; binary outcomes as 1/2)");
    }
  return LongitudinalDataset::categorical(std::move(ids), std::move(arms), std::move(x), w, categories,
                                          std::move(x_names));
}

LongitudinalDataset read_dataset_csv(const std::string& path, OutcomeKind kind, int categories) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open input file '" + path + "'");
  return read_dataset_csv(in, kind, categories);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_completed_csv(std::ostream& out, const LongitudinalDataset& data,
                         const Eigen::MatrixXd& values, int imputation_index) {
  out << "id,arm";
  for (const auto& name : data.covariate_names()) out << ',' << name;
  for (const auto& name : data.outcome_names()) out << ',' << name;
  out << ",imputation_index\n";
  for (int i = 0; i < data.n(); ++i) {
    out << csv_field(data.ids()[static_cast<std::size_t>(i)]) << ','
        << csv_field(data.arms()[static_cast<std::size_t>(i)]);
    for (int k = 0; k < data.q(); ++k) out << ',' << format_double(data.covariates()(i, k));
    for (int j = 0; j < data.p(); ++j) out << ',' << format_double(values(i, j));
    out << ',' << imputation_index << '\n';
  }
}

}  // namespace mda
