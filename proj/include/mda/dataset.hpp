#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace mda {

enum class OutcomeKind { Continuous, Categorical };

using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Subjects x visits outcomes with baseline covariates. Immutable after
/// construction. Visits and categories are 1-based in the public vocabulary
/// (pattern s_i, category k) and 0-based as matrix indices.
class LongitudinalDataset {
 public:
  /// `y` holds NaN for missing cells.
  static LongitudinalDataset continuous(std::vector<std::string> ids, std::vector<std::string> arms,
                                        Eigen::MatrixXd x, Eigen::MatrixXd y,
                                        std::vector<std::string> covariate_names = {});
  /// `w` holds categories 1..K, 0 for missing.
  static LongitudinalDataset categorical(std::vector<std::string> ids, std::vector<std::string> arms,
                                         Eigen::MatrixXd x, const Eigen::MatrixXi& w, int categories,
                                         std::vector<std::string> covariate_names = {});

  OutcomeKind kind() const { return kind_; }
  int n() const { return static_cast<int>(x_.rows()); }
  int p() const { return static_cast<int>(y_.cols()); }
  int q() const { return static_cast<int>(x_.cols()); }
  int categories() const { return categories_; }

  const Eigen::MatrixXd& covariates() const { return x_; }
  /// Outcome values (category codes for categorical data); NaN where missing.
  const Eigen::MatrixXd& outcomes() const { return y_; }
  const MaskArray& observed() const { return observed_; }
  bool is_observed(int i, int j) const { return observed_(i, j); }
  int category(int i, int j) const { return observed_(i, j) ? static_cast<int>(y_(i, j)) : 0; }

  /// s_i: 1-based index of the last observed visit, 0 if none.
  int pattern(int i) const { return patterns_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& patterns() const { return patterns_; }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::string>& arms() const { return arms_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  std::vector<std::string> outcome_names() const;

  /// Row subset in the given order.
  LongitudinalDataset subset(const std::vector<int>& rows) const;

  /// counts(j, k-1) = number of observed category-k responses at visit j.
  Eigen::MatrixXi category_counts() const;

 private:
  LongitudinalDataset() = default;
  void finalize();

  OutcomeKind kind_ = OutcomeKind::Continuous;
  std::vector<std::string> ids_;
  std::vector<std::string> arms_;
  std::vector<std::string> covariate_names_;
  Eigen::MatrixXd x_;
  Eigen::MatrixXd y_;
  MaskArray observed_;
  int categories_ = 0;
  std::vector<int> patterns_;
};

/// A cell (subject row, 0-based visit).
struct Cell {
  int subject = 0;
  int visit = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct MonotoneArrangement {
  std::vector<int> order;          // subjects by descending pattern, stable
  std::vector<int> counts;         // counts[j-1] = n_j = #{i : s_i >= j}
  std::vector<Cell> intermittent;  // missing cells before the subject's last observed visit
};

MonotoneArrangement arrange_monotone(const LongitudinalDataset& data);

/// Predictor row for the visit-j regression: (x_i, y_i1 .. y_i,j-1), length
/// q + j - 1. `filled` supplies outcomes (observed or currently imputed).
/// Throws MissingHistory if a lagged outcome is NaN.
Eigen::VectorXd design_row(const LongitudinalDataset& data, int subject, int visit,
                           const Eigen::MatrixXd& filled);

/// Row of Z_j: the design row followed by y_ij, length q + j.
Eigen::VectorXd z_row(const LongitudinalDataset& data, int subject, int visit,
                      const Eigen::MatrixXd& filled);

// CSV ingestion/emission. Columns: id, arm, x1..xq, then y1..yp (continuous)
// or w1..wp (categorical). Missing cells are empty or "NA".

LongitudinalDataset read_dataset_csv(std::istream& in, OutcomeKind kind, int categories = 0);
LongitudinalDataset read_dataset_csv(const std::string& path, OutcomeKind kind, int categories = 0);

/// Writes `values` (same shape as data.outcomes(), no missing cells) with the
/// input schema plus an `imputation_index` column.
void write_completed_csv(std::ostream& out, const LongitudinalDataset& data,
                         const Eigen::MatrixXd& values, int imputation_index);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace mda
