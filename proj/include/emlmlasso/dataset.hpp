#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace emlmlasso {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One subject's observations: response y (n_i), fixed-effect design X
/// (n_i x p) and random-effect design Z (n_i x q).
struct SubjectBlock {
  std::string subject_id;
  Vector y;
  Matrix X;
  Matrix Z;
};

/// Affine map applied to one column: stored = (raw - center) / scale.
struct ColumnScaling {
  double center = 0.0;
  double scale = 1.0;
};

struct Standardization {
  std::vector<ColumnScaling> x;
  ColumnScaling y;
};

/// Grouped longitudinal data. Immutable after construction; the stacked
/// N x p design and N-vector response are cached alongside the blocks.
class LongitudinalDataset {
 public:
  LongitudinalDataset(std::vector<SubjectBlock> blocks,
                      std::vector<std::string> x_names = {},
                      std::vector<std::string> z_names = {},
                      std::optional<Standardization> standardization = {});

  std::size_t n() const { return blocks_.size(); }
  std::size_t N() const { return static_cast<std::size_t>(y_.size()); }
  std::size_t p() const { return static_cast<std::size_t>(X_.cols()); }
  std::size_t q() const { return q_; }

  const std::vector<SubjectBlock>& blocks() const { return blocks_; }
  const SubjectBlock& block(std::size_t i) const { return blocks_[i]; }
  // First stacked row of subject i.
  std::size_t offset(std::size_t i) const { return offsets_[i]; }

  const Matrix& stacked_X() const { return X_; }
  const Vector& stacked_y() const { return y_; }

  const std::vector<std::string>& x_names() const { return x_names_; }
  const std::vector<std::string>& z_names() const { return z_names_; }
  const std::optional<Standardization>& standardization() const { return standardization_; }

  /// Dataset with the fixed-effect design restricted to `columns` (in the
  /// given order). Standardization records follow the columns.
  LongitudinalDataset with_columns(std::span<const std::size_t> columns) const;

  /// Dataset holding only the listed subjects, in the given order.
  LongitudinalDataset with_subjects(std::span<const std::size_t> subjects) const;

  /// Map a coefficient vector fitted on this (standardized) dataset back to
  /// the original measurement scale. Identity when no standardization.
  Vector beta_to_original_scale(const Vector& beta) const;

 private:
  std::vector<SubjectBlock> blocks_;
  std::vector<std::string> x_names_;
  std::vector<std::string> z_names_;
  std::optional<Standardization> standardization_;
  std::vector<std::size_t> offsets_;
  std::size_t q_ = 0;
  Matrix X_;
  Vector y_;
};

// ---------------------------------------------------------------------------
// Ingestion

/// Column-role mapping for long-format CSV input. A random-effect entry of
/// "1" (or "intercept") denotes a column of ones; the shorthand
/// "intercept+<col>" expands to {"1", "<col>"}.
struct ColumnRoles {
  std::string subject;
  std::string response;
  std::vector<std::string> fixed;
  std::vector<std::string> random;
};

std::vector<std::string> expand_random_roles(const std::vector<std::string>& random);

LongitudinalDataset ingest_long_csv(const std::string& path, const ColumnRoles& roles);
LongitudinalDataset ingest_long_csv_text(const std::string& text, const ColumnRoles& roles);

// ---------------------------------------------------------------------------
// Standardization

struct StandardizeOptions {
  // Names of categorical/binary fixed-effect columns left unscaled.
  std::vector<std::string> categorical;
  // Center categorical columns (never scale them).
  bool center_categorical = false;
  bool scale_response = true;
};

/// Center and scale every non-categorical X column to mean 0 and sample
/// variance 1 (denominator N-1) over all N pooled rows, and center (and
/// optionally scale) the response. Throws Error(data) on a zero-variance
/// non-exempt column.
LongitudinalDataset standardize(const LongitudinalDataset& ds, const StandardizeOptions& options = {});

/// Undo standardize(); returns a dataset without a standardization record.
LongitudinalDataset destandardize(const LongitudinalDataset& ds);

// ---------------------------------------------------------------------------
// Linear-dependency removal

struct ColumnReductionReport {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> dropped;
  // dependency_sets[k] lists the kept columns that dropped[k] is a linear
  // combination of, with coefficients.
  std::vector<std::vector<std::pair<std::size_t, double>>> dependency_sets;
};

/// Scan columns in order with a Householder QR that defers any column whose
/// remaining diagonal magnitude is below rank_tol times the largest column
/// norm. Earlier columns are preferred, so the result is deterministic.
ColumnReductionReport find_linear_combos(const Matrix& X, double rank_tol = 1e-7);

std::pair<LongitudinalDataset, ColumnReductionReport> remove_linear_combos(
    const LongitudinalDataset& ds, double rank_tol = 1e-7);

}  // namespace emlmlasso
