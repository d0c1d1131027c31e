#include "emlmlasso/dataset.hpp"

#include "emlmlasso/csv.hpp"
#include "emlmlasso/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace emlmlasso {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

std::vector<std::string> default_names(const std::string& prefix, std::size_t count) {
  std::vector<std::string> names;
  names.reserve(count);
  for (std::size_t j = 0; j < count; ++j) names.push_back(prefix + std::to_string(j + 1));
  return names;
}

}  // namespace

LongitudinalDataset::LongitudinalDataset(std::vector<SubjectBlock> blocks,
                                         std::vector<std::string> x_names,
                                         std::vector<std::string> z_names,
                                         std::optional<Standardization> standardization)
    : blocks_(std::move(blocks)),
      x_names_(std::move(x_names)),
      z_names_(std::move(z_names)),
      standardization_(std::move(standardization)) {
  if (blocks_.empty()) throw Error(ErrorKind::data, "dataset has no subjects");
  const auto p = blocks_.front().X.cols();
  const auto q = blocks_.front().Z.cols();
  std::size_t total = 0;
  offsets_.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    const auto ni = b.y.size();
    if (ni < 1) throw Error(ErrorKind::data, "subject '" + b.subject_id + "' has no observations");
    if (b.X.rows() != ni || b.Z.rows() != ni)
      throw Error(ErrorKind::data, "subject '" + b.subject_id + "': design rows do not match response length");
    if (b.X.cols() != p || b.Z.cols() != q)
      throw Error(ErrorKind::data, "subject '" + b.subject_id + "': inconsistent number of design columns");
    if (!b.y.allFinite() || !all_finite(b.X) || !all_finite(b.Z))
      throw Error(ErrorKind::data, "subject '" + b.subject_id + "' contains non-finite values");
    offsets_.push_back(total);
    total += static_cast<std::size_t>(ni);
  }
  q_ = static_cast<std::size_t>(q);

  X_.resize(static_cast<Eigen::Index>(total), p);
  y_.resize(static_cast<Eigen::Index>(total));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto off = static_cast<Eigen::Index>(offsets_[i]);
    const auto ni = blocks_[i].y.size();
    X_.middleRows(off, ni) = blocks_[i].X;
    y_.segment(off, ni) = blocks_[i].y;
  }

  if (x_names_.empty()) x_names_ = default_names("x", static_cast<std::size_t>(p));
  if (z_names_.empty()) z_names_ = default_names("z", q_);
  if (x_names_.size() != static_cast<std::size_t>(p) || z_names_.size() != q_)
    throw Error(ErrorKind::data, "column name count does not match design dimensions");
  if (standardization_ && standardization_->x.size() != static_cast<std::size_t>(p))
    throw Error(ErrorKind::data, "standardization record does not match fixed-effect dimension");
}

LongitudinalDataset LongitudinalDataset::with_columns(std::span<const std::size_t> columns) const {
  std::vector<Eigen::Index> idx;
  for (auto c : columns) {
    if (c >= p()) throw Error(ErrorKind::config, "column index out of range: " + std::to_string(c));
    idx.push_back(static_cast<Eigen::Index>(c));
  }
  std::vector<SubjectBlock> blocks;
  blocks.reserve(blocks_.size());
  for (const auto& b : blocks_) blocks.push_back({b.subject_id, b.y, b.X(Eigen::all, idx), b.Z});
  std::vector<std::string> names;
  for (auto c : columns) names.push_back(x_names_[c]);
  std::optional<Standardization> st;
  if (standardization_) {
    st = Standardization{{}, standardization_->y};
    for (auto c : columns) st->x.push_back(standardization_->x[c]);
  }
  return LongitudinalDataset(std::move(blocks), std::move(names), z_names_, std::move(st));
}

LongitudinalDataset LongitudinalDataset::with_subjects(std::span<const std::size_t> subjects) const {
  std::vector<SubjectBlock> blocks;
  blocks.reserve(subjects.size());
  for (auto s : subjects) {
    if (s >= n()) throw Error(ErrorKind::config, "subject index out of range: " + std::to_string(s));
    blocks.push_back(blocks_[s]);
  }
  return LongitudinalDataset(std::move(blocks), x_names_, z_names_, standardization_);
}

Vector LongitudinalDataset::beta_to_original_scale(const Vector& beta) const {
  if (!standardization_) return beta;
  Vector out = beta;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    out(j) = beta(j) * standardization_->y.scale / standardization_->x[static_cast<std::size_t>(j)].scale;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> expand_random_roles(const std::vector<std::string>& random) {
  std::vector<std::string> out;
  for (const auto& r : random) {
    const std::string prefix = "intercept+";
    if (r.rfind(prefix, 0) == 0) {
      out.emplace_back("1");
      out.push_back(r.substr(prefix.size()));
    } else if (r == "intercept") {
      out.emplace_back("1");
    } else {
      out.push_back(r);
    }
  }
  return out;
}

LongitudinalDataset ingest_long_csv_text(const std::string& text, const ColumnRoles& roles) {
  const auto table = parse_csv(text);
  if (table.header.empty()) throw Error(ErrorKind::parse, "CSV has no header row");

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < table.header.size(); ++j) col.emplace(table.header[j], j);
  auto lookup = [&](const std::string& name, const char* role) {
    auto it = col.find(name);
    if (it == col.end())
      throw Error(ErrorKind::config, std::string("missing ") + role + " column '" + name + "'");
    return it->second;
  };

  if (roles.subject.empty() || roles.response.empty())
    throw Error(ErrorKind::config, "subject and response columns must be named");
  const auto subj_col = lookup(roles.subject, "subject");
  const auto resp_col = lookup(roles.response, "response");
  std::vector<std::size_t> fixed_cols;
  for (const auto& f : roles.fixed) fixed_cols.push_back(lookup(f, "fixed-effect"));
  const auto random = expand_random_roles(roles.random);
  std::vector<std::optional<std::size_t>> random_cols;
  for (const auto& r : random) {
    if (r == "1") random_cols.emplace_back();
    else random_cols.emplace_back(lookup(r, "random-effect"));
  }

  auto number = [&](std::size_t row, std::size_t c) {
    const auto& cell = table.rows[row][c];
    auto v = parse_double(cell);
    if (!v)
      throw Error(ErrorKind::parse, "row " + std::to_string(row + 2) + ": non-numeric value '" + cell +
                                        "' in column '" + table.header[c] + "'");
    return *v;
  };

  // Subjects in order of first appearance; rows keep file order.
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> rows_of;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != table.header.size())
      throw Error(ErrorKind::parse, "row " + std::to_string(r + 2) + ": expected " +
                                        std::to_string(table.header.size()) + " fields, found " +
                                        std::to_string(table.rows[r].size()));
    const auto& id = table.rows[r][subj_col];
    auto [it, inserted] = rows_of.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(r);
  }
  if (order.empty()) throw Error(ErrorKind::data, "CSV has no data rows");

  const auto p = static_cast<Eigen::Index>(fixed_cols.size());
  const auto q = static_cast<Eigen::Index>(random_cols.size());
  std::vector<SubjectBlock> blocks;
  blocks.reserve(order.size());
  for (const auto& id : order) {
    const auto& rows = rows_of[id];
    const auto ni = static_cast<Eigen::Index>(rows.size());
    SubjectBlock b{id, Vector(ni), Matrix(ni, p), Matrix(ni, q)};
    for (Eigen::Index k = 0; k < ni; ++k) {
      const auto r = rows[static_cast<std::size_t>(k)];
      b.y(k) = number(r, resp_col);
      for (Eigen::Index j = 0; j < p; ++j) b.X(k, j) = number(r, fixed_cols[static_cast<std::size_t>(j)]);
      for (Eigen::Index j = 0; j < q; ++j) {
        const auto& rc = random_cols[static_cast<std::size_t>(j)];
        b.Z(k, j) = rc ? number(r, *rc) : 1.0;
      }
    }
    blocks.push_back(std::move(b));
  }
  std::vector<std::string> z_names;
  for (const auto& r : random) z_names.push_back(r == "1" ? "(intercept)" : r);
  return LongitudinalDataset(std::move(blocks), roles.fixed, std::move(z_names));
}

LongitudinalDataset ingest_long_csv(const std::string& path, const ColumnRoles& roles) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::config, "cannot open input file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ingest_long_csv_text(ss.str(), roles);
}

// ---------------------------------------------------------------------------

namespace {

LongitudinalDataset apply_scaling(const LongitudinalDataset& ds, const std::vector<ColumnScaling>& xs,
                                  const ColumnScaling& ys, std::optional<Standardization> record) {
  std::vector<SubjectBlock> blocks;
  blocks.reserve(ds.n());
  for (const auto& b : ds.blocks()) {
    SubjectBlock nb = b;
    for (Eigen::Index j = 0; j < nb.X.cols(); ++j) {
      const auto& s = xs[static_cast<std::size_t>(j)];
      nb.X.col(j) = (nb.X.col(j).array() - s.center) / s.scale;
    }
    nb.y = (nb.y.array() - ys.center) / ys.scale;
    blocks.push_back(std::move(nb));
  }
  return LongitudinalDataset(std::move(blocks), ds.x_names(), ds.z_names(), std::move(record));
}

}  // namespace

LongitudinalDataset standardize(const LongitudinalDataset& ds, const StandardizeOptions& options) {
  const auto& X = ds.stacked_X();
  const auto& y = ds.stacked_y();
  const double N = static_cast<double>(ds.N());
  if (ds.N() < 2) throw Error(ErrorKind::data, "standardization needs at least two observations");

  auto sample_sd = [N](const auto& v, double mean) {
    return std::sqrt((v.array() - mean).square().sum() / (N - 1.0));
  };

  std::vector<ColumnScaling> xs(ds.p());
  for (std::size_t j = 0; j < ds.p(); ++j) {
    const auto& name = ds.x_names()[j];
    const bool categorical =
        std::find(options.categorical.begin(), options.categorical.end(), name) != options.categorical.end();
    const auto c = X.col(static_cast<Eigen::Index>(j));
    const double mean = c.mean();
    if (categorical) {
      if (options.center_categorical) xs[j].center = mean;
      continue;
    }
    const double sd = sample_sd(c, mean);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
      throw Error(ErrorKind::data, "column '" + name + "' has zero variance and cannot be standardized");
    xs[j] = {mean, sd};
  }
  ColumnScaling ys{y.mean(), 1.0};
  if (options.scale_response) {
    const double sd = sample_sd(y, ys.center);
    if (!(sd > 0.0)) throw Error(ErrorKind::data, "response has zero variance and cannot be scaled");
    ys.scale = sd;
  }

  // Compose with any existing record so that original values stay recoverable.
  Standardization record{xs, ys};
  if (const auto& prev = ds.standardization()) {
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const auto& o = prev->x[j];
      record.x[j] = {xs[j].center * o.scale + o.center, xs[j].scale * o.scale};
    }
    record.y = {ys.center * prev->y.scale + prev->y.center, ys.scale * prev->y.scale};
  }
  return apply_scaling(ds, xs, ys, record);
}

LongitudinalDataset destandardize(const LongitudinalDataset& ds) {
  const auto& st = ds.standardization();
  if (!st) return ds;
  std::vector<SubjectBlock> blocks;
  blocks.reserve(ds.n());
  for (const auto& b : ds.blocks()) {
    SubjectBlock nb = b;
    for (Eigen::Index j = 0; j < nb.X.cols(); ++j) {
      const auto& s = st->x[static_cast<std::size_t>(j)];
      nb.X.col(j) = nb.X.col(j).array() * s.scale + s.center;
    }
    nb.y = nb.y.array() * st->y.scale + st->y.center;
    blocks.push_back(std::move(nb));
  }
  return LongitudinalDataset(std::move(blocks), ds.x_names(), ds.z_names());
}

// ---------------------------------------------------------------------------

ColumnReductionReport find_linear_combos(const Matrix& X, double rank_tol) {
  if (!(rank_tol > 0.0)) throw Error(ErrorKind::config, "rank_tol must be positive");
  const Eigen::Index m = X.rows();
  const Eigen::Index p = X.cols();
  ColumnReductionReport report;
  if (p == 0) return report;

  const double threshold = rank_tol * X.colwise().norm().maxCoeff();
  Matrix W = X;
  Eigen::Index rank = 0;
  Vector essential;
  double tau = 0.0;
  double beta = 0.0;
  Vector workspace(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double tail_norm = rank < m ? W.col(j).tail(m - rank).norm() : 0.0;
    if (!(tail_norm > threshold)) {
      report.dropped.push_back(static_cast<std::size_t>(j));
      continue;
    }
    report.kept.push_back(static_cast<std::size_t>(j));
    if (rank + 1 < m) {
      auto tail = W.col(j).tail(m - rank);
      essential.resize(m - rank - 1);
      tail.makeHouseholder(essential, tau, beta);
      if (j + 1 < p) {
        W.bottomRightCorner(m - rank, p - j - 1)
            .applyHouseholderOnTheLeft(essential, tau, workspace.data());
      }
    }
    ++rank;
  }

  if (!report.dropped.empty()) {
    std::vector<Eigen::Index> kept_idx(report.kept.begin(), report.kept.end());
    const Matrix Xk = X(Eigen::all, kept_idx);
    const Eigen::ColPivHouseholderQR<Matrix> qr(Xk);
    const Vector norms = Xk.colwise().norm();
    for (auto d : report.dropped) {
      const auto xd = X.col(static_cast<Eigen::Index>(d));
      std::vector<std::pair<std::size_t, double>> deps;
      if (!report.kept.empty()) {
        const Vector coef = qr.solve(xd);
        const double ref = std::max(xd.norm(), threshold);
        for (Eigen::Index k = 0; k < coef.size(); ++k)
          if (std::abs(coef(k)) * norms(k) > 1e-8 * ref)
            deps.emplace_back(report.kept[static_cast<std::size_t>(k)], coef(k));
      }
      report.dependency_sets.push_back(std::move(deps));
    }
  }
  return report;
}

std::pair<LongitudinalDataset, ColumnReductionReport> remove_linear_combos(const LongitudinalDataset& ds,
                                                                           double rank_tol) {
  auto report = find_linear_combos(ds.stacked_X(), rank_tol);
  return {ds.with_columns(report.kept), std::move(report)};
}

}  // namespace emlmlasso
