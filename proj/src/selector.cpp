#include "emlmlasso/selector.hpp"

#include "emlmlasso/errors.hpp"
#include "emlmlasso/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace emlmlasso {

const char* to_string(Criterion c) { return c == Criterion::bic ? "bic" : "aic"; }

Criterion criterion_from_string(const std::string& name) {
  if (name == "bic" || name == "BIC") return Criterion::bic;
  if (name == "aic" || name == "AIC") return Criterion::aic;
  throw Error(ErrorKind::config, "unknown criterion '" + name + "'");
}

std::vector<std::size_t> support_of(const Vector& beta) {
  std::vector<std::size_t> s;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (beta(j) != 0.0) s.push_back(static_cast<std::size_t>(j));
  return s;
}

InfoScore bic_score(const FitReport& fit, const LongitudinalDataset& ds) {
  const auto q = static_cast<int>(ds.q());
  InfoScore s;
  s.df = static_cast<int>(support_of(fit.params.beta).size()) + q * (q + 1) / 2 + 1;
  s.loglik = observed_loglik(ds, fit.params);
  s.bic = -2.0 * s.loglik + std::log(static_cast<double>(ds.n())) * s.df;
  s.aic = -2.0 * s.loglik + 2.0 * s.df;
  return s;
}

RegularizationPath sweep(const LongitudinalDataset& ds, const std::vector<double>& grid, const SweepControl& ctrl) {
  if (grid.empty()) throw Error(ErrorKind::usage, "lambda grid is empty");
  for (double l : grid)
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorKind::usage, "lambda grid values must be finite and >= 0");

  const std::size_t m = grid.size();
  RegularizationPath path;
  path.grid = grid;
  path.criterion = ctrl.criterion;
  path.fits.resize(m);
  path.bic.assign(m, std::numeric_limits<double>::quiet_NaN());
  path.aic.assign(m, std::numeric_limits<double>::quiet_NaN());
  path.df.assign(m, 0);
  path.failed.assign(m, 0);
  path.errors.assign(m, {});

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return grid[a] > grid[b]; });

  auto fit_one = [&](std::size_t idx, const std::optional<LmmParams>& init) {
    try {
      path.fits[idx] = fit_em(ds, ctrl.penalty.with_lambda(grid[idx]), init, ctrl.em);
      const auto score = bic_score(path.fits[idx], ds);
      path.bic[idx] = score.bic;
      path.aic[idx] = score.aic;
      path.df[idx] = score.df;
    } catch (const Error& e) {
      path.failed[idx] = 1;
      path.errors[idx] = e.what();
    }
  };

  if (ctrl.warm_start) {
    std::optional<LmmParams> init;
    for (auto idx : order) {
      fit_one(idx, init);
      if (!path.failed[idx]) init = path.fits[idx].params;
    }
  } else {
    parallel_for(m, ctrl.threads, [&](std::size_t k) { fit_one(order[k], std::nullopt); });
  }

  const auto& score = ctrl.criterion == Criterion::bic ? path.bic : path.aic;
  bool found = false;
  for (auto idx : order) {  // descending lambda: strict '<' keeps the larger lambda on ties
    if (path.failed[idx]) continue;
    if (!found || score[idx] < score[path.selected_index]) {
      path.selected_index = idx;
      found = true;
    }
  }
  if (!found) throw Error(ErrorKind::numerical, "every fit on the lambda grid failed: " + path.errors.front());
  return path;
}

FitReport refit_support(const LongitudinalDataset& ds, const std::vector<std::size_t>& support,
                        const EmControl& ctrl) {
  std::vector<std::size_t> cols = support;
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  const auto restricted = ds.with_columns(cols);
  auto fit = fit_em(restricted, PenaltySpec::lasso(0.0), std::nullopt, ctrl);
  Vector full = Vector::Zero(static_cast<Eigen::Index>(ds.p()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    full(static_cast<Eigen::Index>(cols[k])) = fit.params.beta(static_cast<Eigen::Index>(k));
  fit.params.beta = std::move(full);
  return fit;
}

SelectionResult select_lambda(const LongitudinalDataset& ds, const std::vector<double>& grid,
                              const SweepControl& ctrl) {
  SelectionResult res;
  res.path = sweep(ds, grid, ctrl);
  res.selected_fit = res.path.fits[res.path.selected_index];
  res.selected_lambda = res.path.grid[res.path.selected_index];
  res.support = support_of(res.selected_fit.params.beta);
  EmControl refit_ctrl = ctrl.em;
  refit_ctrl.lambda_scale = LambdaScale::raw;
  res.refit = refit_support(ds, res.support, refit_ctrl);
  res.refit_beta_original = ds.beta_to_original_scale(res.refit.params.beta);
  return res;
}

std::vector<double> linear_grid(double lo, double hi, std::size_t count) {
  if (count == 0) throw Error(ErrorKind::usage, "grid length must be positive");
  if (count == 1) return {lo};
  std::vector<double> g(count);
  for (std::size_t k = 0; k < count; ++k)
    g[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
  return g;
}

std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > 0.0)) throw Error(ErrorKind::usage, "log grid bounds must be positive");
  auto g = linear_grid(std::log(lo), std::log(hi), count);
  for (auto& v : g) v = std::exp(v);
  return g;
}

std::vector<double> auto_grid(const LongitudinalDataset& ds, LambdaScale scale, std::size_t count, double ratio) {
  // beta stays at zero along the EM path while every M-step threshold
  // 2 lambda_raw s2_prev covers max_j |2 x_j' y_tilde|, and the starting
  // pooled fit is zero while 2 lambda_raw s2_0 covers max_j |2 x_j' y|. Follow
  // the null-model trajectory and keep the largest requirement.
  const auto& X = ds.stacked_X();
  const auto& y = ds.stacked_y();
  const double N = static_cast<double>(ds.N());
  const double s2 = std::max(y.squaredNorm() / N, 1e-200);
  double top = lambda_max(X, y) / (2.0 * s2);

  LmmParams th{Vector::Zero(static_cast<Eigen::Index>(ds.p())), std::max(y.squaredNorm() / N, 1e-10 * s2),
               Matrix::Identity(static_cast<Eigen::Index>(ds.q()), static_cast<Eigen::Index>(ds.q()))};
  double ll = observed_loglik(ds, th);
  for (int k = 0; k < 1000; ++k) {
    const auto moments = e_step(ds, th);
    const double need = lambda_max(X, moments.stacked_y_tilde(ds)) / (2.0 * th.sigma2);
    top = std::max(top, need);
    th = m_step(ds, moments, th, PenaltySpec::lasso(2.0 * need + 1.0));
    const double next = observed_loglik(ds, th);
    const bool done = std::abs(next - ll) <= 1e-12 * std::max(1.0, std::abs(ll));
    ll = next;
    if (done) break;
  }
  if (scale == LambdaScale::per_obs) top /= 2.0 * N;
  if (!(top > 0.0) || !std::isfinite(top))
    throw Error(ErrorKind::data, "lambda_max is zero; cannot build an automatic grid");
  auto g = log_grid(top * ratio, top, count);
  std::reverse(g.begin(), g.end());
  return g;
}

std::vector<double> default_grid() { return linear_grid(0.001, 0.5, 100); }

}  // namespace emlmlasso
