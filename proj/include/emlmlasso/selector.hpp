#pragma once

#include "emlmlasso/dataset.hpp"
#include "emlmlasso/em_engine.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace emlmlasso {

enum class Criterion { bic, aic };

const char* to_string(Criterion c);
Criterion criterion_from_string(const std::string& name);

struct InfoScore {
  double bic = 0.0;
  double aic = 0.0;
  int df = 0;  // nonzero beta + q(q+1)/2 + 1
  double loglik = 0.0;
};

/// BIC = -2 l + log(n) df with n the number of subjects; AIC = -2 l + 2 df.
/// l is the observed log-likelihood at the fitted (penalized) parameters.
InfoScore bic_score(const FitReport& fit, const LongitudinalDataset& ds);

struct RegularizationPath {
  std::vector<double> grid;  // in the order supplied
  std::vector<FitReport> fits;
  std::vector<double> bic;
  std::vector<double> aic;
  std::vector<int> df;
  std::vector<char> failed;
  std::vector<std::string> errors;
  Criterion criterion = Criterion::bic;
  std::size_t selected_index = 0;

  std::size_t size() const { return grid.size(); }
};

struct SweepControl {
  EmControl em;
  PenaltySpec penalty;  // family and alpha; lambda comes from the grid
  Criterion criterion = Criterion::bic;
  // Start each fit from the previous (larger lambda) fit's parameters.
  bool warm_start = true;
  // Concurrent fits; only used when warm_start is off.
  int threads = 1;
};

/// Fit every grid value (processed from largest to smallest) and select the
/// criterion minimiser, breaking ties toward the larger lambda. Throws
/// Error(numerical) when every fit fails.
RegularizationPath sweep(const LongitudinalDataset& ds, const std::vector<double>& grid, const SweepControl& ctrl);

/// Unpenalized fit on the columns in `support`; the returned beta has the
/// full length p with zeros off the support.
FitReport refit_support(const LongitudinalDataset& ds, const std::vector<std::size_t>& support,
                        const EmControl& ctrl = {});

struct SelectionResult {
  double selected_lambda = 0.0;
  std::vector<std::size_t> support;
  FitReport selected_fit;
  FitReport refit;
  Vector refit_beta_original;  // refit beta on the unstandardized scale
  RegularizationPath path;
};

SelectionResult select_lambda(const LongitudinalDataset& ds, const std::vector<double>& grid,
                              const SweepControl& ctrl);

std::vector<std::size_t> support_of(const Vector& beta);

// Grids.
std::vector<double> linear_grid(double lo, double hi, std::size_t count);
std::vector<double> log_grid(double lo, double hi, std::size_t count);
/// Log-spaced grid from the data's lambda_max (in the given scale) down to
/// ratio * lambda_max.
std::vector<double> auto_grid(const LongitudinalDataset& ds, LambdaScale scale, std::size_t count,
                              double ratio = 1e-3);
/// The default 100-point grid from 0.001 to 0.5.
std::vector<double> default_grid();

}  // namespace emlmlasso
