#pragma once

#include "emlmlasso/dataset.hpp"
#include "emlmlasso/penalized_ls.hpp"

#include <optional>
#include <string>
#include <vector>

namespace emlmlasso {

/// Parameters of  y_i = X_i beta + Z_i b_i + e_i,  b_i ~ N_q(0, D),
/// e_i ~ N(0, sigma2 I).
struct LmmParams {
  Vector beta;
  double sigma2 = 1.0;
  Matrix D;

  // Throws Error(numerical) unless sigma2 > 0 and D is symmetric with
  // eigenvalues >= -1e-10.
  void validate(std::size_t p, std::size_t q) const;
};

/// Conditional moments of b_i given y_i for one subject.
struct SubjectMoments {
  Vector b_hat;    // E[b_i | y_i]
  Matrix Lambda;   // Cov[b_i | y_i]
  Vector y_tilde;  // y_i - Z_i b_hat
};

struct EStepMoments {
  std::vector<SubjectMoments> subjects;

  // y_tilde of all subjects, stacked in dataset order.
  Vector stacked_y_tilde(const LongitudinalDataset& ds) const;
};

// cond(D) above this switches Lambda_i to the form that avoids D^{-1}.
inline constexpr double kWoodburyCondition = 1e12;
// Eigenvalue floor applied to D after every M-step.
inline constexpr double kEigenFloor = 1e-10;

EStepMoments e_step(const LongitudinalDataset& ds, const LmmParams& params);

struct MStepOptions {
  // Update sigma2 with the previous beta, as the published update is written.
  bool legacy_sigma_update = false;
  PlsOptions pls;
};

struct MStepDiagnostics {
  bool pls_converged = true;
  int pls_sweeps = 0;
  double min_eigenvalue_before_clamp = 0.0;
  double asymmetry_before_symmetrize = 0.0;
};

/// One M-step. `penalty.lambda` is the raw level; the beta subproblem uses
/// 2 * lambda * sigma2_prev.
LmmParams m_step(const LongitudinalDataset& ds, const EStepMoments& moments, const LmmParams& prev,
                 const PenaltySpec& penalty, const MStepOptions& options = {},
                 MStepDiagnostics* diagnostics = nullptr);

/// Marginal Gaussian log-likelihood with Sigma_i = Z_i D Z_i' + sigma2 I.
double observed_loglik(const LongitudinalDataset& ds, const LmmParams& params);

/// Symmetrize and floor eigenvalues at kEigenFloor.
Matrix clamp_covariance(const Matrix& D);

struct EmControl {
  double eps = 1e-6;       // |lp_new / lp_old - 1|
  double abs_eps = 1e-10;  // |lp_new - lp_old|
  int max_iter = 500;
  LambdaScale lambda_scale = LambdaScale::raw;
  bool legacy_sigma_update = false;
  PlsOptions pls;
};

struct FitReport {
  LmmParams params;
  int iterations = 0;
  bool converged = false;
  std::vector<double> penalized_loglik_trace;
  double final_loglik = 0.0;
  double lambda = 0.0;      // as supplied
  double lambda_raw = 0.0;  // after lambda_scale
  PenaltySpec penalty;      // with lambda_raw
  std::vector<std::string> warnings;
};

/// Penalized ML fit of the LMM at a fixed lambda by EM. Without `init`,
/// beta starts from the pooled penalized fit, sigma2 from its residual mean
/// square and D from the identity.
FitReport fit_em(const LongitudinalDataset& ds, const PenaltySpec& penalty,
                 const std::optional<LmmParams>& init = std::nullopt, const EmControl& ctrl = {});

}  // namespace emlmlasso
