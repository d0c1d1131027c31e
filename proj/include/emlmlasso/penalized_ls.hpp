#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace emlmlasso {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class PenaltyFamily { lasso, ridge, elastic_net };

const char* to_string(PenaltyFamily family);
PenaltyFamily penalty_family_from_string(const std::string& name);

/// Elastic-net family penalty  lambda * [alpha*|b|_1 + (1-alpha)*|b|_2^2].
/// Lasso fixes alpha = 1, ridge alpha = 0, elastic net 0 < alpha < 1.
struct PenaltySpec {
  PenaltyFamily family = PenaltyFamily::lasso;
  double alpha = 1.0;
  double lambda = 0.0;

  static PenaltySpec lasso(double lambda) { return {PenaltyFamily::lasso, 1.0, lambda}; }
  static PenaltySpec ridge(double lambda) { return {PenaltyFamily::ridge, 0.0, lambda}; }
  static PenaltySpec elastic_net(double alpha, double lambda) {
    return {PenaltyFamily::elastic_net, alpha, lambda};
  }

  PenaltySpec with_lambda(double l) const { return {family, alpha, l}; }

  // Throws Error(config) when family/alpha/lambda disagree.
  void validate() const;

  // lambda * Psi(beta)
  double value(const Vector& beta) const;
};

/// How a user-facing lambda maps to the penalty on the residual sum of
/// squares. `per_obs` multiplies by 2N, matching solvers that minimise
/// RSS/(2N) + lambda*Psi.
enum class LambdaScale { raw, per_obs };

const char* to_string(LambdaScale scale);
LambdaScale lambda_scale_from_string(const std::string& name);
double effective_lambda(double lambda, LambdaScale scale, std::size_t n_obs);

struct PlsOptions {
  double tol = 1e-9;  // max |beta_j change| over a sweep
  int max_sweeps = 10000;
  double kkt_tol = 1e-6;  // relative to max(1, lambda_max(X, y))
  bool record_objective = false;
};

struct PlsSolution {
  Vector beta;
  double objective = 0.0;
  int iterations = 0;  // coordinate sweeps, full or active-set
  double kkt_residual = 0.0;
  bool converged = false;
  std::vector<int> zero_columns;       // columns with x_j'x_j == 0, forced to 0
  std::vector<double> objective_trace;  // per sweep when record_objective
};

/// sign(z) * max(|z| - gamma, 0)
inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

/// (y - X b)'(y - X b) + lambda * Psi(b)
double pls_objective(const Matrix& X, const Vector& y, const PenaltySpec& penalty, const Vector& beta);

/// Largest violation of the subgradient optimality conditions of
/// pls_objective at beta.
double kkt_check(const Matrix& X, const Vector& y, const PenaltySpec& penalty, const Vector& beta);

/// Smallest lambda for which the lasso solution is identically zero:
/// max_j |2 x_j'y|.
double lambda_max(const Matrix& X, const Vector& y);

/// Cyclic coordinate descent with active-set iterations and a confirming full
/// sweep. Converged when a full sweep moves no coefficient by more than tol
/// and the KKT residual is within kkt_tol; otherwise the last iterate is
/// returned with converged = false after max_sweeps.
PlsSolution solve_pls(const Matrix& X, const Vector& y, const PenaltySpec& penalty,
                      const std::optional<Vector>& warm_start = std::nullopt, const PlsOptions& options = {});

}  // namespace emlmlasso
