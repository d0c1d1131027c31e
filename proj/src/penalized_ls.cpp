#include "emlmlasso/penalized_ls.hpp"

#include "emlmlasso/errors.hpp"

#include <algorithm>
#include <cmath>

namespace emlmlasso {

const char* to_string(PenaltyFamily family) {
  switch (family) {
    case PenaltyFamily::lasso: return "lasso";
    case PenaltyFamily::ridge: return "ridge";
    case PenaltyFamily::elastic_net: return "elastic_net";
  }
  return "unknown";
}

PenaltyFamily penalty_family_from_string(const std::string& name) {
  if (name == "lasso") return PenaltyFamily::lasso;
  if (name == "ridge") return PenaltyFamily::ridge;
  if (name == "elastic_net" || name == "enet" || name == "elastic-net") return PenaltyFamily::elastic_net;
  throw Error(ErrorKind::config, "unknown penalty family '" + name + "'");
}

void PenaltySpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw Error(ErrorKind::config, "penalty lambda must be finite and non-negative");
  switch (family) {
    case PenaltyFamily::lasso:
      if (alpha != 1.0) throw Error(ErrorKind::config, "lasso penalty requires alpha = 1");
      break;
    case PenaltyFamily::ridge:
      if (alpha != 0.0) throw Error(ErrorKind::config, "ridge penalty requires alpha = 0");
      break;
    case PenaltyFamily::elastic_net:
      if (!(alpha > 0.0 && alpha < 1.0))
        throw Error(ErrorKind::config, "elastic-net penalty requires 0 < alpha < 1");
      break;
  }
}

double PenaltySpec::value(const Vector& beta) const {
  if (lambda == 0.0) return 0.0;
  return lambda * (alpha * beta.lpNorm<1>() + (1.0 - alpha) * beta.squaredNorm());
}

const char* to_string(LambdaScale scale) { return scale == LambdaScale::raw ? "raw" : "per_obs"; }

LambdaScale lambda_scale_from_string(const std::string& name) {
  if (name == "raw") return LambdaScale::raw;
  if (name == "per_obs") return LambdaScale::per_obs;
  throw Error(ErrorKind::config, "unknown lambda scale '" + name + "' (expected raw or per_obs)");
}

double effective_lambda(double lambda, LambdaScale scale, std::size_t n_obs) {
  return scale == LambdaScale::raw ? lambda : 2.0 * static_cast<double>(n_obs) * lambda;
}

double pls_objective(const Matrix& X, const Vector& y, const PenaltySpec& penalty, const Vector& beta) {
  return (y - X * beta).squaredNorm() + penalty.value(beta);
}

double kkt_check(const Matrix& X, const Vector& y, const PenaltySpec& penalty, const Vector& beta) {
  const Vector grad = 2.0 * X.transpose() * (y - X * beta);
  const double l1 = penalty.lambda * penalty.alpha;
  const double l2 = penalty.lambda * (1.0 - penalty.alpha);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double g = grad(j) - 2.0 * l2 * beta(j);
    const double v = beta(j) == 0.0 ? std::max(std::abs(g) - l1, 0.0)
                                     : std::abs(g - l1 * (beta(j) > 0.0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

double lambda_max(const Matrix& X, const Vector& y) {
  if (X.cols() == 0) return 0.0;
  return (2.0 * X.transpose() * y).cwiseAbs().maxCoeff();
}

PlsSolution solve_pls(const Matrix& X, const Vector& y, const PenaltySpec& penalty,
                      const std::optional<Vector>& warm_start, const PlsOptions& options) {
  penalty.validate();
  if (X.rows() != y.size()) throw Error(ErrorKind::data, "solve_pls: X rows and y length differ");
  if (!(options.tol > 0.0)) throw Error(ErrorKind::config, "solve_pls: tol must be positive");
  const Eigen::Index p = X.cols();

  PlsSolution sol;
  sol.beta = Vector::Zero(p);
  if (warm_start) {
    if (warm_start->size() != p) throw Error(ErrorKind::data, "solve_pls: warm start has wrong length");
    sol.beta = *warm_start;
  }
  if (p == 0) {
    sol.objective = y.squaredNorm();
    sol.converged = true;
    return sol;
  }

  const double l1 = penalty.lambda * penalty.alpha;
  const double l2 = penalty.lambda * (1.0 - penalty.alpha);
  const Vector xx = X.colwise().squaredNorm();
  const double zero_cut = 1e-24 * std::max(1.0, xx.maxCoeff());
  std::vector<char> is_zero(static_cast<std::size_t>(p), 0);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (xx(j) <= zero_cut) {
      is_zero[static_cast<std::size_t>(j)] = 1;
      sol.zero_columns.push_back(static_cast<int>(j));
      sol.beta(j) = 0.0;
    }
  }
  const double kkt_threshold = options.kkt_tol * std::max(1.0, lambda_max(X, y));

  Vector& beta = sol.beta;
  Vector r = y - X * beta;

  auto update = [&](Eigen::Index j) {
    if (is_zero[static_cast<std::size_t>(j)]) return 0.0;
    const double old = beta(j);
    const double z = 2.0 * (X.col(j).dot(r) + xx(j) * old);
    const double next = soft_threshold(z, l1) / (2.0 * xx(j) + 2.0 * l2);
    const double d = next - old;
    if (d != 0.0) {
      r.noalias() -= d * X.col(j);
      beta(j) = next;
    }
    return std::abs(d);
  };
  auto record = [&] {
    if (options.record_objective) sol.objective_trace.push_back(r.squaredNorm() + penalty.value(beta));
  };

  std::vector<Eigen::Index> active;
  while (sol.iterations < options.max_sweeps) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) max_change = std::max(max_change, update(j));
    ++sol.iterations;
    record();

    if (max_change < options.tol) {
      r = y - X * beta;
      sol.kkt_residual = kkt_check(X, y, penalty, beta);
      if (sol.kkt_residual <= kkt_threshold) {
        sol.converged = true;
        break;
      }
      if (max_change == 0.0) break;  // fixed point in floating point; cannot improve further
      continue;
    }

    active.clear();
    for (Eigen::Index j = 0; j < p; ++j)
      if (beta(j) != 0.0) active.push_back(j);
    while (!active.empty() && sol.iterations < options.max_sweeps) {
      double change = 0.0;
      for (auto j : active) change = std::max(change, update(j));
      ++sol.iterations;
      record();
      if (change < options.tol) break;
    }
  }

  if (!sol.converged) sol.kkt_residual = kkt_check(X, y, penalty, beta);
  sol.objective = pls_objective(X, y, penalty, beta);
  return sol;
}

}  // namespace emlmlasso
