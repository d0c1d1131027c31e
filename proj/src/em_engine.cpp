#include "emlmlasso/em_engine.hpp"

#include "emlmlasso/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace emlmlasso {

void LmmParams::validate(std::size_t p, std::size_t q) const {
  if (static_cast<std::size_t>(beta.size()) != p)
    throw Error(ErrorKind::data, "beta has length " + std::to_string(beta.size()) + ", expected " + std::to_string(p));
  if (static_cast<std::size_t>(D.rows()) != q || static_cast<std::size_t>(D.cols()) != q)
    throw Error(ErrorKind::data, "D must be " + std::to_string(q) + "x" + std::to_string(q));
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw Error(ErrorKind::numerical, "sigma2 must be positive and finite");
  if (!beta.allFinite() || !D.allFinite()) throw Error(ErrorKind::numerical, "non-finite parameter values");
  if (q == 0) return;
  const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
  if ((D - D.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw Error(ErrorKind::numerical, "D is not symmetric");
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(D, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10)
    throw Error(ErrorKind::numerical, "D is not positive semidefinite");
}

Vector EStepMoments::stacked_y_tilde(const LongitudinalDataset& ds) const {
  Vector out(static_cast<Eigen::Index>(ds.N()));
  for (std::size_t i = 0; i < subjects.size(); ++i)
    out.segment(static_cast<Eigen::Index>(ds.offset(i)), subjects[i].y_tilde.size()) = subjects[i].y_tilde;
  return out;
}

Matrix clamp_covariance(const Matrix& D) {
  if (D.size() == 0) return D;
  const Matrix sym = 0.5 * (D + D.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw Error(ErrorKind::numerical, "eigendecomposition of D failed");
  if (eig.eigenvalues().minCoeff() >= kEigenFloor) return sym;
  const Vector vals = eig.eigenvalues().cwiseMax(kEigenFloor);
  Matrix out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

namespace {

// Lambda_i = D - D Z' (Z D Z' + sigma2 I)^{-1} Z D
Matrix woodbury_lambda(const Matrix& D, const Matrix& Z, double sigma2) {
  Matrix S = Z * D * Z.transpose();
  S.diagonal().array() += sigma2;
  const Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::numerical, "E-step: marginal covariance of a subject is not positive definite");
  const Matrix ZD = Z * D;
  Matrix L = D - ZD.transpose() * llt.solve(ZD);
  return 0.5 * (L + L.transpose());
}

}  // namespace

EStepMoments e_step(const LongitudinalDataset& ds, const LmmParams& params) {
  const auto q = static_cast<Eigen::Index>(ds.q());
  params.validate(ds.p(), ds.q());

  EStepMoments out;
  out.subjects.reserve(ds.n());

  bool woodbury = false;
  Matrix D_inv;
  if (q > 0) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(params.D, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    woodbury = !(lo > 0.0) || hi / lo > kWoodburyCondition;
    if (!woodbury) D_inv = params.D.llt().solve(Matrix::Identity(q, q));
  }

  const double s2 = params.sigma2;
  for (const auto& b : ds.blocks()) {
    SubjectMoments m;
    const Vector r = b.y - b.X * params.beta;
    if (q == 0) {
      m.b_hat = Vector(0);
      m.Lambda = Matrix(0, 0);
      m.y_tilde = b.y;
      out.subjects.push_back(std::move(m));
      continue;
    }
    bool done = false;
    if (!woodbury) {
      Matrix P = D_inv;
      P.noalias() += b.Z.transpose() * b.Z / s2;
      const Eigen::LLT<Matrix> llt(P);
      if (llt.info() == Eigen::Success) {
        m.Lambda = llt.solve(Matrix::Identity(q, q));
        m.Lambda = 0.5 * (m.Lambda + m.Lambda.transpose());
        done = true;
      }
    }
    if (!done) m.Lambda = woodbury_lambda(params.D, b.Z, s2);
    m.b_hat = m.Lambda * (b.Z.transpose() * r) / s2;
    m.y_tilde = b.y - b.Z * m.b_hat;
    out.subjects.push_back(std::move(m));
  }
  return out;
}

LmmParams m_step(const LongitudinalDataset& ds, const EStepMoments& moments, const LmmParams& prev,
                 const PenaltySpec& penalty, const MStepOptions& options, MStepDiagnostics* diagnostics) {
  if (moments.subjects.size() != ds.n()) throw Error(ErrorKind::data, "M-step: moments do not match dataset");
  const auto q = static_cast<Eigen::Index>(ds.q());
  const auto& X = ds.stacked_X();
  const Vector y_tilde = moments.stacked_y_tilde(ds);

  const double lambda1 = 2.0 * penalty.lambda * prev.sigma2;
  const auto sol = solve_pls(X, y_tilde, penalty.with_lambda(lambda1), prev.beta, options.pls);

  LmmParams next;
  next.beta = sol.beta;

  const Vector& beta_for_sigma = options.legacy_sigma_update ? prev.beta : next.beta;
  double trace = 0.0;
  Matrix D_sum = Matrix::Zero(q, q);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto& m = moments.subjects[i];
    const auto& Z = ds.block(i).Z;
    if (q > 0) {
      trace += (Z * m.Lambda * Z.transpose()).trace();
      D_sum.noalias() += m.b_hat * m.b_hat.transpose();
      D_sum += m.Lambda;
    }
  }
  const double rss = (y_tilde - X * beta_for_sigma).squaredNorm();
  const double N = static_cast<double>(ds.N());
  const double floor = 1e-10 * std::max(ds.stacked_y().squaredNorm() / N, 1e-200);
  next.sigma2 = std::max((rss + trace) / N, floor);

  const Matrix D_raw = D_sum / static_cast<double>(ds.n());
  if (diagnostics) {
    diagnostics->pls_converged = sol.converged;
    diagnostics->pls_sweeps = sol.iterations;
    diagnostics->asymmetry_before_symmetrize =
        q > 0 ? (D_raw - D_raw.transpose()).cwiseAbs().maxCoeff() : 0.0;
    diagnostics->min_eigenvalue_before_clamp =
        q > 0 ? Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (D_raw + D_raw.transpose()), Eigen::EigenvaluesOnly)
                    .eigenvalues()
                    .minCoeff()
              : 0.0;
  }
  next.D = clamp_covariance(D_raw);
  return next;
}

double observed_loglik(const LongitudinalDataset& ds, const LmmParams& params) {
  params.validate(ds.p(), ds.q());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (const auto& b : ds.blocks()) {
    const auto ni = b.y.size();
    Matrix S = b.Z * params.D * b.Z.transpose();
    S.diagonal().array() += params.sigma2;
    const Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::numerical, "marginal covariance of subject '" + b.subject_id + "' is not positive definite");
    const auto L = llt.matrixL();
    const Vector diag = llt.matrixLLT().diagonal();
    if ((diag.array() <= 0.0).any())
      throw Error(ErrorKind::numerical, "marginal covariance of subject '" + b.subject_id + "' is singular");
    const double logdet = 2.0 * diag.array().log().sum();
    const Vector w = L.solve(b.y - b.X * params.beta);
    total += -0.5 * (static_cast<double>(ni) * log2pi + logdet + w.squaredNorm());
  }
  return total;
}

FitReport fit_em(const LongitudinalDataset& ds, const PenaltySpec& penalty, const std::optional<LmmParams>& init,
                 const EmControl& ctrl) {
  penalty.validate();
  if (!(ctrl.eps > 0.0) || ctrl.max_iter < 1) throw Error(ErrorKind::config, "fit_em: invalid control settings");
  const auto q = static_cast<Eigen::Index>(ds.q());

  FitReport rep;
  rep.lambda = penalty.lambda;
  rep.lambda_raw = effective_lambda(penalty.lambda, ctrl.lambda_scale, ds.N());
  rep.penalty = penalty.with_lambda(rep.lambda_raw);

  const auto& X = ds.stacked_X();
  const auto& y = ds.stacked_y();
  const double N = static_cast<double>(ds.N());

  LmmParams params;
  if (init) {
    params = *init;
    params.validate(ds.p(), ds.q());
    params.D = clamp_covariance(params.D);
  } else {
    const double s2 = std::max(y.squaredNorm() / N, 1e-200);
    const auto start = solve_pls(X, y, rep.penalty.with_lambda(2.0 * rep.lambda_raw * s2), std::nullopt, ctrl.pls);
    params.beta = start.beta;
    params.sigma2 = std::max((y - X * params.beta).squaredNorm() / N, 1e-10 * s2);
    params.D = Matrix::Identity(q, q);
  }

  MStepOptions mopt{ctrl.legacy_sigma_update, ctrl.pls};
  double lp = observed_loglik(ds, params) - rep.penalty.value(params.beta);
  rep.penalized_loglik_trace.push_back(lp);
  bool pls_warned = false;
  for (int k = 1; k <= ctrl.max_iter; ++k) {
    const auto moments = e_step(ds, params);
    MStepDiagnostics diag;
    params = m_step(ds, moments, params, rep.penalty, mopt, &diag);
    if (!diag.pls_converged && !pls_warned) {
      rep.warnings.push_back("coordinate descent hit max_sweeps at EM iteration " + std::to_string(k));
      pls_warned = true;
    }
    const double next = observed_loglik(ds, params) - rep.penalty.value(params.beta);
    rep.penalized_loglik_trace.push_back(next);
    rep.iterations = k;
    const bool rel_ok = lp != 0.0 && std::abs(next / lp - 1.0) < ctrl.eps;
    const bool abs_ok = std::abs(next - lp) < ctrl.abs_eps;
    lp = next;
    if (rel_ok || abs_ok) {
      rep.converged = true;
      break;
    }
  }
  if (!rep.converged) rep.warnings.push_back("EM reached max_iter without meeting the stopping rule");
  rep.params = std::move(params);
  rep.final_loglik = observed_loglik(ds, rep.params);
  return rep;
}

}  // namespace emlmlasso
