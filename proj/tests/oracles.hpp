#pragma once
// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the solver code paths it is used to check.

#include "emlmlasso/dataset.hpp"
#include "emlmlasso/em_engine.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using emlmlasso::Matrix;
using emlmlasso::Vector;

// ---------------------------------------------------------------------------
// Penalized least squares by exhaustive sign-pattern enumeration.
//
// For every s in {-1, 0, +1}^p the stationarity conditions on the active set
// A = {j : s_j != 0} are linear:
//   (2 X_A'X_A + 2 lambda (1 - alpha) I) b_A = 2 X_A'y - lambda alpha s_A.
// A candidate is admissible when sign(b_A) = s_A. The objective is convex, so
// the minimum over admissible candidates is the global minimum.
struct LassoOracleResult {
  Vector beta;
  double objective = std::numeric_limits<double>::infinity();
};

inline double pls_value(const Matrix& X, const Vector& y, double lambda, double alpha, const Vector& b) {
  return (y - X * b).squaredNorm() + lambda * (alpha * b.lpNorm<1>() + (1.0 - alpha) * b.squaredNorm());
}

inline LassoOracleResult lasso_oracle(const Matrix& X, const Vector& y, double lambda, double alpha = 1.0) {
  const Eigen::Index p = X.cols();
  LassoOracleResult best;
  std::vector<int> s(static_cast<std::size_t>(p), -1);
  long total = 1;
  for (Eigen::Index j = 0; j < p; ++j) total *= 3;
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j) {
      s[static_cast<std::size_t>(j)] = static_cast<int>(c % 3) - 1;
      c /= 3;
      if (s[static_cast<std::size_t>(j)] != 0) active.push_back(j);
    }
    Vector b = Vector::Zero(p);
    if (!active.empty()) {
      const auto a = static_cast<Eigen::Index>(active.size());
      Matrix XA(X.rows(), a);
      Vector sA(a);
      for (Eigen::Index k = 0; k < a; ++k) {
        XA.col(k) = X.col(active[static_cast<std::size_t>(k)]);
        sA(k) = s[static_cast<std::size_t>(active[static_cast<std::size_t>(k)])];
      }
      const Matrix H = 2.0 * XA.transpose() * XA + 2.0 * lambda * (1.0 - alpha) * Matrix::Identity(a, a);
      const Vector g = 2.0 * XA.transpose() * y - lambda * alpha * sA;
      const Vector bA = H.fullPivLu().solve(g);
      bool ok = true;
      for (Eigen::Index k = 0; k < a; ++k)
        if (bA(k) * sA(k) <= 0.0) ok = false;
      if (!ok) continue;
      for (Eigen::Index k = 0; k < a; ++k) b(active[static_cast<std::size_t>(k)]) = bA(k);
    }
    const double f = pls_value(X, y, lambda, alpha, b);
    if (f < best.objective) best = {b, f};
  }
  return best;
}

// ---------------------------------------------------------------------------
// Marginal log-likelihood from the full N x N covariance, explicit inverse and
// determinant.
inline Matrix dense_covariance(const emlmlasso::LongitudinalDataset& ds, const Matrix& D, double sigma2) {
  const auto N = static_cast<Eigen::Index>(ds.N());
  Matrix V = sigma2 * Matrix::Identity(N, N);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto& b = ds.block(i);
    const auto off = static_cast<Eigen::Index>(ds.offset(i));
    const auto ni = b.y.size();
    if (b.Z.cols() > 0) V.block(off, off, ni, ni) += b.Z * D * b.Z.transpose();
  }
  return V;
}

inline double dense_loglik(const emlmlasso::LongitudinalDataset& ds, const emlmlasso::LmmParams& th) {
  const Matrix V = dense_covariance(ds, th.D, th.sigma2);
  const Vector r = ds.stacked_y() - ds.stacked_X() * th.beta;
  const Eigen::FullPivLU<Matrix> lu(V);
  const Matrix Vinv = lu.inverse();
  double logdet = 0.0;
  const Matrix U = lu.matrixLU();
  for (Eigen::Index k = 0; k < U.rows(); ++k) logdet += std::log(std::abs(U(k, k)));
  const double N = static_cast<double>(ds.N());
  return -0.5 * (N * std::log(2.0 * std::numbers::pi) + logdet + r.dot(Vinv * r));
}

// ---------------------------------------------------------------------------
// Conditional moments of b given y from the joint normal
//   (b, y) ~ N((0, X beta), [[D, D Z'], [Z D, Z D Z' + s2 I]]).
struct Conditional {
  Vector mean;
  Matrix cov;
};

inline Conditional bayes_conditioning(const Vector& y, const Matrix& X, const Matrix& Z, const Vector& beta,
                                      const Matrix& D, double sigma2) {
  const auto ni = y.size();
  const auto q = D.rows();
  Matrix J(q + ni, q + ni);
  J.topLeftCorner(q, q) = D;
  J.topRightCorner(q, ni) = D * Z.transpose();
  J.bottomLeftCorner(ni, q) = Z * D;
  J.bottomRightCorner(ni, ni) = Z * D * Z.transpose() + sigma2 * Matrix::Identity(ni, ni);
  const Matrix Syy_inv = J.bottomRightCorner(ni, ni).inverse();
  const Matrix Sby = J.topRightCorner(q, ni);
  return {Sby * Syy_inv * (y - X * beta), J.topLeftCorner(q, q) - Sby * Syy_inv * Sby.transpose()};
}

// ---------------------------------------------------------------------------
// Direct marginal ML for (beta, sigma2, D) without EM.
//
// beta is profiled out by generalized least squares; the remaining
// parameters are theta = (log sigma2, log L11, L21, log L22, ...) with D = L L'.
// Nelder-Mead locates the optimum, a finite-difference Newton iteration then
// polishes it.
inline Vector gls_beta(const emlmlasso::LongitudinalDataset& ds, const Matrix& D, double sigma2) {
  const auto p = static_cast<Eigen::Index>(ds.p());
  Matrix A = Matrix::Zero(p, p);
  Vector c = Vector::Zero(p);
  for (const auto& b : ds.blocks()) {
    Matrix V = sigma2 * Matrix::Identity(b.y.size(), b.y.size());
    if (b.Z.cols() > 0) V += b.Z * D * b.Z.transpose();
    const Eigen::LDLT<Matrix> ldlt(V);
    A += b.X.transpose() * ldlt.solve(b.X);
    c += b.X.transpose() * ldlt.solve(b.y);
  }
  return A.ldlt().solve(c);
}

inline std::pair<double, Matrix> unpack(const Vector& t, Eigen::Index q) {
  const double sigma2 = std::exp(t(0));
  Matrix L = Matrix::Zero(q, q);
  Eigen::Index k = 1;
  for (Eigen::Index r = 0; r < q; ++r)
    for (Eigen::Index c = 0; c <= r; ++c, ++k) L(r, c) = (r == c) ? std::exp(t(k)) : t(k);
  return {sigma2, L * L.transpose()};
}

inline Vector pack(double sigma2, const Matrix& D) {
  const Eigen::Index q = D.rows();
  Vector t(1 + q * (q + 1) / 2);
  t(0) = std::log(sigma2);
  const Matrix L = D.llt().matrixL();
  Eigen::Index k = 1;
  for (Eigen::Index r = 0; r < q; ++r)
    for (Eigen::Index c = 0; c <= r; ++c, ++k) t(k) = (r == c) ? std::log(L(r, c)) : L(r, c);
  return t;
}

// Per-subject evaluation (LDLT of each block) so the optimizer stays fast.
inline double blockwise_loglik(const emlmlasso::LongitudinalDataset& ds, const Vector& beta, const Matrix& D,
                               double sigma2) {
  double ll = 0.0;
  for (const auto& b : ds.blocks()) {
    Matrix V = sigma2 * Matrix::Identity(b.y.size(), b.y.size());
    if (b.Z.cols() > 0) V += b.Z * D * b.Z.transpose();
    const Eigen::LDLT<Matrix> ldlt(V);
    const Vector r = b.y - b.X * beta;
    const double logdet = ldlt.vectorD().array().log().sum();
    ll -= 0.5 * (static_cast<double>(b.y.size()) * std::log(2.0 * std::numbers::pi) + logdet + r.dot(ldlt.solve(r)));
  }
  return ll;
}

inline double profile_loglik(const emlmlasso::LongitudinalDataset& ds, const Vector& t) {
  const auto [sigma2, D] = unpack(t, static_cast<Eigen::Index>(ds.q()));
  return blockwise_loglik(ds, gls_beta(ds, D, sigma2), D, sigma2);
}

inline Vector nelder_mead(const std::function<double(const Vector&)>& f, Vector x0, double step, int iters) {
  const Eigen::Index d = x0.size();
  std::vector<Vector> pts(static_cast<std::size_t>(d + 1), x0);
  std::vector<double> val(static_cast<std::size_t>(d + 1));
  for (Eigen::Index k = 0; k < d; ++k) pts[static_cast<std::size_t>(k + 1)](k) += step;
  for (std::size_t k = 0; k < pts.size(); ++k) val[k] = f(pts[k]);
  for (int it = 0; it < iters; ++it) {
    std::vector<std::size_t> idx(pts.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
    const std::size_t best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
    if (std::abs(val[worst] - val[best]) < 1e-14 * (1.0 + std::abs(val[best]))) break;
    Vector centroid = Vector::Zero(d);
    for (std::size_t k = 0; k < pts.size(); ++k)
      if (k != worst) centroid += pts[k];
    centroid /= static_cast<double>(d);
    const Vector xr = centroid + (centroid - pts[worst]);
    const double fr = f(xr);
    if (fr < val[best]) {
      const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = f(xe);
      if (fe < fr) pts[worst] = xe, val[worst] = fe;
      else pts[worst] = xr, val[worst] = fr;
    } else if (fr < val[second]) {
      pts[worst] = xr, val[worst] = fr;
    } else {
      const Vector xc = centroid + 0.5 * (pts[worst] - centroid);
      const double fc = f(xc);
      if (fc < val[worst]) {
        pts[worst] = xc, val[worst] = fc;
      } else {
        for (std::size_t k = 0; k < pts.size(); ++k)
          if (k != best) pts[k] = pts[best] + 0.5 * (pts[k] - pts[best]), val[k] = f(pts[k]);
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < pts.size(); ++k)
    if (val[k] < val[best]) best = k;
  return pts[best];
}

// Newton on a scalar function with central-difference derivatives.
inline Vector newton_polish(const std::function<double(const Vector&)>& f, Vector x, int iters) {
  const Eigen::Index d = x.size();
  const double h = 1e-4;
  for (int it = 0; it < iters; ++it) {
    Vector g(d);
    Matrix H(d, d);
    const double f0 = f(x);
    for (Eigen::Index a = 0; a < d; ++a) {
      Vector xp = x, xm = x;
      xp(a) += h;
      xm(a) -= h;
      const double fp = f(xp), fm = f(xm);
      g(a) = (fp - fm) / (2 * h);
      H(a, a) = (fp - 2 * f0 + fm) / (h * h);
      for (Eigen::Index b = 0; b < a; ++b) {
        Vector pp = x, pm = x, mp = x, mm = x;
        pp(a) += h, pp(b) += h;
        pm(a) += h, pm(b) -= h;
        mp(a) -= h, mp(b) += h;
        mm(a) -= h, mm(b) -= h;
        H(a, b) = H(b, a) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h * h);
      }
    }
    const Vector step = H.ldlt().solve(g);
    Vector next = x - step;
    // Backtrack if the full step does not improve.
    double t = 1.0;
    while (f(next) > f0 && t > 1e-6) {
      t *= 0.5;
      next = x - t * step;
    }
    if (f(next) > f0) break;
    x = next;
    if (step.cwiseAbs().maxCoeff() * t < 1e-12) break;
  }
  return x;
}

inline emlmlasso::LmmParams direct_ml(const emlmlasso::LongitudinalDataset& ds, double sigma2_start,
                                      const Matrix& D_start) {
  const auto q = static_cast<Eigen::Index>(ds.q());
  auto negll = [&](const Vector& t) { return -profile_loglik(ds, t); };
  Vector t = pack(sigma2_start, D_start);
  for (int round = 0; round < 4; ++round) t = nelder_mead(negll, t, round == 0 ? 0.3 : 0.02, 4000);
  t = newton_polish(negll, t, 30);
  const auto [sigma2, D] = unpack(t, q);
  return {gls_beta(ds, D, sigma2), sigma2, D};
}

// ---------------------------------------------------------------------------
// Small random LMM used across tests: X ~ N(0,1), Z = [1, t - t_shift], t = 1..n_i.
inline emlmlasso::LongitudinalDataset random_lmm(std::uint64_t seed, std::size_t n, std::size_t n_i, std::size_t p,
                                                 const Vector& beta, const Matrix& D, double sigma2,
                                                 double t_shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const Matrix L = D.llt().matrixL();
  std::vector<emlmlasso::SubjectBlock> blocks;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ni = static_cast<Eigen::Index>(n_i);
    emlmlasso::SubjectBlock blk{"s" + std::to_string(i), Vector(ni), Matrix(ni, static_cast<Eigen::Index>(p)),
                                Matrix(ni, 2)};
    for (Eigen::Index t = 0; t < ni; ++t) {
      for (Eigen::Index j = 0; j < blk.X.cols(); ++j) blk.X(t, j) = z(rng);
      blk.Z(t, 0) = 1.0;
      blk.Z(t, 1) = static_cast<double>(t + 1) - t_shift;
    }
    Vector u(2);
    u << z(rng), z(rng);
    const Vector b = L * u;
    for (Eigen::Index t = 0; t < ni; ++t) blk.y(t) = blk.X.row(t).dot(beta) + blk.Z.row(t).dot(b) + std::sqrt(sigma2) * z(rng);
    blocks.push_back(std::move(blk));
  }
  return emlmlasso::LongitudinalDataset(std::move(blocks));
}

}  // namespace oracle
