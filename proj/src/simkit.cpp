#include "emlmlasso/simkit.hpp"

#include "emlmlasso/errors.hpp"
#include "emlmlasso/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace emlmlasso {

Matrix d_moderate() {
  Matrix D(2, 2);
  D << 1.0, 0.25, 0.25, 1.0;
  return D;
}

Matrix d_large() {
  Matrix D(2, 2);
  D << 9.0, 4.8, 4.8, 4.0;
  return D;
}

ScenarioConfig ScenarioConfig::make(int scenario, std::size_t n, std::size_t n_i, std::uint64_t seed,
                                    std::size_t p_star, const Matrix& D) {
  ScenarioConfig cfg;
  cfg.scenario = scenario;
  cfg.n = n;
  cfg.n_i = n_i;
  cfg.seed = seed;
  if (scenario == 3) {
    cfg.p = 50;
    cfg.p_star = p_star;
  } else {
    cfg.p = 9;
    cfg.p_star = 2;
  }
  cfg.beta_true = Vector::Zero(static_cast<Eigen::Index>(cfg.p));
  cfg.beta_true.head(static_cast<Eigen::Index>(std::min(cfg.p_star, cfg.p))).setOnes();
  cfg.D_true = D.size() > 0 ? D : d_moderate();
  return cfg;
}

void ScenarioConfig::validate() const {
  if (scenario < 1 || scenario > 3) throw Error(ErrorKind::config, "scenario must be 1, 2 or 3");
  if (n < 1 || n_i < 1 || p < 1) throw Error(ErrorKind::config, "n, n_i and p must be positive");
  if (p_star > p) throw Error(ErrorKind::config, "p_star exceeds p");
  if (static_cast<std::size_t>(beta_true.size()) != p) throw Error(ErrorKind::config, "beta_true must have length p");
  if (D_true.rows() != 2 || D_true.cols() != 2) throw Error(ErrorKind::config, "D_true must be 2x2");
  if (!(sigma2_true >= 0.0)) throw Error(ErrorKind::config, "sigma2_true must be non-negative");
  if ((D_true - D_true.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw Error(ErrorKind::config, "D_true must be symmetric");
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(D_true, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff()))
    throw Error(ErrorKind::config, "D_true is not positive semidefinite");
  if (scenario == 2 && n * n_i < 2) throw Error(ErrorKind::config, "scenario 2 needs at least two observations");
}

std::uint64_t replicate_seed(std::uint64_t base, std::uint64_t replicate) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (replicate + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SimulatedData generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.n);
  const auto ni = static_cast<Eigen::Index>(cfg.n_i);
  const auto p = static_cast<Eigen::Index>(cfg.p);
  const Eigen::Index N = n * ni;
  constexpr Eigen::Index q = 2;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Fixed effects, pooled so centering/standardizing uses all N rows.
  Matrix X(N, p);
  for (Eigen::Index r = 0; r < N; ++r)
    for (Eigen::Index j = 0; j < p; ++j) {
      if (cfg.scenario == 2 && j == 0) X(r, j) = unif(rng) < 0.5 ? 1.0 : 0.0;
      else X(r, j) = cfg.covariate_mean + normal(rng);
    }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (cfg.scenario == 2 && j == 0) continue;
    if (cfg.scenario != 2 && !cfg.center) continue;
    X.col(j).array() -= X.col(j).mean();
    if (cfg.scenario == 2) {
      const double sd = std::sqrt(X.col(j).squaredNorm() / static_cast<double>(N - 1));
      if (sd > 0.0) X.col(j) /= sd;
    }
  }

  // Symmetric square root of D for b_i = D^{1/2} z.
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cfg.D_true);
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix D_half = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
  const double sigma = std::sqrt(cfg.sigma2_true);

  Matrix Z(ni, q);
  for (Eigen::Index t = 0; t < ni; ++t) {
    Z(t, 0) = 1.0;
    Z(t, 1) = static_cast<double>(t + 1);
  }

  Matrix b_true(n, q);
  std::vector<SubjectBlock> blocks;
  blocks.reserve(cfg.n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector z(q);
    for (Eigen::Index k = 0; k < q; ++k) z(k) = normal(rng);
    const Vector b = D_half * z;
    b_true.row(i) = b.transpose();
    SubjectBlock blk{"s" + std::to_string(i + 1), Vector(ni), X.middleRows(i * ni, ni), Z};
    Vector eps(ni);
    for (Eigen::Index t = 0; t < ni; ++t) eps(t) = sigma * normal(rng);
    blk.y = blk.X * cfg.beta_true + Z * b + eps;
    blocks.push_back(std::move(blk));
  }
  return {LongitudinalDataset(std::move(blocks), {}, {"(intercept)", "time"}), std::move(b_true)};
}

McSummary run_monte_carlo(const ScenarioConfig& cfg, std::size_t replicates, const std::vector<double>& grid,
                          const SweepControl& ctrl, int threads) {
  cfg.validate();
  if (replicates < 1) throw Error(ErrorKind::config, "at least one replicate is required");
  const auto p = static_cast<Eigen::Index>(cfg.p);

  std::vector<ReplicateResult> results(replicates);
  SweepControl inner = ctrl;
  inner.threads = 1;
  parallel_for(replicates, threads, [&](std::size_t r) {
    auto& res = results[r];
    res.replicate = r;
    res.seed = replicate_seed(cfg.seed, r);
    try {
      ScenarioConfig rc = cfg;
      rc.seed = res.seed;
      const auto sim = generate_scenario(rc);
      const auto path = sweep(sim.data, grid, inner);
      const auto& fit = path.fits[path.selected_index];
      res.selected_index = path.selected_index;
      res.selected_lambda = path.grid[path.selected_index];
      res.beta_hat = fit.params.beta;
      res.em_iterations = fit.iterations;
      res.em_converged = fit.converged;
      for (std::size_t k = 0; k < path.size(); ++k) {
        if (path.failed[k]) continue;
        ++res.fits;
        const auto& tr = path.fits[k].penalized_loglik_trace;
        for (std::size_t t = 1; t < tr.size(); ++t)
          res.max_loglik_decrease = std::max(res.max_loglik_decrease, tr[t - 1] - tr[t]);
      }
      res.squared_error = (res.beta_hat - cfg.beta_true).squaredNorm();
      for (Eigen::Index j = 0; j < p; ++j) {
        const bool truth = cfg.beta_true(j) != 0.0;
        const bool est = res.beta_hat(j) != 0.0;
        if (truth && est) ++res.true_positives;
        if (!truth && !est) ++res.true_negatives;
      }
      res.ok = true;
    } catch (const Error& e) {
      res.error = e.what();
    }
  });

  McSummary s;
  s.zero_proportion = Vector::Zero(p);
  const std::size_t n_true = static_cast<std::size_t>((cfg.beta_true.array() != 0.0).count());
  const std::size_t n_null = cfg.p - n_true;
  double sq_sum = 0.0, norm_sum = 0.0, sens_sum = 0.0, spec_sum = 0.0;
  for (const auto& r : results) {
    if (!r.ok) {
      ++s.failures;
      continue;
    }
    ++s.replicates;
    for (Eigen::Index j = 0; j < p; ++j)
      if (r.beta_hat(j) == 0.0) s.zero_proportion(j) += 1.0;
    sq_sum += r.squared_error;
    norm_sum += std::sqrt(r.squared_error / static_cast<double>(cfg.p));
    if (n_true > 0) sens_sum += static_cast<double>(r.true_positives) / static_cast<double>(n_true);
    if (n_null > 0) spec_sum += static_cast<double>(r.true_negatives) / static_cast<double>(n_null);
  }
  if (s.replicates > 0) {
    const double m = static_cast<double>(s.replicates);
    s.zero_proportion /= m;
    s.rmse = std::sqrt(sq_sum / m);
    s.rmse_replicate_mean = norm_sum / m;
    if (n_true > 0) s.sensitivity = sens_sum / m;
    if (n_null > 0) s.specificity = spec_sum / m;
  }
  s.details = std::move(results);
  return s;
}

std::vector<std::vector<std::size_t>> subject_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) throw Error(ErrorKind::config, "fold count must satisfy 2 <= k <= number of subjects");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t pos = 0; pos < n; ++pos) folds[pos % k].push_back(perm[pos]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<CvFold> kfold_cv(const LongitudinalDataset& ds, std::size_t k, const std::vector<double>& grid,
                             const SweepControl& ctrl, std::uint64_t seed, int threads,
                             const std::optional<Vector>& beta_true) {
  const auto folds = subject_folds(ds.n(), k, seed);
  if (beta_true && static_cast<std::size_t>(beta_true->size()) != ds.p())
    throw Error(ErrorKind::config, "beta_true length does not match the design");
  std::vector<CvFold> out(k);
  SweepControl inner = ctrl;
  inner.threads = 1;
  parallel_for(k, threads, [&](std::size_t f) {
    auto& res = out[f];
    res.fold = f;
    res.test_subjects = folds[f];
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < ds.n(); ++i)
      if (!std::binary_search(folds[f].begin(), folds[f].end(), i)) train.push_back(i);
    try {
      const auto train_ds = ds.with_subjects(train);
      const auto sel = select_lambda(train_ds, grid, inner);
      const Vector& beta = sel.refit.params.beta;
      res.selected_lambda = sel.selected_lambda;
      res.nnz = sel.support.size();
      for (auto i : folds[f]) {
        const auto& b = ds.block(i);
        res.sse += (b.y - b.X * beta).squaredNorm();
        res.test_observations += static_cast<std::size_t>(b.y.size());
      }
      res.mse = res.sse / static_cast<double>(res.test_observations);
      if (beta_true) res.beta_rmse = (beta - *beta_true).norm() / std::sqrt(static_cast<double>(ds.p()));
      res.ok = true;
    } catch (const Error& e) {
      res.error = e.what();
    }
  });
  return out;
}

}  // namespace emlmlasso
