#include "emlmlasso/errors.hpp"
#include "emlmlasso/report.hpp"
#include "emlmlasso/simkit.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace emlmlasso;

namespace {

SweepControl per_obs_control() {
  SweepControl c;
  c.em.lambda_scale = LambdaScale::per_obs;
  return c;
}

}  // namespace

TEST_CASE("scenario shapes and covariance presets") {
  const auto s1 = ScenarioConfig::make(1, 30, 5, 1);
  const auto sim = generate_scenario(s1);
  CHECK(sim.data.N() == 150);
  CHECK(sim.data.p() == 9);
  CHECK(sim.data.q() == 2);
  CHECK(s1.D_true == d_moderate());
  CHECK(s1.beta_true.head(2).isOnes());
  CHECK(s1.beta_true.tail(7).isZero());
  CHECK(d_moderate()(0, 1) == 0.25);
  CHECK(d_large()(0, 0) == 9.0);
  CHECK(d_large()(0, 1) == 4.8);
  CHECK(d_large()(1, 1) == 4.0);

  const auto s3 = ScenarioConfig::make(3, 30, 5, 1, 5, d_large());
  CHECK(s3.p == 50);
  CHECK(s3.beta_true.sum() == 5.0);
  CHECK(s3.beta_true.head(5).isOnes());
  CHECK(generate_scenario(s3).data.p() == 50);
  // Z = [1, 1..n_i]
  CHECK(sim.data.block(0).Z(4, 1) == 5.0);
  CHECK(sim.data.block(0).Z(4, 0) == 1.0);
}

TEST_CASE("scenario covariates: centered in 1 and 3, standardized in 2") {
  const auto d1 = generate_scenario(ScenarioConfig::make(1, 40, 5, 3)).data;
  CHECK(d1.stacked_X().colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  const auto d2 = generate_scenario(ScenarioConfig::make(2, 40, 5, 3)).data;
  const auto& X2 = d2.stacked_X();
  for (Eigen::Index r = 0; r < X2.rows(); ++r) CHECK((X2(r, 0) == 0.0 || X2(r, 0) == 1.0));
  for (Eigen::Index j = 1; j < 9; ++j) {
    CHECK(std::abs(X2.col(j).mean()) < 1e-12);
    CHECK(X2.col(j).squaredNorm() / 199.0 == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("noiseless degenerate scenario gives y = 0") {
  auto cfg = ScenarioConfig::make(1, 5, 3, 9);
  cfg.sigma2_true = 0.0;
  cfg.beta_true.setZero();
  cfg.D_true = Matrix::Zero(2, 2);
  const auto sim = generate_scenario(cfg);
  CHECK(sim.data.stacked_y().isZero(0.0));
}

TEST_CASE("generator moments") {
  auto cfg = ScenarioConfig::make(1, 20000, 5, 12345);
  cfg.p = 1;
  cfg.p_star = 1;
  cfg.beta_true = Vector::Zero(1);
  cfg.center = false;
  const auto sim = generate_scenario(cfg);
  const auto& x = sim.data.stacked_X().col(0);
  const double n = static_cast<double>(x.size());
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / (n - 1);
  CHECK(std::abs(mean - 6.0) < 3.0 * std::sqrt(1.0 / n));
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));

  const Matrix& B = sim.b_true;
  const double m = static_cast<double>(B.rows());
  const Matrix C = (B.transpose() * B) / m;
  const Matrix& D = cfg.D_true;
  for (Eigen::Index a = 0; a < 2; ++a) {
    CHECK(std::abs(B.col(a).mean()) < 3.0 * std::sqrt(D(a, a) / m));
    for (Eigen::Index b = 0; b < 2; ++b) {
      const double se = std::sqrt((D(a, a) * D(b, b) + D(a, b) * D(a, b)) / m);
      CHECK(std::abs(C(a, b) - D(a, b)) < 3.0 * se);
    }
  }
}

TEST_CASE("configuration validation") {
  auto bad = ScenarioConfig::make(3, 30, 5, 1, 60);
  CHECK_THROWS_AS(bad.validate(), Error);
  try {
    generate_scenario(bad);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  auto nonpsd = ScenarioConfig::make(1, 30, 5, 1);
  nonpsd.D_true(0, 1) = nonpsd.D_true(1, 0) = 3.0;
  CHECK_THROWS_AS(nonpsd.validate(), Error);
  auto zero = ScenarioConfig::make(1, 0, 5, 1);
  CHECK_THROWS_AS(zero.validate(), Error);
  CHECK_THROWS_AS(ScenarioConfig::make(4, 30, 5, 1).validate(), Error);
}

TEST_CASE("seeded determinism") {
  const auto cfg = ScenarioConfig::make(1, 10, 4, 31);
  const auto a = generate_scenario(cfg), b = generate_scenario(cfg);
  CHECK(a.data.stacked_X() == b.data.stacked_X());
  CHECK(a.data.stacked_y() == b.data.stacked_y());
  CHECK(replicate_seed(1, 0) != replicate_seed(1, 1));
  CHECK(replicate_seed(1, 0) != replicate_seed(2, 0));
  CHECK(replicate_seed(7, 3) == replicate_seed(7, 3));

  const auto grid = linear_grid(0.005, 0.5, 15);
  const auto m1 = run_monte_carlo(cfg, 4, grid, per_obs_control(), 1);
  const auto m2 = run_monte_carlo(cfg, 4, grid, per_obs_control(), 3);
  CHECK(mc_summary_csv(m1, cfg) == mc_summary_csv(m2, cfg));
  CHECK(mc_replicates_csv(m1) == mc_replicates_csv(m2));
}

TEST_CASE("Monte Carlo summary arithmetic") {
  const auto cfg = ScenarioConfig::make(3, 20, 5, 8, 5);
  const auto s = run_monte_carlo(cfg, 3, linear_grid(0.005, 0.5, 10), per_obs_control());
  REQUIRE(s.replicates == 3);
  CHECK(s.failures == 0);
  double sq = 0.0, root = 0.0, spec = 0.0;
  for (const auto& r : s.details) {
    sq += r.squared_error;
    root += std::sqrt(r.squared_error / 50.0);
    spec += static_cast<double>(r.true_negatives) / 45.0;
  }
  CHECK(s.rmse == doctest::Approx(std::sqrt(sq / 3.0)));
  CHECK(s.rmse_replicate_mean == doctest::Approx(root / 3.0));
  REQUIRE(s.specificity);
  REQUIRE(s.sensitivity);
  CHECK(*s.specificity == doctest::Approx(spec / 3.0));
  CHECK(*s.sensitivity >= 0.0);
  CHECK(*s.sensitivity <= 1.0);
  for (Eigen::Index j = 0; j < s.zero_proportion.size(); ++j) {
    CHECK(s.zero_proportion(j) >= 0.0);
    CHECK(s.zero_proportion(j) <= 1.0);
  }
}

TEST_CASE("null model: sensitivity undefined, specificity 1") {
  auto cfg = ScenarioConfig::make(1, 20, 5, 4);
  cfg.beta_true.setZero();
  const auto s = run_monte_carlo(cfg, 2, {1e3, 2e3}, per_obs_control());
  CHECK_FALSE(s.sensitivity.has_value());
  REQUIRE(s.specificity.has_value());
  CHECK(*s.specificity == 1.0);
}

TEST_CASE("no penalty on a full-rank design: sensitivity 1") {
  const auto cfg = ScenarioConfig::make(3, 30, 5, 6, 5);
  const auto s = run_monte_carlo(cfg, 2, {0.0}, per_obs_control());
  REQUIRE(s.sensitivity.has_value());
  CHECK(*s.sensitivity == 1.0);
}

TEST_CASE("single replicate") {
  const auto cfg = ScenarioConfig::make(1, 20, 5, 4);
  const auto s = run_monte_carlo(cfg, 1, default_grid(), per_obs_control());
  CHECK(s.details.size() == 1);
  CHECK(s.replicates == 1);
  CHECK_THROWS_AS(run_monte_carlo(cfg, 0, default_grid(), per_obs_control()), Error);
}

TEST_CASE("subject folds partition the subjects") {
  for (std::size_t k : {2u, 3u, 5u, 10u}) {
    const auto folds = subject_folds(23, k, 99);
    REQUIRE(folds.size() == k);
    std::vector<std::size_t> all;
    for (const auto& f : folds) {
      CHECK(f.size() >= 23 / k);
      CHECK(f.size() <= 23 / k + 1);
      all.insert(all.end(), f.begin(), f.end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 23; ++i) CHECK(all[i] == i);
  }
  CHECK(subject_folds(10, 3, 1) == subject_folds(10, 3, 1));
  CHECK_THROWS_AS(subject_folds(5, 1, 0), Error);
  CHECK_THROWS_AS(subject_folds(5, 6, 0), Error);
}

TEST_CASE("leave-one-subject-out on five subjects") {
  const auto sim = generate_scenario(ScenarioConfig::make(1, 5, 4, 3));
  const auto folds = kfold_cv(sim.data, 5, {0.01, 0.1}, per_obs_control(), 1);
  REQUIRE(folds.size() == 5);
  for (const auto& f : folds) {
    CHECK(f.test_subjects.size() == 1);
    CHECK(f.test_observations == 4);
  }
}

TEST_CASE("noiseless linear data: held-out error is near zero") {
  auto cfg = ScenarioConfig::make(1, 12, 5, 17);
  cfg.sigma2_true = 0.0;
  cfg.D_true = Matrix::Zero(2, 2);
  const auto sim = generate_scenario(cfg);
  const auto folds = kfold_cv(sim.data, 3, {0.0, 0.01}, per_obs_control(), 5, 1, cfg.beta_true);
  for (const auto& f : folds) {
    REQUIRE(f.ok);
    CHECK(f.mse < 1e-6);
    REQUIRE(f.beta_rmse);
    CHECK(*f.beta_rmse < 1e-3);
    CHECK(f.sse == doctest::Approx(f.mse * static_cast<double>(f.test_observations)));
  }
}

TEST_CASE("cross-validated selection beats a deliberately poor selector in scenario 3") {
  const auto cfg = ScenarioConfig::make(3, 30, 5, 23, 5);
  const auto sim = generate_scenario(cfg);
  const auto good = kfold_cv(sim.data, 10, default_grid(), per_obs_control(), 2, 1, cfg.beta_true);
  // The poor selector always keeps the unpenalized model.
  const auto poor = kfold_cv(sim.data, 10, {0.0}, per_obs_control(), 2, 1, cfg.beta_true);
  double g = 0.0, p = 0.0;
  for (std::size_t k = 0; k < 10; ++k) {
    REQUIRE(good[k].ok);
    REQUIRE(poor[k].ok);
    g += *good[k].beta_rmse;
    p += *poor[k].beta_rmse;
  }
  CHECK(g < p);
}
