#include "emlmlasso/report.hpp"

#include "emlmlasso/csv.hpp"
#include "emlmlasso/errors.hpp"

#include <cmath>
#include <sstream>

namespace emlmlasso {

namespace {

json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string num_or_na(double v) { return std::isfinite(v) ? format_double(v) : "NA"; }

}  // namespace

json params_json(const LmmParams& params, const std::vector<std::string>& x_names) {
  json j;
  j["beta"] = vector_json(params.beta);
  if (x_names.size() == static_cast<std::size_t>(params.beta.size())) j["beta_names"] = x_names;
  j["sigma2"] = params.sigma2;
  j["D"] = matrix_json(params.D);
  return j;
}

json fit_report_json(const FitReport& fit, const LongitudinalDataset& ds) {
  json j;
  j["lambda"] = fit.lambda;
  j["lambda_raw"] = fit.lambda_raw;
  j["penalty"] = {{"family", to_string(fit.penalty.family)}, {"alpha", fit.penalty.alpha}};
  j["params"] = params_json(fit.params, ds.x_names());
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["final_loglik"] = fit.final_loglik;
  j["penalized_loglik_trace"] = fit.penalized_loglik_trace;
  j["warnings"] = fit.warnings;
  return j;
}

json selection_json(const SelectionResult& sel, const LongitudinalDataset& ds) {
  json j;
  const auto& path = sel.path;
  j["criterion"] = to_string(path.criterion);
  j["selected_lambda"] = sel.selected_lambda;
  j["selected_index"] = path.selected_index;
  j["support"] = sel.support;
  json names = json::array();
  for (auto s : sel.support) names.push_back(ds.x_names()[s]);
  j["selected_variables"] = names;
  j["bic"] = path.bic[path.selected_index];
  j["aic"] = path.aic[path.selected_index];
  j["df"] = path.df[path.selected_index];
  j["penalized"] = fit_report_json(sel.selected_fit, ds);
  j["refit"] = fit_report_json(sel.refit, ds);
  j["refit_beta_original_scale"] = vector_json(sel.refit_beta_original);
  std::size_t failures = 0;
  for (auto f : path.failed) failures += f ? 1 : 0;
  j["failed_fits"] = failures;
  return j;
}

json reduction_json(const ColumnReductionReport& report, const std::vector<std::string>& names) {
  auto name = [&](std::size_t k) { return k < names.size() ? names[k] : std::to_string(k); };
  json j;
  j["kept"] = report.kept;
  j["dropped"] = report.dropped;
  json kept_names = json::array(), dropped_names = json::array(), deps = json::array();
  for (auto k : report.kept) kept_names.push_back(name(k));
  for (std::size_t d = 0; d < report.dropped.size(); ++d) {
    dropped_names.push_back(name(report.dropped[d]));
    json set = json::array();
    for (const auto& [col, coef] : report.dependency_sets[d])
      set.push_back({{"column", col}, {"name", name(col)}, {"coefficient", coef}});
    deps.push_back({{"dropped", report.dropped[d]}, {"combination", std::move(set)}});
  }
  j["kept_names"] = std::move(kept_names);
  j["dropped_names"] = std::move(dropped_names);
  j["dependency_sets"] = std::move(deps);
  return j;
}

std::string path_csv(const RegularizationPath& path) {
  std::ostringstream out;
  out << "lambda,bic,aic,df,nnz,converged\n";
  for (std::size_t k = 0; k < path.size(); ++k) {
    out << format_double(path.grid[k]) << ',';
    if (path.failed[k]) {
      out << "NA,NA,NA,NA,0\n";
      continue;
    }
    out << num_or_na(path.bic[k]) << ',' << num_or_na(path.aic[k]) << ',' << path.df[k] << ','
        << support_of(path.fits[k].params.beta).size() << ',' << (path.fits[k].converged ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string mc_summary_csv(const McSummary& s, const ScenarioConfig& cfg) {
  std::ostringstream out;
  out << "statistic,value\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
  if (cfg.scenario == 3) {
    out << "sensitivity," << opt(s.sensitivity) << '\n';
    out << "specificity," << opt(s.specificity) << '\n';
  } else {
    for (Eigen::Index j = 0; j < s.zero_proportion.size(); ++j)
      out << "beta" << (j + 1) << ',' << format_double(s.zero_proportion(j)) << '\n';
  }
  out << "RMSE," << format_double(s.rmse) << '\n';
  return out.str();
}

std::string mc_replicates_csv(const McSummary& s) {
  std::ostringstream out;
  out << "replicate,seed,ok,selected_lambda,nnz,squared_error,em_iterations,em_converged";
  const Eigen::Index p = s.zero_proportion.size();
  for (Eigen::Index j = 0; j < p; ++j) out << ",beta" << (j + 1);
  out << '\n';
  for (const auto& r : s.details) {
    out << r.replicate << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ',';
    if (!r.ok) {
      out << "NA,NA,NA,NA,NA";
      for (Eigen::Index j = 0; j < p; ++j) out << ",NA";
      out << '\n';
      continue;
    }
    out << format_double(r.selected_lambda) << ',' << support_of(r.beta_hat).size() << ','
        << format_double(r.squared_error) << ',' << r.em_iterations << ',' << (r.em_converged ? 1 : 0);
    for (Eigen::Index j = 0; j < p; ++j) out << ',' << format_double(r.beta_hat(j));
    out << '\n';
  }
  return out.str();
}

json mc_summary_json(const McSummary& s, const ScenarioConfig& cfg) {
  json j;
  j["config"] = scenario_json(cfg);
  j["zero_proportion"] = vector_json(s.zero_proportion);
  j["rmse"] = s.rmse;
  j["rmse_replicate_mean"] = s.rmse_replicate_mean;
  j["sensitivity"] = s.sensitivity ? json(*s.sensitivity) : json(nullptr);
  j["specificity"] = s.specificity ? json(*s.specificity) : json(nullptr);
  j["replicates"] = s.replicates;
  j["failures"] = s.failures;
  return j;
}

std::string folds_csv(const std::vector<CvFold>& folds) {
  std::ostringstream out;
  out << "fold,ok,test_subjects,test_observations,selected_lambda,nnz,sse,mse,beta_rmse\n";
  for (const auto& f : folds) {
    out << (f.fold + 1) << ',' << (f.ok ? 1 : 0) << ',' << f.test_subjects.size() << ',' << f.test_observations
        << ',';
    if (!f.ok) {
      out << "NA,NA,NA,NA,NA\n";
      continue;
    }
    out << format_double(f.selected_lambda) << ',' << f.nnz << ',' << format_double(f.sse) << ','
        << format_double(f.mse) << ',' << (f.beta_rmse ? format_double(*f.beta_rmse) : "NA") << '\n';
  }
  return out.str();
}

json scenario_json(const ScenarioConfig& cfg) {
  return {{"scenario", cfg.scenario},
          {"n", cfg.n},
          {"n_i", cfg.n_i},
          {"p", cfg.p},
          {"p_star", cfg.p_star},
          {"beta_true", vector_json(cfg.beta_true)},
          {"D_true", matrix_json(cfg.D_true)},
          {"sigma2_true", cfg.sigma2_true},
          {"covariate_mean", cfg.covariate_mean},
          {"center", cfg.center},
          {"seed", cfg.seed}};
}

ScenarioConfig scenario_from_json(const json& j, ScenarioConfig cfg) {
  try {
    if (j.contains("scenario")) cfg.scenario = j.at("scenario").get<int>();
    if (j.contains("n")) cfg.n = j.at("n").get<std::size_t>();
    if (j.contains("n_i")) cfg.n_i = j.at("n_i").get<std::size_t>();
    if (j.contains("p")) cfg.p = j.at("p").get<std::size_t>();
    if (j.contains("p_star")) cfg.p_star = j.at("p_star").get<std::size_t>();
    if (j.contains("sigma2_true")) cfg.sigma2_true = j.at("sigma2_true").get<double>();
    if (j.contains("covariate_mean")) cfg.covariate_mean = j.at("covariate_mean").get<double>();
    if (j.contains("center")) cfg.center = j.at("center").get<bool>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("D_true")) {
      const auto rows = j.at("D_true").get<std::vector<std::vector<double>>>();
      cfg.D_true.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != static_cast<std::size_t>(cfg.D_true.cols()))
          throw Error(ErrorKind::config, "D_true rows have unequal length");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
          cfg.D_true(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    if (j.contains("beta_true")) {
      const auto b = j.at("beta_true").get<std::vector<double>>();
      cfg.beta_true = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
    } else {
      cfg.beta_true = Vector::Zero(static_cast<Eigen::Index>(cfg.p));
      if (cfg.p_star <= cfg.p) cfg.beta_true.head(static_cast<Eigen::Index>(cfg.p_star)).setOnes();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("invalid scenario config: ") + e.what());
  }
  return cfg;
}

}  // namespace emlmlasso
