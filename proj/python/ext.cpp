#include "emlmlasso/dataset.hpp"
#include "emlmlasso/em_engine.hpp"
#include "emlmlasso/errors.hpp"
#include "emlmlasso/penalized_ls.hpp"
#include "emlmlasso/selector.hpp"
#include "emlmlasso/simkit.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>

namespace py = pybind11;
using namespace emlmlasso;

namespace {

// Build a dataset from stacked arrays plus a per-row subject label; subjects
// keep their first-appearance order.
LongitudinalDataset dataset_from_arrays(const std::vector<std::string>& subject, const Vector& y, const Matrix& X,
                                        const Matrix& Z, std::vector<std::string> x_names,
                                        std::vector<std::string> z_names) {
  const auto N = static_cast<Eigen::Index>(subject.size());
  if (y.size() != N || X.rows() != N || Z.rows() != N)
    throw Error(ErrorKind::data, "subject, y, X and Z must have the same number of rows");
  std::vector<std::string> order;
  std::map<std::string, std::vector<Eigen::Index>> rows;
  for (Eigen::Index r = 0; r < N; ++r) {
    auto& list = rows[subject[static_cast<std::size_t>(r)]];
    if (list.empty()) order.push_back(subject[static_cast<std::size_t>(r)]);
    list.push_back(r);
  }
  std::vector<SubjectBlock> blocks;
  for (const auto& id : order) {
    const auto& idx = rows[id];
    const auto ni = static_cast<Eigen::Index>(idx.size());
    SubjectBlock b{id, Vector(ni), Matrix(ni, X.cols()), Matrix(ni, Z.cols())};
    for (Eigen::Index t = 0; t < ni; ++t) {
      b.y(t) = y(idx[static_cast<std::size_t>(t)]);
      b.X.row(t) = X.row(idx[static_cast<std::size_t>(t)]);
      b.Z.row(t) = Z.row(idx[static_cast<std::size_t>(t)]);
    }
    blocks.push_back(std::move(b));
  }
  return LongitudinalDataset(std::move(blocks), std::move(x_names), std::move(z_names));
}

EmControl make_control(double eps, int max_iter, const std::string& lambda_scale, bool legacy_sigma) {
  EmControl c;
  c.eps = eps;
  c.max_iter = max_iter;
  c.lambda_scale = lambda_scale_from_string(lambda_scale);
  c.legacy_sigma_update = legacy_sigma;
  return c;
}

SweepControl make_sweep(const PenaltySpec& penalty, const std::string& criterion, const EmControl& em,
                        bool warm_start) {
  SweepControl c;
  c.em = em;
  c.penalty = penalty;
  c.criterion = criterion_from_string(criterion);
  c.warm_start = warm_start;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lasso selection of fixed effects in linear mixed models via penalized EM";

  static py::exception<Error> error_type(m, "EmlmlassoError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(to_string(e.kind())) + ": " + e.what();
      if (e.kind() == ErrorKind::usage || e.kind() == ErrorKind::config)
        PyErr_SetString(PyExc_ValueError, msg.c_str());
      else
        py::set_error(error_type, msg.c_str());
    }
  });

  py::class_<PenaltySpec>(m, "PenaltySpec")
      .def(py::init([](const std::string& family, double alpha, double lambda) {
             PenaltySpec p{penalty_family_from_string(family), alpha, lambda};
             p.validate();
             return p;
           }),
           py::arg("family") = "lasso", py::arg("alpha") = 1.0, py::arg("lambda_") = 0.0)
      .def_static("lasso", &PenaltySpec::lasso, py::arg("lambda_"))
      .def_static("ridge", &PenaltySpec::ridge, py::arg("lambda_"))
      .def_static("elastic_net", &PenaltySpec::elastic_net, py::arg("alpha"), py::arg("lambda_"))
      .def_property_readonly("family", [](const PenaltySpec& p) { return std::string(to_string(p.family)); })
      .def_readwrite("alpha", &PenaltySpec::alpha)
      .def_readwrite("lambda_", &PenaltySpec::lambda)
      .def("value", &PenaltySpec::value);

  py::class_<PlsSolution>(m, "PlsSolution")
      .def_readonly("beta", &PlsSolution::beta)
      .def_readonly("objective", &PlsSolution::objective)
      .def_readonly("iterations", &PlsSolution::iterations)
      .def_readonly("kkt_residual", &PlsSolution::kkt_residual)
      .def_readonly("converged", &PlsSolution::converged);

  m.def("soft_threshold", &soft_threshold, py::arg("z"), py::arg("gamma"));
  m.def(
      "solve_pls",
      [](const Matrix& X, const Vector& y, const PenaltySpec& penalty, std::optional<Vector> warm, double tol) {
        PlsOptions o;
        o.tol = tol;
        return solve_pls(X, y, penalty, warm, o);
      },
      py::arg("X"), py::arg("y"), py::arg("penalty"), py::arg("warm_start") = py::none(), py::arg("tol") = 1e-9);
  m.def("pls_objective", &pls_objective, py::arg("X"), py::arg("y"), py::arg("penalty"), py::arg("beta"));
  m.def("kkt_check", &kkt_check, py::arg("X"), py::arg("y"), py::arg("penalty"), py::arg("beta"));
  m.def("lambda_max", &lambda_max, py::arg("X"), py::arg("y"));

  py::class_<LongitudinalDataset>(m, "Dataset")
      .def(py::init(&dataset_from_arrays), py::arg("subject"), py::arg("y"), py::arg("X"), py::arg("Z"),
           py::arg("x_names") = std::vector<std::string>{}, py::arg("z_names") = std::vector<std::string>{})
      .def_property_readonly("n", &LongitudinalDataset::n)
      .def_property_readonly("N", &LongitudinalDataset::N)
      .def_property_readonly("p", &LongitudinalDataset::p)
      .def_property_readonly("q", &LongitudinalDataset::q)
      .def_property_readonly("X", &LongitudinalDataset::stacked_X)
      .def_property_readonly("y", &LongitudinalDataset::stacked_y)
      .def_property_readonly("x_names", &LongitudinalDataset::x_names)
      .def_property_readonly("subject_ids",
                             [](const LongitudinalDataset& ds) {
                               std::vector<std::string> ids;
                               for (const auto& b : ds.blocks()) ids.push_back(b.subject_id);
                               return ids;
                             })
      .def("beta_to_original_scale", &LongitudinalDataset::beta_to_original_scale);

  m.def(
      "read_long_csv",
      [](const std::string& path, const std::string& subject, const std::string& response,
         const std::vector<std::string>& fixed, const std::vector<std::string>& random) {
        return ingest_long_csv(path, ColumnRoles{subject, response, fixed, random});
      },
      py::arg("path"), py::arg("subject"), py::arg("response"), py::arg("fixed"),
      py::arg("random") = std::vector<std::string>{"1"});
  m.def(
      "standardize",
      [](const LongitudinalDataset& ds, const std::vector<std::string>& categorical, bool scale_response) {
        return standardize(ds, StandardizeOptions{categorical, false, scale_response});
      },
      py::arg("dataset"), py::arg("categorical") = std::vector<std::string>{}, py::arg("scale_response") = true);

  py::class_<ColumnReductionReport>(m, "ColumnReductionReport")
      .def_readonly("kept", &ColumnReductionReport::kept)
      .def_readonly("dropped", &ColumnReductionReport::dropped)
      .def_readonly("dependency_sets", &ColumnReductionReport::dependency_sets);
  m.def("find_linear_combos", &find_linear_combos, py::arg("X"), py::arg("rank_tol") = 1e-7);
  m.def("remove_linear_combos", &remove_linear_combos, py::arg("dataset"), py::arg("rank_tol") = 1e-7);

  py::class_<LmmParams>(m, "LmmParams")
      .def(py::init([](Vector beta, double sigma2, Matrix D) { return LmmParams{std::move(beta), sigma2, std::move(D)}; }),
           py::arg("beta"), py::arg("sigma2"), py::arg("D"))
      .def_readwrite("beta", &LmmParams::beta)
      .def_readwrite("sigma2", &LmmParams::sigma2)
      .def_readwrite("D", &LmmParams::D);

  py::class_<FitReport>(m, "FitReport")
      .def_readonly("params", &FitReport::params)
      .def_readonly("iterations", &FitReport::iterations)
      .def_readonly("converged", &FitReport::converged)
      .def_readonly("penalized_loglik_trace", &FitReport::penalized_loglik_trace)
      .def_readonly("final_loglik", &FitReport::final_loglik)
      .def_readonly("lambda_", &FitReport::lambda)
      .def_readonly("lambda_raw", &FitReport::lambda_raw)
      .def_readonly("warnings", &FitReport::warnings);

  m.def(
      "fit_em",
      [](const LongitudinalDataset& ds, const PenaltySpec& penalty, std::optional<LmmParams> init, double eps,
         int max_iter, const std::string& lambda_scale, bool legacy_sigma) {
        py::gil_scoped_release release;
        return fit_em(ds, penalty, init, make_control(eps, max_iter, lambda_scale, legacy_sigma));
      },
      py::arg("dataset"), py::arg("penalty"), py::arg("init") = py::none(), py::arg("eps") = 1e-6,
      py::arg("max_iter") = 500, py::arg("lambda_scale") = "raw", py::arg("legacy_sigma") = false);
  m.def("observed_loglik", &observed_loglik, py::arg("dataset"), py::arg("params"));
  m.def(
      "e_step",
      [](const LongitudinalDataset& ds, const LmmParams& params) {
        const auto mom = e_step(ds, params);
        py::list out;
        for (const auto& s : mom.subjects) out.append(py::make_tuple(s.b_hat, s.Lambda, s.y_tilde));
        return out;
      },
      py::arg("dataset"), py::arg("params"));

  py::class_<RegularizationPath>(m, "RegularizationPath")
      .def_readonly("grid", &RegularizationPath::grid)
      .def_readonly("fits", &RegularizationPath::fits)
      .def_readonly("bic", &RegularizationPath::bic)
      .def_readonly("aic", &RegularizationPath::aic)
      .def_readonly("df", &RegularizationPath::df)
      .def_readonly("selected_index", &RegularizationPath::selected_index);

  py::class_<SelectionResult>(m, "SelectionResult")
      .def_readonly("selected_lambda", &SelectionResult::selected_lambda)
      .def_readonly("support", &SelectionResult::support)
      .def_readonly("selected_fit", &SelectionResult::selected_fit)
      .def_readonly("refit", &SelectionResult::refit)
      .def_readonly("refit_beta_original", &SelectionResult::refit_beta_original)
      .def_readonly("path", &SelectionResult::path);

  m.def(
      "select_lambda",
      [](const LongitudinalDataset& ds, const std::vector<double>& grid, const PenaltySpec& penalty,
         const std::string& criterion, double eps, int max_iter, const std::string& lambda_scale, bool warm_start) {
        const auto ctrl = make_sweep(penalty, criterion, make_control(eps, max_iter, lambda_scale, false), warm_start);
        py::gil_scoped_release release;
        return select_lambda(ds, grid, ctrl);
      },
      py::arg("dataset"), py::arg("grid"), py::arg("penalty") = PenaltySpec{}, py::arg("criterion") = "bic",
      py::arg("eps") = 1e-6, py::arg("max_iter") = 500, py::arg("lambda_scale") = "raw",
      py::arg("warm_start") = true);
  m.def("linear_grid", &linear_grid, py::arg("lo"), py::arg("hi"), py::arg("count"));
  m.def("log_grid", &log_grid, py::arg("lo"), py::arg("hi"), py::arg("count"));
  m.def("default_grid", &default_grid);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init([](int scenario, std::size_t n, std::size_t n_i, std::uint64_t seed, std::size_t p_star,
                       const std::string& d) {
             Matrix D;
             if (d == "moderate") D = d_moderate();
             else if (d == "large") D = d_large();
             else throw Error(ErrorKind::config, "d must be 'moderate' or 'large'");
             return ScenarioConfig::make(scenario, n, n_i, seed, p_star, D);
           }),
           py::arg("scenario") = 1, py::arg("n") = 30, py::arg("n_i") = 5, py::arg("seed") = 1,
           py::arg("p_star") = 5, py::arg("d") = "moderate")
      .def_readwrite("scenario", &ScenarioConfig::scenario)
      .def_readwrite("n", &ScenarioConfig::n)
      .def_readwrite("n_i", &ScenarioConfig::n_i)
      .def_readwrite("p", &ScenarioConfig::p)
      .def_readwrite("p_star", &ScenarioConfig::p_star)
      .def_readwrite("beta_true", &ScenarioConfig::beta_true)
      .def_readwrite("D_true", &ScenarioConfig::D_true)
      .def_readwrite("sigma2_true", &ScenarioConfig::sigma2_true)
      .def_readwrite("seed", &ScenarioConfig::seed);

  m.def(
      "generate_scenario",
      [](const ScenarioConfig& cfg) {
        auto sim = generate_scenario(cfg);
        return py::make_tuple(std::move(sim.data), std::move(sim.b_true));
      },
      py::arg("config"));

  py::class_<McSummary>(m, "McSummary")
      .def_readonly("zero_proportion", &McSummary::zero_proportion)
      .def_readonly("rmse", &McSummary::rmse)
      .def_readonly("rmse_replicate_mean", &McSummary::rmse_replicate_mean)
      .def_readonly("sensitivity", &McSummary::sensitivity)
      .def_readonly("specificity", &McSummary::specificity)
      .def_readonly("replicates", &McSummary::replicates)
      .def_readonly("failures", &McSummary::failures);

  m.def(
      "run_monte_carlo",
      [](const ScenarioConfig& cfg, std::size_t replicates, const std::vector<double>& grid,
         const std::string& lambda_scale, int threads) {
        const auto ctrl = make_sweep(PenaltySpec{}, "bic", make_control(1e-6, 500, lambda_scale, false), true);
        py::gil_scoped_release release;
        return run_monte_carlo(cfg, replicates, grid, ctrl, threads);
      },
      py::arg("config"), py::arg("replicates"), py::arg("grid"), py::arg("lambda_scale") = "per_obs",
      py::arg("threads") = 1);

  py::class_<CvFold>(m, "CvFold")
      .def_readonly("fold", &CvFold::fold)
      .def_readonly("test_subjects", &CvFold::test_subjects)
      .def_readonly("ok", &CvFold::ok)
      .def_readonly("error", &CvFold::error)
      .def_readonly("selected_lambda", &CvFold::selected_lambda)
      .def_readonly("nnz", &CvFold::nnz)
      .def_readonly("sse", &CvFold::sse)
      .def_readonly("mse", &CvFold::mse);

  m.def("subject_folds", &subject_folds, py::arg("n"), py::arg("k"), py::arg("seed"));
  m.def(
      "kfold_cv",
      [](const LongitudinalDataset& ds, std::size_t k, const std::vector<double>& grid, std::uint64_t seed,
         const std::string& lambda_scale, int threads) {
        const auto ctrl = make_sweep(PenaltySpec{}, "bic", make_control(1e-6, 500, lambda_scale, false), true);
        py::gil_scoped_release release;
        return kfold_cv(ds, k, grid, ctrl, seed, threads);
      },
      py::arg("dataset"), py::arg("k"), py::arg("grid"), py::arg("seed"), py::arg("lambda_scale") = "raw",
      py::arg("threads") = 1);
}
