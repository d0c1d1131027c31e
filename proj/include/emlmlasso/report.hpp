#pragma once

#include "emlmlasso/dataset.hpp"
#include "emlmlasso/em_engine.hpp"
#include "emlmlasso/selector.hpp"
#include "emlmlasso/simkit.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace emlmlasso {

using json = nlohmann::json;

json params_json(const LmmParams& params, const std::vector<std::string>& x_names = {});
json fit_report_json(const FitReport& fit, const LongitudinalDataset& ds);
json selection_json(const SelectionResult& sel, const LongitudinalDataset& ds);
json reduction_json(const ColumnReductionReport& report, const std::vector<std::string>& names);

// lambda,bic,aic,df,nnz,converged (one row per grid value, grid order)
std::string path_csv(const RegularizationPath& path);

// Table-shaped summary: zero proportions per coefficient and RMSE for
// scenarios 1-2; sensitivity, specificity and RMSE for scenario 3.
std::string mc_summary_csv(const McSummary& summary, const ScenarioConfig& cfg);
std::string mc_replicates_csv(const McSummary& summary);
json mc_summary_json(const McSummary& summary, const ScenarioConfig& cfg);

std::string folds_csv(const std::vector<CvFold>& folds);

json scenario_json(const ScenarioConfig& cfg);
/// Overlay fields present in `j` on top of `base`. beta_true is rebuilt from
/// p and p_star unless given explicitly.
ScenarioConfig scenario_from_json(const json& j, ScenarioConfig base);

}  // namespace emlmlasso
