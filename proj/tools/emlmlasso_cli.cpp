// emlmlasso: command-line front end.
//
//   emlmlasso fit      --input data.csv --subject id --response y --random intercept+time --lambda 0.1
//   emlmlasso select   --input data.csv ... --grid linspace:0.001:0.5:100
//   emlmlasso simulate --scenario 1 --replicates 100 --seed 42
//   emlmlasso cv       --input data.csv ... --k 4 --seed 7
//   emlmlasso reduce   --input data.csv ...
//
// Flags override values from --config (a flat JSON object keyed by the long
// flag name with dashes as underscores), which override built-in defaults.

#include "emlmlasso/csv.hpp"
#include "emlmlasso/dataset.hpp"
#include "emlmlasso/em_engine.hpp"
#include "emlmlasso/errors.hpp"
#include "emlmlasso/report.hpp"
#include "emlmlasso/selector.hpp"
#include "emlmlasso/simkit.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace emlmlasso;

namespace {

struct Settings {
  // data
  std::string input;
  std::string subject;
  std::string response;
  std::vector<std::string> fixed;
  std::vector<std::string> random{"1"};
  bool standardize = false;
  std::vector<std::string> categorical;
  bool keep_response_scale = false;
  // model / selection
  double lambda = 0.0;
  std::string grid = "linspace:0.001:0.5:100";
  std::string penalty = "lasso";
  double alpha = 1.0;
  std::string lambda_scale;  // empty: per-command default
  std::string criterion = "bic";
  double eps = 1e-6;
  int max_iter = 500;
  bool legacy_sigma = false;
  bool cold_start = false;
  double rank_tol = 1e-7;
  // runs
  std::uint64_t seed = 0;
  int threads = 1;
  std::size_t k = 4;
  int scenario = 1;
  std::size_t replicates = 100;
  std::size_t n = 30;
  std::size_t n_i = 5;
  std::size_t p = 0;  // 0: scenario default
  std::size_t p_star = 5;
  std::string d = "moderate";
  std::string output_dir = ".";
  std::string config;
};

// A flag that may also be supplied through the config file.
struct Binding {
  CLI::Option* option;
  std::string key;
  std::function<void(const json&)> assign;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::string> json_list(const json& v) {
  if (v.is_string()) return split_list(v.get<std::string>());
  return v.get<std::vector<std::string>>();
}

template <class T>
void bind_option(CLI::App* app, std::vector<Binding>& bindings, const std::string& flag, T& target,
          const std::string& help) {
  auto* opt = app->add_option(flag, target, help);
  std::string key = flag.substr(2);
  std::replace(key.begin(), key.end(), '-', '_');
  bindings.push_back({opt, key, [&target](const json& v) { target = v.get<T>(); }});
}

void bind_list(CLI::App* app, std::vector<Binding>& bindings, const std::string& flag,
               std::vector<std::string>& target, const std::string& help) {
  auto* opt = app->add_option_function<std::string>(
      flag, [&target](const std::string& s) { target = split_list(s); }, help);
  std::string key = flag.substr(2);
  std::replace(key.begin(), key.end(), '-', '_');
  bindings.push_back({opt, key, [&target](const json& v) { target = json_list(v); }});
}

void bind_flag(CLI::App* app, std::vector<Binding>& bindings, const std::string& flag, bool& target,
               const std::string& help) {
  auto* opt = app->add_flag(flag, target, help);
  std::string key = flag.substr(2);
  std::replace(key.begin(), key.end(), '-', '_');
  bindings.push_back({opt, key, [&target](const json& v) { target = v.get<bool>(); }});
}

void add_data_options(CLI::App* app, std::vector<Binding>& b, Settings& s) {
  bind_option(app, b, "--input", s.input, "Long-format CSV, one row per observation");
  bind_option(app, b, "--subject", s.subject, "Subject identifier column");
  bind_option(app, b, "--response", s.response, "Response column");
  bind_list(app, b, "--fixed", s.fixed, "Comma-separated fixed-effect columns (default: all other columns)");
  bind_list(app, b, "--random", s.random, "Random-effect columns; '1' is an intercept, 'intercept+time' a shorthand");
  bind_flag(app, b, "--standardize", s.standardize, "Center and scale fixed-effect columns and the response");
  bind_list(app, b, "--categorical", s.categorical, "Columns left unscaled by --standardize");
  bind_flag(app, b, "--no-scale-response", s.keep_response_scale, "Only center the response when standardizing");
}

void add_model_options(CLI::App* app, std::vector<Binding>& b, Settings& s) {
  bind_option(app, b, "--penalty", s.penalty, "lasso | ridge | elastic_net");
  bind_option(app, b, "--alpha", s.alpha, "Elastic-net mixing weight");
  bind_option(app, b, "--lambda-scale", s.lambda_scale, "raw | per_obs (per_obs multiplies lambda by 2N)");
  bind_option(app, b, "--eps", s.eps, "Relative EM stopping tolerance");
  bind_option(app, b, "--max-iter", s.max_iter, "Maximum EM iterations");
  bind_flag(app, b, "--legacy-sigma", s.legacy_sigma, "Update sigma2 with the previous beta");
}

void add_select_options(CLI::App* app, std::vector<Binding>& b, Settings& s) {
  bind_option(app, b, "--grid", s.grid,
       "Lambda grid: comma list, linspace:lo:hi:count, logspace:lo:hi:count or auto:count");
  bind_option(app, b, "--criterion", s.criterion, "bic | aic");
  bind_flag(app, b, "--cold-start", s.cold_start, "Fit each grid value from scratch");
  bind_option(app, b, "--threads", s.threads, "Worker threads");
}

void add_common(CLI::App* app, std::vector<Binding>& b, Settings& s) {
  app->add_option("--config", s.config, "JSON file with default values for any flag");
  bind_option(app, b, "--output-dir", s.output_dir, "Directory for output artifacts");
}

void apply_config(const std::string& path, const std::vector<Binding>& bindings, const std::set<std::string>& known,
                  const CLI::App* app) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open config file '" + path + "'");
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "config file is not valid JSON: " + std::string(e.what()));
  }
  if (!cfg.is_object()) throw Error(ErrorKind::config, "config file must hold a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    const auto it = std::find_if(bindings.begin(), bindings.end(), [&](const Binding& bd) { return bd.key == key; });
    if (it == bindings.end()) {
      // Keys belonging to other commands are allowed so one file can serve all.
      if (known.count(key) || key == "beta_true" || key == "D_true" || key == "sigma2_true" ||
          key == "covariate_mean")
        continue;
      throw Error(ErrorKind::config, "unknown config key '" + key + "' for '" + app->get_name() + "'");
    }
    if (it->option->count() > 0) continue;  // flag wins
    try {
      it->assign(value);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::config, "config key '" + key + "': " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<double> parse_grid(const std::string& spec, const LongitudinalDataset* ds, LambdaScale scale) {
  if (split_list(spec).empty()) throw Error(ErrorKind::usage, "lambda grid is empty");
  auto number = [&](const std::string& s) {
    const auto v = parse_double(s);
    if (!v) throw Error(ErrorKind::usage, "invalid number '" + s + "' in grid spec");
    return *v;
  };
  auto count = [&](const std::string& s) {
    const double v = number(s);
    if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw Error(ErrorKind::usage, "grid count must be a positive integer");
    return static_cast<std::size_t>(v);
  };
  const auto colon = spec.find(':');
  if (colon != std::string::npos) {
    const std::string kind = spec.substr(0, colon);
    std::vector<std::string> parts;
    std::stringstream in(spec.substr(colon + 1));
    std::string item;
    while (std::getline(in, item, ':')) parts.push_back(item);
    if (kind == "auto") {
      if (parts.size() != 1) throw Error(ErrorKind::usage, "grid spec auto:count takes one argument");
      if (!ds) throw Error(ErrorKind::usage, "auto grid needs a dataset");
      return auto_grid(*ds, scale, count(parts[0]));
    }
    if (parts.size() != 3) throw Error(ErrorKind::usage, "grid spec " + kind + ":lo:hi:count takes three arguments");
    const double lo = number(parts[0]), hi = number(parts[1]);
    const std::size_t c = count(parts[2]);
    if (kind == "linspace") return linear_grid(lo, hi, c);
    if (kind == "logspace") return log_grid(lo, hi, c);
    throw Error(ErrorKind::usage, "unknown grid kind '" + kind + "'");
  }
  std::vector<double> grid;
  for (const auto& s : split_list(spec)) grid.push_back(number(s));
  if (grid.empty()) throw Error(ErrorKind::usage, "lambda grid is empty");
  return grid;
}

LongitudinalDataset load_dataset(const Settings& s) {
  if (s.input.empty()) throw Error(ErrorKind::usage, "--input is required");
  if (s.subject.empty()) throw Error(ErrorKind::usage, "--subject is required");
  if (s.response.empty()) throw Error(ErrorKind::usage, "--response is required");
  ColumnRoles roles{s.subject, s.response, s.fixed, s.random};
  if (roles.fixed.empty()) {
    std::ifstream in(s.input);
    if (!in) throw Error(ErrorKind::config, "cannot open input file '" + s.input + "'");
    std::string header;
    std::getline(in, header);
    const auto table = parse_csv(header);
    if (!table.header.empty())
      for (const auto& h : table.header)
        if (h != s.subject && h != s.response) roles.fixed.push_back(h);
  }
  auto ds = ingest_long_csv(s.input, roles);
  if (s.standardize) {
    StandardizeOptions opts;
    opts.categorical = s.categorical;
    opts.scale_response = !s.keep_response_scale;
    ds = standardize(ds, opts);
  }
  return ds;
}

PenaltySpec penalty_of(const Settings& s) {
  PenaltySpec pen;
  pen.family = penalty_family_from_string(s.penalty);
  pen.alpha = pen.family == PenaltyFamily::lasso ? 1.0 : pen.family == PenaltyFamily::ridge ? 0.0 : s.alpha;
  pen.validate();
  return pen;
}

EmControl em_control(const Settings& s, LambdaScale default_scale) {
  if (!(s.eps > 0.0)) throw Error(ErrorKind::config, "--eps must be positive");
  if (s.max_iter < 1) throw Error(ErrorKind::config, "--max-iter must be at least 1");
  EmControl ctrl;
  ctrl.eps = s.eps;
  ctrl.max_iter = s.max_iter;
  ctrl.legacy_sigma_update = s.legacy_sigma;
  ctrl.lambda_scale = s.lambda_scale.empty() ? default_scale : lambda_scale_from_string(s.lambda_scale);
  return ctrl;
}

SweepControl sweep_control(const Settings& s, LambdaScale default_scale) {
  if (s.threads < 1) throw Error(ErrorKind::config, "--threads must be at least 1");
  SweepControl ctrl;
  ctrl.em = em_control(s, default_scale);
  ctrl.penalty = penalty_of(s);
  ctrl.criterion = criterion_from_string(s.criterion);
  ctrl.warm_start = !s.cold_start;
  ctrl.threads = s.threads;
  return ctrl;
}

// Artifacts are staged in memory and only written once the whole command has
// succeeded; each file goes to a temporary name first and is then renamed.
class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {}
  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
  void commit() const {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::config, "cannot create output directory '" + dir_ + "': " + ec.message());
    for (const auto& [name, content] : files_) {
      const fs::path target = fs::path(dir_) / name;
      const fs::path tmp = fs::path(dir_) / ("." + name + ".tmp");
      {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) throw Error(ErrorKind::config, "cannot write '" + tmp.string() + "'");
      }
      fs::rename(tmp, target, ec);
      if (ec) throw Error(ErrorKind::config, "cannot rename to '" + target.string() + "': " + ec.message());
    }
  }

 private:
  std::string dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------

int cmd_fit(const Settings& s) {
  const auto ds = load_dataset(s);
  const auto ctrl = em_control(s, LambdaScale::raw);
  if (!(s.lambda >= 0.0)) throw Error(ErrorKind::config, "--lambda must be non-negative");
  const auto fit = fit_em(ds, penalty_of(s).with_lambda(s.lambda), std::nullopt, ctrl);
  json j = fit_report_json(fit, ds);
  j["lambda_scale"] = to_string(ctrl.lambda_scale);
  j["beta_original_scale"] = ds.beta_to_original_scale(fit.params.beta);
  j["n_subjects"] = ds.n();
  j["n_observations"] = ds.N();
  Outputs out(s.output_dir);
  out.add("fit.json", dump(j));
  out.commit();
  std::cout << "fit: lambda=" << format_double(s.lambda) << " iterations=" << fit.iterations
            << " converged=" << (fit.converged ? "yes" : "no") << " loglik=" << format_double(fit.final_loglik)
            << "\n";
  return 0;
}

int cmd_select(const Settings& s) {
  const auto ds = load_dataset(s);
  const auto ctrl = sweep_control(s, LambdaScale::raw);
  const auto grid = parse_grid(s.grid, &ds, ctrl.em.lambda_scale);
  const auto sel = select_lambda(ds, grid, ctrl);
  json j = selection_json(sel, ds);
  j["lambda_scale"] = to_string(ctrl.em.lambda_scale);
  Outputs out(s.output_dir);
  out.add("path.csv", path_csv(sel.path));
  out.add("selection.json", dump(j));
  out.commit();

  std::cout << "subjects: " << ds.n() << "  observations: " << ds.N() << "  fixed effects: " << ds.p() << "\n";
  std::cout << "grid: " << grid.size() << " values, criterion " << to_string(ctrl.criterion)
            << ", lambda scale " << to_string(ctrl.em.lambda_scale) << "\n";
  std::cout << "selected lambda: " << format_double(sel.selected_lambda) << "\n";
  std::cout << "selected variables (" << sel.support.size() << "):";
  for (auto k : sel.support) std::cout << ' ' << ds.x_names()[k];
  std::cout << "\nrefit coefficients (original scale):\n";
  for (auto k : sel.support)
    std::cout << "  " << ds.x_names()[k] << " = " << format_double(sel.refit_beta_original(static_cast<Eigen::Index>(k)))
              << "\n";
  return 0;
}

ScenarioConfig scenario_of(const Settings& s) {
  Matrix D;
  if (s.d == "moderate") D = d_moderate();
  else if (s.d == "large") D = d_large();
  else throw Error(ErrorKind::config, "--d must be 'moderate' or 'large'");
  auto cfg = ScenarioConfig::make(s.scenario, s.n, s.n_i, s.seed, s.p_star, D);
  if (s.p > 0) {
    cfg.p = s.p;
    cfg.beta_true = Vector::Zero(static_cast<Eigen::Index>(cfg.p));
    if (cfg.p_star <= cfg.p) cfg.beta_true.head(static_cast<Eigen::Index>(cfg.p_star)).setOnes();
  }
  if (!s.config.empty()) {
    std::ifstream in(s.config);
    json j;
    in >> j;
    json extra = json::object();
    for (const char* key : {"beta_true", "D_true", "sigma2_true", "covariate_mean"})
      if (j.contains(key)) extra[key] = j[key];
    if (!extra.empty()) {
      if (!extra.contains("beta_true")) extra["beta_true"] = std::vector<double>(cfg.beta_true.data(), cfg.beta_true.data() + cfg.beta_true.size());
      cfg = scenario_from_json(extra, cfg);
    }
  }
  cfg.validate();
  return cfg;
}

int cmd_simulate(const Settings& s) {
  const auto cfg = scenario_of(s);
  const auto ctrl = sweep_control(s, LambdaScale::per_obs);
  const auto grid = parse_grid(s.grid, nullptr, ctrl.em.lambda_scale);
  if (s.replicates < 1) throw Error(ErrorKind::config, "--replicates must be at least 1");
  const auto summary = run_monte_carlo(cfg, s.replicates, grid, ctrl, s.threads);
  json j = mc_summary_json(summary, cfg);
  j["lambda_scale"] = to_string(ctrl.em.lambda_scale);
  j["grid_size"] = grid.size();
  Outputs out(s.output_dir);
  out.add("summary.csv", mc_summary_csv(summary, cfg));
  out.add("replicates.csv", mc_replicates_csv(summary));
  out.add("summary.json", dump(j));
  out.commit();
  std::cout << mc_summary_csv(summary, cfg);
  if (summary.failures > 0) std::cout << "failed replicates: " << summary.failures << "\n";
  return 0;
}

int cmd_cv(const Settings& s) {
  const auto ds = load_dataset(s);
  const auto ctrl = sweep_control(s, LambdaScale::raw);
  const auto grid = parse_grid(s.grid, &ds, ctrl.em.lambda_scale);
  const auto folds = kfold_cv(ds, s.k, grid, ctrl, s.seed, s.threads);
  Outputs out(s.output_dir);
  out.add("folds.csv", folds_csv(folds));
  out.commit();
  std::cout << folds_csv(folds);
  return 0;
}

int cmd_reduce(const Settings& s) {
  if (s.input.empty()) throw Error(ErrorKind::usage, "--input is required");
  Settings plain = s;
  plain.standardize = false;
  const auto ds = load_dataset(plain);
  const auto report = find_linear_combos(ds.stacked_X(), s.rank_tol);

  std::ifstream in(s.input, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto table = parse_csv(buf.str());
  std::vector<bool> drop_col(table.header.size(), false);
  for (auto d : report.dropped) {
    const auto& name = ds.x_names()[d];
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (table.header[c] == name) drop_col[c] = true;
  }
  std::ostringstream csv;
  auto write_row = [&](const std::vector<std::string>& row) {
    bool first = true;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c < drop_col.size() && drop_col[c]) continue;
      if (!first) csv << ',';
      csv << csv_escape(row[c]);
      first = false;
    }
    csv << '\n';
  };
  write_row(table.header);
  for (const auto& row : table.rows) write_row(row);

  Outputs out(s.output_dir);
  out.add("reduced.csv", csv.str());
  out.add("reduction.json", dump(reduction_json(report, ds.x_names())));
  out.commit();
  std::cout << "kept " << report.kept.size() << " of " << ds.p() << " fixed-effect columns";
  if (!report.dropped.empty()) {
    std::cout << "; dropped:";
    for (auto d : report.dropped) std::cout << ' ' << ds.x_names()[d];
  }
  std::cout << "\n";
  return 0;
}

void print_error(ErrorKind kind, const std::string& message) {
  json j = {{"error", {{"kind", to_string(kind)}, {"message", message}}}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lasso selection of fixed effects in linear mixed models"};
  app.require_subcommand(1);
  Settings s;

  std::vector<std::pair<CLI::App*, std::vector<Binding>>> commands;
  auto make = [&](const std::string& name, const std::string& help) {
    commands.push_back({app.add_subcommand(name, help), {}});
    return std::make_pair(commands.back().first, &commands.back().second);
  };
  commands.reserve(5);

  {
    auto [cmd, b] = make("fit", "Penalized EM fit at one lambda");
    add_common(cmd, *b, s);
    add_data_options(cmd, *b, s);
    add_model_options(cmd, *b, s);
    bind_option(cmd, *b, "--lambda", s.lambda, "Penalty level");
  }
  {
    auto [cmd, b] = make("select", "Fit a lambda grid and select by information criterion");
    add_common(cmd, *b, s);
    add_data_options(cmd, *b, s);
    add_model_options(cmd, *b, s);
    add_select_options(cmd, *b, s);
  }
  {
    auto [cmd, b] = make("simulate", "Monte Carlo study on a simulation scenario");
    add_common(cmd, *b, s);
    add_model_options(cmd, *b, s);
    add_select_options(cmd, *b, s);
    bind_option(cmd, *b, "--scenario", s.scenario, "Scenario 1, 2 or 3");
    bind_option(cmd, *b, "--replicates", s.replicates, "Number of Monte Carlo replicates");
    bind_option(cmd, *b, "--n", s.n, "Subjects per replicate");
    bind_option(cmd, *b, "--ni", s.n_i, "Observations per subject");
    bind_option(cmd, *b, "--p", s.p, "Fixed effects (default: 9, or 50 for scenario 3)");
    bind_option(cmd, *b, "--p-star", s.p_star, "Nonzero coefficients in scenario 3");
    bind_option(cmd, *b, "--d", s.d, "Random-effect covariance: moderate | large");
    bind_option(cmd, *b, "--seed", s.seed, "Base seed");
  }
  {
    auto [cmd, b] = make("cv", "Subject-grouped k-fold cross-validation");
    add_common(cmd, *b, s);
    add_data_options(cmd, *b, s);
    add_model_options(cmd, *b, s);
    add_select_options(cmd, *b, s);
    bind_option(cmd, *b, "--k", s.k, "Number of folds");
    bind_option(cmd, *b, "--seed", s.seed, "Fold assignment seed");
  }
  {
    auto [cmd, b] = make("reduce", "Drop fixed-effect columns that are linear combinations of earlier ones");
    add_common(cmd, *b, s);
    add_data_options(cmd, *b, s);
    bind_option(cmd, *b, "--rank-tol", s.rank_tol, "Relative rank tolerance");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(ErrorKind::usage, e.what());
    return exit_code(ErrorKind::usage);
  }

  std::set<std::string> known;
  for (const auto& c : commands)
    for (const auto& b : c.second) known.insert(b.key);

  try {
    for (auto& [cmd, bindings] : commands) {
      if (!cmd->parsed()) continue;
      if (!s.config.empty()) apply_config(s.config, bindings, known, cmd);
      const std::string name = cmd->get_name();
      if ((name == "simulate" || name == "cv")) {
        const bool seeded = std::any_of(bindings.begin(), bindings.end(), [&](const Binding& b) {
          return b.key == "seed" && b.option->count() > 0;
        });
        bool in_config = false;
        if (!seeded && !s.config.empty()) {
          std::ifstream in(s.config);
          json j;
          in >> j;
          in_config = j.contains("seed");
        }
        if (!seeded && !in_config) throw Error(ErrorKind::usage, "--seed is required for " + name);
      }
      if (name == "fit") return cmd_fit(s);
      if (name == "select") return cmd_select(s);
      if (name == "simulate") return cmd_simulate(s);
      if (name == "cv") return cmd_cv(s);
      if (name == "reduce") return cmd_reduce(s);
    }
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    print_error(ErrorKind::numerical, e.what());
    return exit_code(ErrorKind::numerical);
  }
  return 0;
}
