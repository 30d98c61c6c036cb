// Command-line interface: fit ensembles, compute density weights, generate
// synthetic benchmarks, export ternary grids and evaluate saved ensembles.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 solver
// non-convergence (the report is still written).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccm/ccm.hpp"

namespace {

class usage_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void print_error(const std::string& category, const std::string& message) {
  ccm::Json j;
  j["category"] = category;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

ccm::CvScheme parse_cv(const std::string& kind, std::uint64_t seed) {
  if (kind == "loo") return ccm::CvScheme::loo();
  if (kind.rfind("k:", 0) == 0) {
    int k = 0;
    try {
      k = std::stoi(kind.substr(2));
    } catch (const std::exception&) {
      throw usage_error("--cv expects loo or k:<n>, got '" + kind + "'");
    }
    return ccm::CvScheme::kfold(k, seed);
  }
  throw usage_error("--cv expects loo or k:<n>, got '" + kind + "'");
}

struct FitFlags {
  std::string data_path;
  std::string target;
  std::vector<std::string> model_ids;
  std::string predictions_path;
  std::string cv = "loo";
  std::string weighting = "none";
  int density_k = 20;
  double density_floor = 1e-6;
  std::string solver = "qp";
  std::uint64_t seed = 0;
  std::string out_path;
  std::string test_path;
  std::optional<double> roc_threshold;
  long max_iterations = 10000;
  double kkt_tolerance = 1e-8;
  long es_budget = 2000;
  std::string es_trace_path;
  std::string roc_out;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f, bool with_solver_knobs) {
  cmd->add_option("--data", f.data_path, "training data CSV")->required();
  cmd->add_option("--target", f.target, "name of the target column")->required();
  cmd->add_option("--models", f.model_ids,
                  "base model ids (rbf-gaussian, rbf-exponential, rbf-spline, knn, ridge)")
      ->delimiter(',');
  cmd->add_option("--predictions", f.predictions_path, "precomputed prediction matrix CSV");
  cmd->add_option("--cv", f.cv, "cross-validation scheme: loo or k:<n>")
      ->default_val(std::string("loo"));
  cmd->add_option("--weighting", f.weighting, "point weighting: none or density")
      ->default_val(std::string("none"));
  cmd->add_option("--density-k", f.density_k, "neighbors for density weighting")->default_val(20);
  cmd->add_option("--density-floor", f.density_floor, "lower bound on density weights")
      ->default_val(1e-6);
  cmd->add_option("--seed", f.seed, "RNG seed (cv shuffle, solvers)")->default_val(0);
  if (with_solver_knobs) {
    cmd->add_option("--solver", f.solver, "weight optimizer: qp or es")
        ->default_val(std::string("qp"));
    cmd->add_option("--max-iterations", f.max_iterations, "QP iteration cap")->default_val(10000);
    cmd->add_option("--kkt-tolerance", f.kkt_tolerance, "QP convergence tolerance")
        ->default_val(1e-8);
    cmd->add_option("--es-budget", f.es_budget, "ES evaluation budget")->default_val(2000);
    cmd->add_option("--es-trace", f.es_trace_path, "write the ES search trace to this CSV");
  }
}

struct LoadedProblem {
  std::optional<ccm::Dataset> data;
  std::optional<ccm::PredictionMatrix> predictions;  // set iff --predictions
  std::optional<ccm::DensityResult> density;
  std::optional<ccm::PointWeights> beta;
};

LoadedProblem load_problem(const FitFlags& f) {
  if (f.model_ids.empty() == f.predictions_path.empty())
    throw usage_error("exactly one of --models or --predictions is required");

  LoadedProblem p;
  p.data = ccm::dataset_from_csv(ccm::read_csv(f.data_path), f.target);

  if (f.weighting == "density") {
    ccm::DensityConfig cfg{f.density_k, f.density_floor};
    p.density = ccm::density_weights(p.data->points, cfg);
    p.beta = p.density->weights;
  } else if (f.weighting != "none") {
    throw usage_error("--weighting expects none or density, got '" + f.weighting + "'");
  }

  if (!f.predictions_path.empty()) {
    auto [a, target] = ccm::predictions_from_csv(ccm::read_csv(f.predictions_path), f.target);
    if (a.n() != p.data->n())
      throw ccm::data_error("prediction rows do not match data rows");
    p.predictions = std::move(a);
  }
  return p;
}

ccm::Json config_echo(const FitFlags& f) {
  ccm::Json j;
  j["data"] = f.data_path;
  j["target"] = f.target;
  j["models"] = f.model_ids.empty() ? ccm::Json(nullptr) : ccm::Json(f.model_ids);
  j["predictions"] = f.predictions_path.empty() ? ccm::Json(nullptr) : ccm::Json(f.predictions_path);
  j["cv"] = f.cv;
  j["weighting"] = f.weighting;
  j["density_k"] = f.density_k;
  j["density_floor"] = f.density_floor;
  j["solver"] = f.solver;
  j["seed"] = f.seed;
  j["max_iterations"] = f.max_iterations;
  j["kkt_tolerance"] = f.kkt_tolerance;
  j["es_budget"] = f.es_budget;
  j["test_file"] = f.test_path.empty() ? ccm::Json(nullptr) : ccm::Json(f.test_path);
  j["roc_threshold"] = f.roc_threshold ? ccm::Json(*f.roc_threshold) : ccm::Json(nullptr);
  return j;
}

ccm::SolverConfig qp_config(const FitFlags& f) {
  ccm::SolverConfig cfg;
  cfg.max_iterations = f.max_iterations;
  cfg.kkt_tolerance = f.kkt_tolerance;
  cfg.seed = f.seed;
  return cfg;
}

ccm::EsConfig es_config(const FitFlags& f) {
  ccm::EsConfig cfg;
  cfg.budget = f.es_budget;
  cfg.seed = f.seed;
  return cfg;
}

int cmd_fit(const FitFlags& f) {
  if (f.solver != "qp" && f.solver != "es")
    throw usage_error("--solver expects qp or es, got '" + f.solver + "'");
  LoadedProblem p = load_problem(f);

  ccm::FitReport report;
  std::vector<std::string> model_names;
  std::optional<ccm::EsTrace> trace;
  std::optional<ccm::EnsembleFit> ensemble;

  if (p.predictions) {
    // Precomputed matrix route: solve directly, nothing to refit.
    ccm::QpProblem problem = ccm::build_qp(*p.predictions, p.data->targets, p.beta);
    if (f.solver == "qp") {
      report = ccm::solve_qp(problem, qp_config(f));
    } else {
      trace = ccm::es_optimize(problem, es_config(f));
      report = trace->best;
    }
    if (p.beta) {
      report.wrmse = report.rmse;
      report.rmse = ccm::rmse(ccm::ensemble_predict(*p.predictions, report.alpha),
                              p.data->targets);
    }
    model_names = p.predictions->model_names;
  } else {
    std::vector<std::unique_ptr<ccm::Regressor>> models;
    for (const auto& id : f.model_ids) models.push_back(ccm::make_model(id));
    ccm::EnsembleOptions opts;
    opts.cv = parse_cv(f.cv, f.seed);
    if (p.beta) opts.weighting = ccm::DensityConfig{f.density_k, f.density_floor};
    opts.solver = f.solver == "qp" ? ccm::SolverKind::QP : ccm::SolverKind::ES;
    opts.qp = qp_config(f);
    opts.es = es_config(f);
    ensemble = ccm::fit_ensemble(*p.data, std::move(models), opts);
    report = ensemble->report;
    trace = std::move(ensemble->trace);
    model_names = ensemble->cv_predictions.model_names;
  }

  ccm::WeightsReport out = ccm::make_weights_report(report, model_names, f.seed, config_echo(f));

  // Scores for the optional ROC: test-set predictions when a test file is
  // given, otherwise the cross-validated ensemble predictions.
  std::optional<ccm::Vector> roc_scores;
  std::optional<ccm::Vector> roc_targets;
  if (!f.test_path.empty()) {
    if (!ensemble)
      throw ccm::data_error("--test-file requires --models (the deployable ensemble)");
    const ccm::Dataset test = ccm::dataset_from_csv(ccm::read_csv(f.test_path), f.target);
    const ccm::Vector pred = ensemble->predict(test.points);
    out.test_rmse = ccm::rmse(pred, test.targets);
    roc_scores = pred;
    roc_targets = test.targets;
  } else if (f.roc_threshold) {
    const ccm::PredictionMatrix& a = p.predictions ? *p.predictions : ensemble->cv_predictions;
    roc_scores = ccm::ensemble_predict(a, report.alpha);
    roc_targets = p.data->targets;
  }
  if (f.roc_threshold && roc_scores) {
    std::vector<bool> labels(roc_targets->size());
    for (long i = 0; i < roc_targets->size(); ++i)
      labels[i] = (*roc_targets)[i] >= *f.roc_threshold;
    const ccm::RocCurve curve = ccm::roc_curve(*roc_scores, labels);
    out.roc = ccm::roc_summary_json(curve);
    if (!f.roc_out.empty()) ccm::write_roc_csv(f.roc_out, curve);
  }

  if (trace && !f.es_trace_path.empty()) ccm::write_es_trace_csv(f.es_trace_path, *trace);
  ccm::write_json_file(f.out_path, ccm::to_json(out));

  if (!report.converged) {
    print_error("solver", "QP did not converge within max_iterations; report written with "
                          "converged=false");
    return 4;
  }
  return 0;
}

int cmd_density(const std::string& data_path, int k, double floor, const std::string& out_path) {
  const ccm::CsvTable table = ccm::read_csv(data_path);
  const ccm::DensityResult result = ccm::density_weights(table.values, ccm::DensityConfig{k, floor});
  ccm::write_density_csv(out_path, result);
  return 0;
}

int cmd_synth(int dim, int components, long samples, std::uint64_t seed,
              const std::string& out_path, std::string landscape_path) {
  const ccm::DomainBounds domain = ccm::unit_domain(dim);
  const ccm::MsgLandscape land = ccm::generate_msg(dim, components, seed, domain);
  const ccm::Matrix pts = ccm::latin_hypercube(samples, dim, seed + 1, domain);
  const ccm::Vector y = ccm::evaluate_msg(land, pts);

  std::vector<std::string> cols;
  for (int j = 0; j < dim; ++j) cols.push_back("x_" + std::to_string(j + 1));
  cols.push_back("y");
  ccm::Matrix rows(pts.rows(), dim + 1);
  rows.leftCols(dim) = pts;
  rows.col(dim) = y;
  ccm::write_csv(out_path, cols, rows);

  if (landscape_path.empty())
    landscape_path = std::filesystem::path(out_path).replace_extension(".json").string();
  ccm::write_json_file(landscape_path, ccm::landscape_to_json(land));
  return 0;
}

int cmd_ternary(const FitFlags& f, double step, const std::string& out_path) {
  LoadedProblem p = load_problem(f);

  ccm::QpProblem problem;
  if (p.predictions) {
    problem = ccm::build_qp(*p.predictions, p.data->targets, p.beta);
  } else {
    std::vector<std::unique_ptr<ccm::Regressor>> models;
    for (const auto& id : f.model_ids) models.push_back(ccm::make_model(id));
    const ccm::PredictionMatrix a =
        ccm::build_prediction_matrix(*p.data, models, parse_cv(f.cv, f.seed));
    problem = ccm::build_qp(a, p.data->targets, p.beta);
  }
  if (problem.s() != 3)
    throw ccm::data_error("ternary grids need exactly 3 models, got " +
                          std::to_string(problem.s()));
  if (!(step > 0.0) || step > 1.0) throw usage_error("--step must lie in (0, 1]");

  const long m = std::lround(1.0 / step);
  const ccm::FitReport report = ccm::solve_qp(problem, qp_config(f));

  std::vector<double> rows;
  for (long i = 0; i <= m; ++i) {
    for (long j = 0; j <= m - i; ++j) {
      const long k = m - i - j;
      ccm::Vector alpha(3);
      alpha << static_cast<double>(i) / m, static_cast<double>(j) / m,
          static_cast<double>(k) / m;
      rows.insert(rows.end(), {alpha[0], alpha[1], alpha[2], problem.residual_rmse(alpha), 0.0});
    }
  }
  rows.insert(rows.end(), {report.alpha[0], report.alpha[1], report.alpha[2],
                           problem.residual_rmse(report.alpha.alpha), 1.0});

  const long n_rows = static_cast<long>(rows.size()) / 5;
  ccm::Matrix table = Eigen::Map<
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(rows.data(), n_rows,
                                                                              5);
  ccm::write_csv(out_path, {"alpha_1", "alpha_2", "alpha_3", "rmse", "is_optimum"}, table);
  return 0;
}

struct EvalFlags {
  std::string weights_path;
  std::string data_path;
  std::string predictions_path;
  std::string point_weights_path;
  std::optional<double> roc_threshold;
  std::string out_path;
  std::string pairs_out;
  std::string roc_out;
};

int cmd_eval(const EvalFlags& f) {
  const ccm::WeightsReport report =
      ccm::weights_report_from_json(ccm::read_json_file(f.weights_path));
  const std::string target = report.config_echo.value("target", std::string());
  if (target.empty()) throw ccm::data_error("weights report lacks a target column in config_echo");

  const ccm::Dataset data = ccm::dataset_from_csv(ccm::read_csv(f.data_path), target);

  ccm::Vector predicted;
  if (!f.predictions_path.empty()) {
    auto [a, ignored] = ccm::predictions_from_csv(ccm::read_csv(f.predictions_path), target);
    if (a.n() != data.n()) throw ccm::data_error("prediction rows do not match data rows");
    // Align columns with the report's model order.
    ccm::Matrix aligned(a.n(), static_cast<long>(report.models.size()));
    for (std::size_t j = 0; j < report.models.size(); ++j) {
      long col = -1;
      for (std::size_t q = 0; q < a.model_names.size(); ++q)
        if (a.model_names[q] == report.models[j]) col = static_cast<long>(q);
      if (col < 0)
        throw ccm::data_error("prediction file lacks model column '" + report.models[j] + "'");
      aligned.col(static_cast<long>(j)) = a.entries.col(col);
    }
    predicted = aligned * report.alpha;
  } else {
    // Rebuild the deployable ensemble: refit the active models on the
    // training data recorded in the report, then predict here.
    if (report.config_echo.value("models", ccm::Json(nullptr)).is_null())
      throw ccm::data_error("report was fitted from a precomputed matrix; pass --predictions");
    const std::string train_path = report.config_echo.value("data", std::string());
    const ccm::Dataset train = ccm::dataset_from_csv(ccm::read_csv(train_path), target);
    predicted = ccm::Vector::Zero(data.n());
    double kept = 0.0;
    std::vector<std::pair<std::unique_ptr<ccm::Regressor>, double>> active;
    for (std::size_t j = 0; j < report.models.size(); ++j) {
      if (report.alpha[static_cast<long>(j)] <= ccm::kActiveWeightTol) continue;
      auto model = ccm::make_model(report.models[j]);
      model->fit(train.points, train.targets);
      active.emplace_back(std::move(model), report.alpha[static_cast<long>(j)]);
      kept += report.alpha[static_cast<long>(j)];
    }
    for (const auto& [model, w] : active) predicted += (w / kept) * model->predict(data.points);
  }

  ccm::Json out;
  out["n"] = data.n();
  out["models"] = report.models;
  out["rmse"] = ccm::rmse(predicted, data.targets);

  std::optional<ccm::PointWeights> beta;
  if (!f.point_weights_path.empty()) {
    const ccm::CsvTable table = ccm::read_csv(f.point_weights_path);
    const long col = table.column_index("beta");
    if (col < 0) throw ccm::data_error("point weights file lacks a 'beta' column");
    if (table.values.rows() != data.n())
      throw ccm::data_error("point weights rows do not match data rows");
    beta = ccm::make_point_weights(table.values.col(col));
  } else if (report.config_echo.value("weighting", std::string()) == "density") {
    ccm::DensityConfig cfg{report.config_echo.value("density_k", 20),
                           report.config_echo.value("density_floor", 1e-6)};
    beta = ccm::density_weights(data.points, cfg).weights;
  }
  out["wrmse"] = beta ? ccm::Json(ccm::wrmse(predicted, data.targets, *beta)) : ccm::Json(nullptr);

  if (f.roc_threshold) {
    std::vector<bool> labels(data.n());
    for (long i = 0; i < data.n(); ++i) labels[i] = data.targets[i] >= *f.roc_threshold;
    const ccm::RocCurve curve = ccm::roc_curve(predicted, labels);
    out["roc"] = ccm::roc_summary_json(curve);
    if (!f.roc_out.empty()) ccm::write_roc_csv(f.roc_out, curve);
  }

  ccm::write_json_file(f.out_path, out);

  if (!f.pairs_out.empty()) {
    ccm::Matrix pairs(data.n(), 2);
    pairs.col(0) = data.targets;
    pairs.col(1) = predicted;
    ccm::write_csv(f.pairs_out, {"actual", "predicted"}, pairs);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimally weighted convex combinations of regression models"};
  app.require_subcommand(1);

  FitFlags fit_flags;
  double fit_roc_threshold = 0.0;
  auto* fit = app.add_subcommand("fit", "fit ensemble weights by exact QP or the ES baseline");
  add_fit_flags(fit, fit_flags, true);
  fit->add_option("--out", fit_flags.out_path, "output report JSON")->required();
  fit->add_option("--test-file", fit_flags.test_path, "held-out test set CSV");
  auto* fit_roc = fit->add_option("--roc-threshold", fit_roc_threshold,
                                  "activity cutoff on the target for ROC evaluation");
  fit->add_option("--roc-out", fit_flags.roc_out, "write the ROC curve to this CSV");

  std::string density_data, density_out;
  int density_k = 20;
  double density_floor = 1e-6;
  auto* density = app.add_subcommand("density", "compute per-point density weights");
  density->add_option("--data", density_data, "points CSV (all columns are coordinates)")
      ->required();
  density->add_option("--density-k", density_k, "neighbors per point")->default_val(20);
  density->add_option("--density-floor", density_floor, "lower bound on weights")
      ->default_val(1e-6);
  density->add_option("--out", density_out, "output CSV (point_index, raw_density, beta)")
      ->required();

  int synth_dim = 4, synth_components = 160;
  long synth_samples = 160;
  std::uint64_t synth_seed = 0;
  std::string synth_out, synth_landscape;
  auto* synth = app.add_subcommand("synth", "generate an MSG landscape and an LHS sample of it");
  synth->add_option("--dim", synth_dim, "input dimension")->default_val(4);
  synth->add_option("--components", synth_components, "Gaussian component count")
      ->default_val(160);
  synth->add_option("--samples", synth_samples, "LHS sample size")->default_val(160);
  synth->add_option("--seed", synth_seed, "RNG seed (landscape: seed, design: seed+1)")
      ->default_val(0);
  synth->add_option("--out", synth_out, "output dataset CSV (x_1..x_d, y)")->required();
  synth->add_option("--landscape-out", synth_landscape,
                    "landscape parameters JSON (default: --out with .json)");

  FitFlags ternary_flags;
  double ternary_step = 0.01;
  std::string ternary_out;
  auto* ternary =
      app.add_subcommand("ternary", "objective values on the 2-simplex grid for 3 models");
  add_fit_flags(ternary, ternary_flags, false);
  ternary->add_option("--step", ternary_step, "barycentric grid step")->default_val(0.01);
  ternary->add_option("--out", ternary_out, "output CSV")->required();

  EvalFlags eval_flags;
  double eval_roc_threshold = 0.0;
  auto* eval = app.add_subcommand("eval", "score a saved ensemble on a dataset");
  eval->add_option("--weights", eval_flags.weights_path, "weights report JSON from fit")
      ->required();
  eval->add_option("--data", eval_flags.data_path, "evaluation data CSV")->required();
  eval->add_option("--predictions", eval_flags.predictions_path,
                   "precomputed prediction matrix CSV for this data");
  eval->add_option("--point-weights", eval_flags.point_weights_path,
                   "per-point weights CSV with a beta column (as written by density)");
  auto* eval_roc = eval->add_option("--roc-threshold", eval_roc_threshold,
                                    "activity cutoff on the target for ROC evaluation");
  eval->add_option("--out", eval_flags.out_path, "output metrics JSON")->required();
  eval->add_option("--pairs-out", eval_flags.pairs_out, "write (actual, predicted) pairs CSV");
  eval->add_option("--roc-out", eval_flags.roc_out, "write the ROC curve to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit->parsed()) {
      if (*fit_roc) fit_flags.roc_threshold = fit_roc_threshold;
      return cmd_fit(fit_flags);
    }
    if (density->parsed()) return cmd_density(density_data, density_k, density_floor, density_out);
    if (synth->parsed())
      return cmd_synth(synth_dim, synth_components, synth_samples, synth_seed, synth_out,
                       synth_landscape);
    if (ternary->parsed()) return cmd_ternary(ternary_flags, ternary_step, ternary_out);
    if (eval->parsed()) {
      if (*eval_roc) eval_flags.roc_threshold = eval_roc_threshold;
      return cmd_eval(eval_flags);
    }
  } catch (const usage_error& e) {
    print_error("usage", e.what());
    return 2;
  } catch (const ccm::data_error& e) {
    print_error("data", e.what());
    return 3;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
