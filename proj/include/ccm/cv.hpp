#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ccm/core.hpp"
#include "ccm/density.hpp"
#include "ccm/es.hpp"
#include "ccm/metrics.hpp"
#include "ccm/models.hpp"
#include "ccm/qp.hpp"

namespace ccm {

enum class CvKind { leave_one_out, k_fold };

struct CvScheme {
  CvKind kind = CvKind::leave_one_out;
  int folds = 10;                  // k_fold only
  std::uint64_t shuffle_seed = 0;  // fold assignment

  static CvScheme loo() { return CvScheme{CvKind::leave_one_out, 0, 0}; }
  static CvScheme kfold(int k, std::uint64_t seed = 0) {
    return CvScheme{CvKind::k_fold, k, seed};
  }
};

/// Partition of {0..n-1} into validation folds: n singletons for LOO,
/// shuffled near-equal blocks for k-fold.
inline std::vector<std::vector<long>> make_folds(long n, const CvScheme& scheme) {
  std::vector<std::vector<long>> folds;
  if (scheme.kind == CvKind::leave_one_out) {
    if (n < 2) throw data_error("cv: leave-one-out needs at least two points");
    folds.resize(n);
    for (long i = 0; i < n; ++i) folds[i] = {i};
    return folds;
  }
  if (scheme.folds < 2) throw data_error("cv: k-fold needs folds >= 2");
  if (n < scheme.folds) throw data_error("cv: more folds than points");
  std::vector<long> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(scheme.shuffle_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  folds.resize(scheme.folds);
  for (long i = 0; i < n; ++i) folds[i % scheme.folds].push_back(idx[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// Entry (i, j) is model j's prediction at x_i when fitted on every point
/// outside x_i's validation fold. Column order matches the models list.
inline PredictionMatrix build_prediction_matrix(const Dataset& data,
                                                const std::vector<std::unique_ptr<Regressor>>& models,
                                                const CvScheme& scheme) {
  if (models.empty()) throw data_error("cv: empty model list");
  const long n = data.n();
  const auto folds = make_folds(n, scheme);

  Matrix a(n, static_cast<long>(models.size()));
  std::vector<std::string> names;
  names.reserve(models.size());
  for (const auto& m : models) names.push_back(m->name());

  std::vector<char> in_fold(n);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::fill(in_fold.begin(), in_fold.end(), 0);
    for (long i : folds[f]) in_fold[i] = 1;

    const long n_train = n - static_cast<long>(folds[f].size());
    if (n_train < 1) throw data_error("cv: empty training split");
    Matrix train_x(n_train, data.dim());
    Vector train_y(n_train);
    long r = 0;
    for (long i = 0; i < n; ++i) {
      if (in_fold[i]) continue;
      train_x.row(r) = data.points.row(i);
      train_y[r] = data.targets[i];
      ++r;
    }
    Matrix val_x(static_cast<long>(folds[f].size()), data.dim());
    for (std::size_t v = 0; v < folds[f].size(); ++v) val_x.row(v) = data.points.row(folds[f][v]);

    for (std::size_t j = 0; j < models.size(); ++j) {
      try {
        models[j]->fit(train_x, train_y);
        const Vector pred = models[j]->predict(val_x);
        for (std::size_t v = 0; v < folds[f].size(); ++v) a(folds[f][v], j) = pred[v];
      } catch (const std::exception& e) {
        throw data_error("cv: model '" + names[j] + "' failed on fold " + std::to_string(f) +
                         ": " + e.what());
      }
    }
  }
  return PredictionMatrix(std::move(a), std::move(names));
}

struct EnsembleOptions {
  CvScheme cv = CvScheme::loo();
  std::optional<DensityConfig> weighting;  // nullopt = unweighted
  SolverKind solver = SolverKind::QP;
  SolverConfig qp;
  EsConfig es;
};

/// Fitted ensemble ready for deployment: the surviving models refitted on
/// the full dataset plus their (pruned, renormalized) weights.
struct EnsembleFit {
  FitReport report;
  PredictionMatrix cv_predictions;
  std::optional<DensityResult> density;
  std::optional<EsTrace> trace;  // ES solver only

  std::vector<std::unique_ptr<Regressor>> final_models;
  std::vector<std::string> final_names;
  WeightVector final_alpha;

  Vector predict(const Matrix& query) const {
    if (final_models.empty()) throw data_error("ensemble: no deployable models");
    Vector out = Vector::Zero(query.rows());
    for (std::size_t j = 0; j < final_models.size(); ++j)
      out += final_alpha[static_cast<long>(j)] * final_models[j]->predict(query);
    return out;
  }
};

/// End-to-end pipeline: optional density weights, out-of-fold prediction
/// matrix, QP build, solve (exact QP or ES baseline), then a refit of every
/// surviving model (alpha > 1e-6) on the full dataset.
inline EnsembleFit fit_ensemble(const Dataset& data,
                                std::vector<std::unique_ptr<Regressor>> models,
                                const EnsembleOptions& options = {}) {
  std::optional<DensityResult> density;
  std::optional<PointWeights> beta;
  if (options.weighting) {
    try {
      density = density_weights(data.points, *options.weighting);
      beta = density->weights;
    } catch (const data_error& e) {
      throw data_error(std::string("stage density: ") + e.what());
    }
  }

  PredictionMatrix a = [&] {
    try {
      return build_prediction_matrix(data, models, options.cv);
    } catch (const data_error& e) {
      throw data_error(std::string("stage cv: ") + e.what());
    }
  }();

  QpProblem problem = [&] {
    try {
      return build_qp(a, data.targets, beta);
    } catch (const data_error& e) {
      throw data_error(std::string("stage qp-build: ") + e.what());
    }
  }();

  FitReport report;
  std::optional<EsTrace> trace;
  try {
    if (options.solver == SolverKind::QP) {
      report = solve_qp(problem, options.qp);
    } else {
      trace = es_optimize(problem, options.es);
      report = trace->best;
    }
  } catch (const std::exception& e) {
    throw data_error(std::string("stage solve: ") + e.what());
  }

  // The solver's residual error is the weighted one when beta was applied.
  if (beta) {
    report.wrmse = report.rmse;
    report.rmse = rmse(ensemble_predict(a, report.alpha), data.targets);
  }

  EnsembleFit fit{std::move(report), std::move(a), std::move(density), std::move(trace),
                  {},               {},           WeightVector{}};

  // Drop inactive models, renormalize, refit survivors on all data.
  std::vector<double> kept_alpha;
  try {
    for (std::size_t j = 0; j < models.size(); ++j) {
      const double w = fit.report.alpha[static_cast<long>(j)];
      if (w <= kActiveWeightTol) continue;
      models[j]->fit(data.points, data.targets);
      fit.final_models.push_back(std::move(models[j]));
      fit.final_names.push_back(fit.cv_predictions.model_names[j]);
      kept_alpha.push_back(w);
    }
  } catch (const std::exception& e) {
    throw data_error(std::string("stage refit: ") + e.what());
  }
  Vector ka = Eigen::Map<Vector>(kept_alpha.data(), static_cast<long>(kept_alpha.size()));
  fit.final_alpha = make_weight_vector(ka / ka.sum());
  return fit;
}

}  // namespace ccm
