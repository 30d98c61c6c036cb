#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ccm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Invalid or inconsistent input data (bad dimensions, non-finite values,
/// malformed files). The CLI maps this to exit code 3.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Simplex tolerances. Solvers return floating-point iterates, so weight
// vectors are accepted within these bounds and repaired on construction.
inline constexpr double kSimplexSumTol = 1e-9;
inline constexpr double kSimplexNegTol = 1e-12;
// Weights below this are treated as inactive when pruning an ensemble.
inline constexpr double kActiveWeightTol = 1e-6;

/// Sample points with target values: the ground truth the ensemble is
/// fitted against. points is n x d, targets has length n.
struct Dataset {
  Matrix points;
  Vector targets;
  std::vector<std::string> feature_names;  // optional column labels

  Dataset(Matrix pts, Vector y, std::vector<std::string> names = {})
      : points(std::move(pts)), targets(std::move(y)), feature_names(std::move(names)) {
    if (points.rows() < 1 || points.cols() < 1)
      throw data_error("dataset: need at least one point and one dimension");
    if (targets.size() != points.rows())
      throw data_error("dataset: targets length does not match point count");
    if (!points.allFinite() || !targets.allFinite())
      throw data_error("dataset: non-finite entries");
    if (!feature_names.empty() && static_cast<long>(feature_names.size()) != points.cols())
      throw data_error("dataset: feature_names length does not match dimension");
  }

  long n() const { return points.rows(); }
  long dim() const { return points.cols(); }
};

/// n x s matrix of cross-validated base-model predictions: column j holds
/// model j's out-of-fold predictions at the n sample points.
struct PredictionMatrix {
  Matrix entries;
  std::vector<std::string> model_names;

  PredictionMatrix(Matrix m, std::vector<std::string> names)
      : entries(std::move(m)), model_names(std::move(names)) {
    if (entries.cols() < 1 || entries.rows() < 1)
      throw data_error("prediction matrix: need at least one row and one column");
    if (static_cast<long>(model_names.size()) != entries.cols())
      throw data_error("prediction matrix: model_names length does not match column count");
    if (!entries.allFinite()) throw data_error("prediction matrix: non-finite entries");
  }

  long n() const { return entries.rows(); }
  long s() const { return entries.cols(); }
};

/// Convex combination coefficients over s models: entries nonnegative,
/// summing to one. Produce via make_weight_vector.
struct WeightVector {
  Vector alpha;

  long size() const { return alpha.size(); }
  double operator[](long i) const { return alpha[i]; }
};

/// Validates a raw coefficient vector against the simplex, clamps tiny
/// negative entries (>= -1e-12) to exactly 0 and renormalizes the sum to 1.
/// Rejects vectors outside tolerance. Idempotent.
inline WeightVector make_weight_vector(const Vector& raw) {
  const long s = raw.size();
  if (s < 1) throw data_error("weight vector: empty input");
  if (!raw.allFinite()) throw data_error("weight vector: non-finite entries");

  Vector a = raw;
  for (long i = 0; i < s; ++i) {
    if (a[i] < -kSimplexNegTol)
      throw data_error("weight vector: negative entry beyond tolerance");
    if (a[i] < 0.0) a[i] = 0.0;
  }
  const double sum = a.sum();
  if (std::abs(sum - 1.0) > kSimplexSumTol)
    throw data_error("weight vector: sum deviates from 1 beyond tolerance");
  // Skip the division when the sum already matches 1 to rounding accuracy,
  // which makes repeated construction bitwise stable.
  const double eps = std::numeric_limits<double>::epsilon();
  if (std::abs(sum - 1.0) > 4.0 * eps * static_cast<double>(s)) a /= sum;
  return WeightVector{std::move(a)};
}

/// Per-point weights beta in (0, 1] applied to residuals in the wRMSE.
struct PointWeights {
  Vector beta;

  long size() const { return beta.size(); }
};

inline PointWeights make_point_weights(const Vector& raw) {
  if (raw.size() < 1) throw data_error("point weights: empty input");
  if (!raw.allFinite()) throw data_error("point weights: non-finite entries");
  if ((raw.array() <= 0.0).any() || (raw.array() > 1.0).any())
    throw data_error("point weights: entries must lie in (0, 1]");
  return PointWeights{raw};
}

enum class SolverKind { QP, ES };

inline const char* solver_name(SolverKind k) { return k == SolverKind::QP ? "qp" : "es"; }

/// Solver output: optimal weights plus achieved errors and certificates.
/// kkt_residual is present iff solver == QP; wrmse is present iff the
/// fit used point weights.
struct FitReport {
  WeightVector alpha;
  double rmse = 0.0;
  std::optional<double> wrmse;
  SolverKind solver = SolverKind::QP;
  long iterations = 0;
  std::optional<double> kkt_residual;
  bool converged = true;
  std::vector<std::string> active_models;  // names with alpha_i > 1e-6
};

/// Ensemble prediction A * alpha: entry i is sum_j alpha_j * a_ij.
inline Vector ensemble_predict(const PredictionMatrix& a, const WeightVector& alpha) {
  if (a.s() != alpha.size())
    throw data_error("ensemble_predict: weight count does not match model count");
  return a.entries * alpha.alpha;
}

}  // namespace ccm
