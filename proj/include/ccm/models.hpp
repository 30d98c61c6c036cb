#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ccm/core.hpp"

namespace ccm {

/// A regression model: fit on (points, targets), then predict at query
/// points. predict is deterministic after fit.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual void fit(const Matrix& points, const Vector& targets) = 0;
  virtual Vector predict(const Matrix& query) const = 0;
  virtual std::string name() const = 0;
};

enum class RbfKernel { gaussian, exponential, spline };

inline const char* rbf_kernel_name(RbfKernel k) {
  switch (k) {
    case RbfKernel::gaussian: return "gaussian";
    case RbfKernel::exponential: return "exponential";
    default: return "spline";
  }
}

/// Radial basis interpolant with a constant trend term fitted jointly,
/// f(x) = mu + sum_i w_i phi(||x - x_i||), so predictions revert to the
/// trend far from the data and shifting the targets shifts predictions.
///
/// Kernels (theta the shape parameter, r the Euclidean distance):
///   gaussian     phi(r) = exp(-theta r^2)
///   exponential  phi(r) = exp(-theta r)
///   spline       phi(r) = zeta(theta r), the compactly supported
///                piecewise cubic
///                  zeta(u) = 1 - 15 u^2 + 30 u^3        for u <= 0.2
///                  zeta(u) = 1.25 (1 - u)^3             for 0.2 < u < 1
///                  zeta(u) = 0                          for u >= 1
class RbfModel final : public Regressor {
 public:
  explicit RbfModel(RbfKernel kernel = RbfKernel::gaussian, double shape = 1.0,
                    double nugget = 1e-10)
      : kernel_(kernel), shape_(shape), nugget_(nugget) {
    if (!(shape_ > 0.0)) throw data_error("rbf: shape must be positive");
    if (nugget_ < 0.0) throw data_error("rbf: nugget must be nonnegative");
  }

  double basis(double r) const {
    switch (kernel_) {
      case RbfKernel::gaussian: return std::exp(-shape_ * r * r);
      case RbfKernel::exponential: return std::exp(-shape_ * r);
      default: {
        const double u = shape_ * r;
        if (u >= 1.0) return 0.0;
        if (u <= 0.2) return 1.0 - 15.0 * u * u + 30.0 * u * u * u;
        const double t = 1.0 - u;
        return 1.25 * t * t * t;
      }
    }
  }

  void fit(const Matrix& points, const Vector& targets) override {
    const long n = points.rows();
    if (n < 1) throw data_error("rbf: need at least one training point");
    if (targets.size() != n) throw data_error("rbf: targets length mismatch");

    // Bordered system [K + nugget*I, 1; 1', 0] [w; mu] = [y; 0].
    Matrix sys = Matrix::Zero(n + 1, n + 1);
    for (long i = 0; i < n; ++i) {
      for (long j = 0; j < n; ++j)
        sys(i, j) = basis((points.row(i) - points.row(j)).norm());
      sys(i, i) += nugget_;
      sys(i, n) = 1.0;
      sys(n, i) = 1.0;
    }
    Vector rhs = Vector::Zero(n + 1);
    rhs.head(n) = targets;

    Eigen::PartialPivLU<Matrix> lu(sys);
    Vector sol = lu.solve(rhs);
    // Backward-error test: ill-conditioned kernels are usable (the solve is
    // stable), a genuinely singular system is not.
    const double scale = sys.norm() * sol.norm() + rhs.norm() + 1.0;
    if (!sol.allFinite() || (sys * sol - rhs).norm() > 1e-8 * scale)
      throw data_error("rbf: singular kernel matrix beyond nugget repair");

    train_ = points;
    weights_ = sol.head(n);
    trend_ = sol[n];
    fitted_ = true;
  }

  Vector predict(const Matrix& query) const override {
    check_fitted(query.cols());
    Vector out(query.rows());
    for (long i = 0; i < query.rows(); ++i) {
      double acc = trend_;
      for (long j = 0; j < train_.rows(); ++j)
        acc += weights_[j] * basis((query.row(i) - train_.row(j)).norm());
      out[i] = acc;
    }
    return out;
  }

  std::string name() const override { return std::string("rbf-") + rbf_kernel_name(kernel_); }

  double trend() const { return trend_; }
  const Vector& weights() const { return weights_; }

 private:
  void check_fitted(long dim) const {
    if (!fitted_) throw data_error("rbf: predict before fit");
    if (dim != train_.cols()) throw data_error("rbf: query dimension mismatch");
  }

  RbfKernel kernel_;
  double shape_;
  double nugget_;
  Matrix train_;
  Vector weights_;
  double trend_ = 0.0;
  bool fitted_ = false;
};

enum class KnnWeighting { uniform, inverse_distance };

/// k-nearest-neighbor regression; the prediction is a convex combination
/// of the k nearest training targets. Distance ties break by training index.
class KnnRegressor final : public Regressor {
 public:
  explicit KnnRegressor(int k_neighbors = 5, KnnWeighting weighting = KnnWeighting::uniform)
      : k_(k_neighbors), weighting_(weighting) {
    if (k_ < 1) throw data_error("knn: k_neighbors must be >= 1");
  }

  void fit(const Matrix& points, const Vector& targets) override {
    if (points.rows() < k_) throw data_error("knn: fewer training points than k_neighbors");
    if (targets.size() != points.rows()) throw data_error("knn: targets length mismatch");
    train_ = points;
    targets_ = targets;
    fitted_ = true;
  }

  Vector predict(const Matrix& query) const override {
    if (!fitted_) throw data_error("knn: predict before fit");
    if (query.cols() != train_.cols()) throw data_error("knn: query dimension mismatch");
    const long n = train_.rows();
    Vector out(query.rows());
    std::vector<std::pair<double, long>> dist(n);
    for (long i = 0; i < query.rows(); ++i) {
      for (long j = 0; j < n; ++j)
        dist[j] = {(query.row(i) - train_.row(j)).norm(), j};
      std::partial_sort(dist.begin(), dist.begin() + k_, dist.end());
      if (weighting_ == KnnWeighting::uniform) {
        double acc = 0.0;
        for (int m = 0; m < k_; ++m) acc += targets_[dist[m].second];
        out[i] = acc / k_;
      } else {
        // Exact hit wins outright; otherwise inverse-distance weights.
        if (dist[0].first == 0.0) {
          out[i] = targets_[dist[0].second];
          continue;
        }
        double wsum = 0.0;
        double acc = 0.0;
        for (int m = 0; m < k_; ++m) {
          const double w = 1.0 / dist[m].first;
          wsum += w;
          acc += w * targets_[dist[m].second];
        }
        out[i] = acc / wsum;
      }
    }
    return out;
  }

  std::string name() const override { return "knn"; }

 private:
  int k_;
  KnnWeighting weighting_;
  Matrix train_;
  Vector targets_;
  bool fitted_ = false;
};

/// Linear model solving the regularized normal equations
/// (X'X + lambda I) w = X'y. With an intercept the data is centered first
/// and the intercept absorbs the means, so it is not penalized.
class RidgeRegressor final : public Regressor {
 public:
  explicit RidgeRegressor(double lambda = 1e-6, bool intercept = true)
      : lambda_(lambda), intercept_(intercept) {
    if (lambda_ < 0.0) throw data_error("ridge: lambda must be nonnegative");
  }

  void fit(const Matrix& points, const Vector& targets) override {
    const long n = points.rows();
    const long d = points.cols();
    if (n < 1) throw data_error("ridge: need at least one training point");
    if (targets.size() != n) throw data_error("ridge: targets length mismatch");

    Matrix x = points;
    Vector y = targets;
    if (intercept_) {
      x_mean_ = points.colwise().mean();
      y_mean_ = targets.mean();
      x.rowwise() -= x_mean_.transpose();
      y.array() -= y_mean_;
    } else {
      x_mean_ = Vector::Zero(d);
      y_mean_ = 0.0;
    }
    Matrix gram = x.transpose() * x;
    gram.diagonal().array() += lambda_;
    coef_ = Eigen::LDLT<Matrix>(gram).solve(x.transpose() * y);
    if (!coef_.allFinite()) throw data_error("ridge: singular normal equations");
    fitted_ = true;
  }

  Vector predict(const Matrix& query) const override {
    if (!fitted_) throw data_error("ridge: predict before fit");
    if (query.cols() != coef_.size()) throw data_error("ridge: query dimension mismatch");
    return ((query.rowwise() - x_mean_.transpose()) * coef_).array() + y_mean_;
  }

  std::string name() const override { return "ridge"; }

  const Vector& coefficients() const { return coef_; }
  double intercept_value() const { return y_mean_ - x_mean_.dot(coef_); }

 private:
  double lambda_;
  bool intercept_;
  Vector x_mean_;
  double y_mean_ = 0.0;
  Vector coef_;
  bool fitted_ = false;
};

/// The model zoo by string identifier: "rbf-gaussian", "rbf-exponential",
/// "rbf-spline", "knn", "ridge".
inline std::unique_ptr<Regressor> make_model(const std::string& id) {
  if (id == "rbf-gaussian") return std::make_unique<RbfModel>(RbfKernel::gaussian);
  if (id == "rbf-exponential") return std::make_unique<RbfModel>(RbfKernel::exponential);
  if (id == "rbf-spline") return std::make_unique<RbfModel>(RbfKernel::spline);
  if (id == "knn") return std::make_unique<KnnRegressor>();
  if (id == "ridge") return std::make_unique<RidgeRegressor>();
  throw data_error("unknown model id: " + id);
}

}  // namespace ccm
