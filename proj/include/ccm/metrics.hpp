#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <vector>

#include "ccm/core.hpp"

namespace ccm {

namespace detail {

// Neumaier-compensated sum; keeps long residual sums stable.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

inline double mse(const Vector& predictions, const Vector& targets) {
  const long n = predictions.size();
  if (n < 1) throw data_error("mse: empty input");
  if (targets.size() != n) throw data_error("mse: length mismatch");
  if (!predictions.allFinite() || !targets.allFinite()) throw data_error("mse: non-finite input");
  detail::CompensatedSum acc;
  for (long i = 0; i < n; ++i) {
    const double r = targets[i] - predictions[i];
    acc.add(r * r);
  }
  return acc.value() / static_cast<double>(n);
}

/// sqrt(1/n * sum (y_i - yhat_i)^2)
inline double rmse(const Vector& predictions, const Vector& targets) {
  return std::sqrt(mse(predictions, targets));
}

/// sqrt(1/n * sum (beta_i (y_i - yhat_i))^2); reduces to rmse for beta == 1.
inline double wrmse(const Vector& predictions, const Vector& targets, const PointWeights& beta) {
  const long n = predictions.size();
  if (n < 1) throw data_error("wrmse: empty input");
  if (targets.size() != n || beta.size() != n) throw data_error("wrmse: length mismatch");
  detail::CompensatedSum acc;
  for (long i = 0; i < n; ++i) {
    const double r = beta.beta[i] * (targets[i] - predictions[i]);
    acc.add(r * r);
  }
  return std::sqrt(acc.value() / static_cast<double>(n));
}

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;
};

struct YoudenPoint {
  double threshold;
  double j;  // tpr - fpr at the optimal threshold
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold descending, (0,0) to (1,1)
  double auc = 0.0;
  YoudenPoint youden;
};

/// Threshold sweep over the unique score values, ties grouped into single
/// steps. A point is predicted positive when score >= threshold. AUC by the
/// trapezoidal rule; the Youden point maximizes tpr - fpr, ties broken by
/// the lower threshold.
inline RocCurve roc_curve(const Vector& scores, const std::vector<bool>& labels) {
  const long n = scores.size();
  if (n < 1 || static_cast<long>(labels.size()) != n)
    throw data_error("roc_curve: length mismatch or empty input");
  if (!scores.allFinite()) throw data_error("roc_curve: non-finite scores");

  long pos = 0;
  for (bool l : labels) pos += l ? 1 : 0;
  const long neg = n - pos;
  if (pos == 0 || neg == 0) throw data_error("roc_curve: labels contain a single class");

  std::vector<long> order(n);
  for (long i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](long a, long b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});

  long tp = 0;
  long fp = 0;
  double auc = 0.0;
  double prev_fpr = 0.0;
  double prev_tpr = 0.0;
  long i = 0;
  while (i < n) {
    const double score = scores[order[i]];
    while (i < n && scores[order[i]] == score) {
      if (labels[order[i]])
        ++tp;
      else
        ++fp;
      ++i;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
    const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    auc += 0.5 * (fpr - prev_fpr) * (tpr + prev_tpr);
    curve.points.push_back({fpr, tpr, score});
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  curve.auc = auc;

  const RocPoint* best = &curve.points.front();
  for (const auto& p : curve.points) {
    const double j = p.tpr - p.fpr;
    const double jb = best->tpr - best->fpr;
    if (j > jb || (j == jb && p.threshold < best->threshold)) best = &p;
  }
  curve.youden = {best->threshold, best->tpr - best->fpr, best->fpr, best->tpr};
  return curve;
}

}  // namespace ccm
