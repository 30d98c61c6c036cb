#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ccm/core.hpp"

namespace ccm {

struct DensityConfig {
  int k = 20;           // nearest neighbors used per point
  double floor = 1e-6;  // lower bound applied to beta

  void validate() const {
    if (k < 1) throw data_error("density: k must be >= 1");
    if (!(floor > 0.0) || !(floor < 1.0)) throw data_error("density: floor must lie in (0, 1)");
  }
};

struct DensityResult {
  Vector raw_density;    // median kNN distances, post-truncation
  PointWeights weights;  // beta = raw_density / max(raw_density), floored
  double mean_density;   // mean of the pre-truncation densities
  long truncated_count;  // points whose raw value exceeded the mean
};

/// Entry i is the median Euclidean distance from point i to its
/// min(k, n-1) nearest neighbors, self excluded. The median of an even
/// count is the mean of the two middle values. Neighbor ties are broken
/// by point index. Reference O(n^2 d) search.
inline Vector knn_median_density(const Matrix& points, int k) {
  const long n = points.rows();
  if (n < 2) throw data_error("knn_median_density: need at least two points");
  if (k < 1) throw data_error("knn_median_density: k must be >= 1");
  if (!points.allFinite()) throw data_error("knn_median_density: non-finite coordinates");

  const long kk = std::min<long>(k, n - 1);
  Vector out(n);
  std::vector<std::pair<double, long>> dist(n);  // (squared distance, index)
  for (long i = 0; i < n; ++i) {
    const Vector sq = (points.rowwise() - points.row(i)).rowwise().squaredNorm();
    long m = 0;
    for (long j = 0; j < n; ++j) {
      if (j == i) continue;
      dist[m++] = {sq[j], j};
    }
    std::nth_element(dist.begin(), dist.begin() + (kk - 1), dist.begin() + m);
    std::sort(dist.begin(), dist.begin() + kk);
    if (kk % 2 == 1) {
      out[i] = std::sqrt(dist[kk / 2].first);
    } else {
      out[i] = 0.5 * (std::sqrt(dist[kk / 2 - 1].first) + std::sqrt(dist[kk / 2].first));
    }
  }
  return out;
}

/// Density weighting pipeline: kNN median densities, truncation at the
/// mean, normalization by the maximum, then the floor. Points in
/// neighborhoods at least as sparse as the mean get beta = 1.
inline DensityResult density_weights(const Matrix& points, const DensityConfig& config = {}) {
  config.validate();
  Vector dens = knn_median_density(points, config.k);
  const long n = dens.size();

  const double mean = dens.mean();
  long truncated = 0;
  for (long i = 0; i < n; ++i) {
    if (dens[i] > mean) {
      dens[i] = mean;
      ++truncated;
    }
  }
  const double max = dens.maxCoeff();
  if (max <= 0.0)
    throw data_error("density_weights: all points identical; weighting is undefined, use uniform weights");

  Vector beta(n);
  for (long i = 0; i < n; ++i) beta[i] = std::max(dens[i] / max, config.floor);
  return DensityResult{std::move(dens), make_point_weights(beta), mean, truncated};
}

}  // namespace ccm
