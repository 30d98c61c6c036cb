#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "ccm/core.hpp"

namespace ccm {

using DomainBounds = std::vector<std::pair<double, double>>;  // per-dimension [low, high]

inline DomainBounds unit_domain(int dim) {
  return DomainBounds(static_cast<std::size_t>(dim), {0.0, 1.0});
}

struct MsgComponent {
  Vector mean;
  Matrix covariance;  // symmetric positive definite
  double amplitude;   // peak height at the mean
};

/// Max-set-of-Gaussians landscape: the objective value at x is the maximum
/// over components of amplitude * exp(-1/2 (x - mean)' Sigma^-1 (x - mean)).
struct MsgLandscape {
  int dim = 0;
  std::vector<MsgComponent> components;
  DomainBounds domain;
};

namespace detail {

inline void validate_domain(const DomainBounds& domain, int dim) {
  if (static_cast<int>(domain.size()) != dim) throw data_error("domain: wrong dimension count");
  for (const auto& [lo, hi] : domain)
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw data_error("domain: bounds must be finite with low < high");
}

// Random orthogonal matrix: QR of a Gaussian matrix, signs fixed so the
// factorization is unique.
inline Matrix random_rotation(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace detail

/// Generates a landscape with random means uniform in the domain, random
/// SPD covariances (eigenvalues log-uniform in [0.05, 0.5] times the squared
/// mean domain width, random rotation) and amplitudes uniform in (0, 1]
/// with the largest one set to exactly 1, so the global maximum is known.
inline MsgLandscape generate_msg(int dim, int n_components, std::uint64_t seed,
                                 const DomainBounds& domain) {
  if (dim < 1) throw data_error("msg: dim must be >= 1");
  if (n_components < 1) throw data_error("msg: n_components must be >= 1");
  detail::validate_domain(domain, dim);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double mean_width = 0.0;
  for (const auto& [lo, hi] : domain) mean_width += hi - lo;
  mean_width /= static_cast<double>(dim);
  const double scale_lo = 0.05 * mean_width * mean_width;
  const double scale_hi = 0.5 * mean_width * mean_width;

  MsgLandscape land;
  land.dim = dim;
  land.domain = domain;
  land.components.reserve(n_components);
  for (int c = 0; c < n_components; ++c) {
    MsgComponent comp;
    comp.mean = Vector(dim);
    for (int j = 0; j < dim; ++j)
      comp.mean[j] = domain[j].first + (domain[j].second - domain[j].first) * unit(rng);
    Vector eig(dim);
    for (int j = 0; j < dim; ++j)
      eig[j] = scale_lo * std::exp(std::log(scale_hi / scale_lo) * unit(rng));
    const Matrix rot = detail::random_rotation(dim, rng);
    comp.covariance = rot * eig.asDiagonal() * rot.transpose();
    comp.amplitude = 1.0 - unit(rng);  // (0, 1]
    land.components.push_back(std::move(comp));
  }
  std::size_t argmax = 0;
  for (std::size_t c = 1; c < land.components.size(); ++c)
    if (land.components[c].amplitude > land.components[argmax].amplitude) argmax = c;
  land.components[argmax].amplitude = 1.0;
  return land;
}

/// Evaluates the landscape at each row of points (defined on all of R^d).
inline Vector evaluate_msg(const MsgLandscape& land, const Matrix& points) {
  if (points.cols() != land.dim) throw data_error("msg: point dimension mismatch");
  if (land.components.empty()) throw data_error("msg: empty landscape");

  std::vector<Eigen::LLT<Matrix>> factors;
  factors.reserve(land.components.size());
  for (const auto& comp : land.components) {
    factors.emplace_back(comp.covariance);
    if (factors.back().info() != Eigen::Success)
      throw data_error("msg: covariance not positive definite");
  }

  Vector out(points.rows());
  for (long i = 0; i < points.rows(); ++i) {
    double best = 0.0;
    for (std::size_t c = 0; c < land.components.size(); ++c) {
      const Vector diff = points.row(i).transpose() - land.components[c].mean;
      const double quad = diff.dot(factors[c].solve(diff));
      best = std::max(best, land.components[c].amplitude * std::exp(-0.5 * quad));
    }
    out[i] = best;
  }
  return out;
}

/// Latin hypercube design: per dimension, a random permutation of the n
/// strata with one uniform draw inside each stratum, mapped to the domain.
inline Matrix latin_hypercube(long n, int dim, std::uint64_t seed, const DomainBounds& domain) {
  if (n < 1) throw data_error("lhs: n must be >= 1");
  if (dim < 1) throw data_error("lhs: dim must be >= 1");
  detail::validate_domain(domain, dim);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix pts(n, dim);
  std::vector<long> strata(n);
  for (int j = 0; j < dim; ++j) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    const double lo = domain[j].first;
    const double width = domain[j].second - domain[j].first;
    for (long i = 0; i < n; ++i) {
      const double u = (static_cast<double>(strata[i]) + unit(rng)) / static_cast<double>(n);
      pts(i, j) = lo + width * u;
    }
  }
  return pts;
}

}  // namespace ccm
