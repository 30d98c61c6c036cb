#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "ccm/core.hpp"

namespace ccm {

/// Simplex-constrained least squares in quadratic form. Minimizing
/// 1/2 a'Qa + c'a over the simplex, with Q = A'A and c = -A'y, is
/// equivalent to minimizing ||A a - y||^2; const_term = y'y completes the
/// objective so residual norms can be reconstructed. The (optionally
/// row-weighted) data is kept so achieved errors are computed from the
/// residual itself rather than the quadratic form.
struct QpProblem {
  Matrix q;           // s x s, symmetric PSD
  Vector c;           // length s
  double const_term;  // y'y
  long n;             // sample count
  Matrix a_tilde;     // n x s weighted predictions
  Vector y_tilde;     // length n weighted targets
  std::vector<std::string> model_names;

  long s() const { return q.rows(); }

  // 1/2 a'Qa + c'a
  double objective(const Vector& alpha) const {
    return 0.5 * alpha.dot(q * alpha) + c.dot(alpha);
  }

  // sqrt(||A a - y||^2 / n), from the residual (no cancellation).
  double residual_rmse(const Vector& alpha) const {
    return (a_tilde * alpha - y_tilde).norm() / std::sqrt(static_cast<double>(n));
  }
};

struct SolverConfig {
  long max_iterations = 10000;
  double kkt_tolerance = 1e-8;
  // Added to diag(Q) only when Q is detected singular; 0 means auto
  // (1e-10 * trace(Q) / s), picking the minimum-norm optimum.
  double ridge_epsilon = 0.0;
  std::uint64_t seed = 0;  // power-iteration start vector

  void validate() const {
    if (max_iterations < 1) throw data_error("solver: max_iterations must be >= 1");
    if (!(kkt_tolerance > 0.0)) throw data_error("solver: kkt_tolerance must be positive");
    if (ridge_epsilon < 0.0) throw data_error("solver: ridge_epsilon must be nonnegative");
  }
};

/// Q = A~'A~, c = -A~'y~ with A~ = diag(beta) A, y~ = diag(beta) y.
/// Absent beta is the unweighted problem (beta == 1).
inline QpProblem build_qp(const PredictionMatrix& a, const Vector& y,
                          const std::optional<PointWeights>& beta = std::nullopt) {
  if (y.size() != a.n()) throw data_error("build_qp: target length does not match row count");
  if (!y.allFinite()) throw data_error("build_qp: non-finite targets");

  Matrix at;
  Vector yt;
  if (beta) {
    if (beta->size() != a.n()) throw data_error("build_qp: beta length does not match row count");
    at = beta->beta.asDiagonal() * a.entries;
    yt = beta->beta.asDiagonal() * y;
  } else {
    at = a.entries;
    yt = y;
  }
  QpProblem p;
  p.q = at.transpose() * at;
  p.c = -(at.transpose() * yt);
  p.const_term = yt.squaredNorm();
  p.n = a.n();
  p.a_tilde = std::move(at);
  p.y_tilde = std::move(yt);
  p.model_names = a.model_names;
  return p;
}

namespace detail {

// Euclidean projection onto the probability simplex (sort-based, exact):
// sort descending, find the largest m with u_m - (sum_{i<=m} u_i - 1)/m > 0,
// threshold tau = that partial expression, output max(v_i - tau, 0).
inline void project_simplex_inplace(Vector& v) {
  const long s = v.size();
  if (s == 1) {
    v[0] = 1.0;
    return;
  }
  std::vector<double> u(v.data(), v.data() + s);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (long m = 0; m < s; ++m) {
    cumsum += u[m];
    const double t = (cumsum - 1.0) / static_cast<double>(m + 1);
    if (u[m] - t > 0.0)
      tau = t;
    else
      break;
  }
  for (long i = 0; i < s; ++i) v[i] = std::max(v[i] - tau, 0.0);
}

}  // namespace detail

/// argmin_{a in simplex} ||a - v||_2.
inline WeightVector project_to_simplex(const Vector& v) {
  if (v.size() < 1) throw data_error("project_to_simplex: empty input");
  if (!v.allFinite()) throw data_error("project_to_simplex: non-finite input");
  Vector p = v;
  detail::project_simplex_inplace(p);
  return make_weight_vector(p);
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
/// seeded random start. Used as the gradient Lipschitz constant.
inline double power_iteration_lmax(const Matrix& q, std::uint64_t seed = 0, int iterations = 200) {
  const long s = q.rows();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vector v(s);
  for (long i = 0; i < s; ++i) v[i] = unit(rng);
  double norm = v.norm();
  if (norm == 0.0) {
    v.setOnes();
    norm = v.norm();
  }
  v /= norm;
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector w = q * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;  // start vector in the null space, or Q == 0
    const double next = v.dot(w);
    v = w / wn;
    if (it > 0 && std::abs(next - lambda) <= 1e-12 * std::max(1.0, std::abs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::max(lambda, 0.0);
}

/// ||alpha - P(alpha - (Q alpha + c))||_inf with P the simplex projection;
/// zero exactly at the constrained optimum.
inline double kkt_residual(const QpProblem& p, const WeightVector& alpha) {
  if (alpha.size() != p.s()) throw data_error("kkt_residual: dimension mismatch");
  Vector step = alpha.alpha - (p.q * alpha.alpha + p.c);
  detail::project_simplex_inplace(step);
  return (alpha.alpha - step).lpNorm<Eigen::Infinity>();
}

namespace detail {

// Exact solve on the face spanned by the free (positive) variables of the
// current iterate: minimize 1/2 a'Qa + c'a subject to sum(a_F) = 1 via the
// equality-constrained KKT system. Components that come out negative are
// dropped and the face re-solved. The result is only a candidate; the caller
// accepts it solely on its full KKT certificate.
inline std::optional<Vector> active_set_candidate(const Matrix& q, const Vector& c,
                                                  const Vector& x) {
  const long s = x.size();
  std::vector<long> free_idx;
  for (long i = 0; i < s; ++i)
    if (x[i] > 0.0) free_idx.push_back(i);

  while (!free_idx.empty()) {
    const long f = static_cast<long>(free_idx.size());
    Matrix kkt = Matrix::Zero(f + 1, f + 1);
    Vector rhs(f + 1);
    for (long a = 0; a < f; ++a) {
      for (long b = 0; b < f; ++b) kkt(a, b) = q(free_idx[a], free_idx[b]);
      kkt(a, f) = 1.0;
      kkt(f, a) = 1.0;
      rhs[a] = -c[free_idx[a]];
    }
    rhs[f] = 1.0;

    const Vector sol = Eigen::PartialPivLU<Matrix>(kkt).solve(rhs);
    if (!sol.allFinite()) return std::nullopt;
    if ((kkt * sol - rhs).norm() > 1e-10 * (kkt.norm() * sol.norm() + 1.0)) return std::nullopt;

    std::vector<long> kept;
    for (long a = 0; a < f; ++a)
      if (sol[a] >= -kSimplexNegTol) kept.push_back(free_idx[a]);
    if (static_cast<long>(kept.size()) == f) {
      Vector candidate = Vector::Zero(s);
      for (long a = 0; a < f; ++a) candidate[free_idx[a]] = std::max(sol[a], 0.0);
      return candidate;
    }
    if (kept.empty()) return std::nullopt;
    free_idx = std::move(kept);
  }
  return std::nullopt;
}

}  // namespace detail

/// Minimizes 1/2 a'Qa + c'a over the simplex by accelerated projected
/// gradient descent (step 1/L, L from power iteration, momentum restarted on
/// non-monotone steps) until the KKT residual drops below kkt_tolerance.
/// The gradient phase is combined with periodic exact solves on the active
/// face of the current iterate, each accepted only when its own KKT
/// certificate passes; on ill-conditioned problems this terminates in a few
/// iterations where the pure gradient loop would need tens of thousands.
/// A singular Q (collinear model predictions) gets a tiny ridge on the
/// diagonal so the minimum-norm optimum is selected deterministically; the
/// reported certificate then refers to the ridged problem.
/// Non-convergence returns the best iterate with converged = false.
inline FitReport solve_qp(const QpProblem& problem, const SolverConfig& config = {}) {
  config.validate();
  const long s = problem.s();
  if (problem.c.size() != s || problem.q.cols() != s)
    throw data_error("solve_qp: malformed problem");

  FitReport report;
  report.solver = SolverKind::QP;

  Vector uniform = Vector::Constant(s, 1.0 / static_cast<double>(s));
  if (s == 1) {
    report.alpha = make_weight_vector(uniform);
    report.rmse = problem.residual_rmse(report.alpha.alpha);
    report.kkt_residual = 0.0;
    report.iterations = 0;
  } else {
    // Ridge repair for singular Q, detected via the LDLT pivots.
    Matrix q = problem.q;
    Eigen::LDLT<Matrix> ldlt(q);
    const Vector d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    const bool singular = d.minCoeff() <= 1e-12 * dmax;
    if (singular) {
      double eps = config.ridge_epsilon;
      if (eps <= 0.0) eps = 1e-10 * q.trace() / static_cast<double>(s);
      q.diagonal().array() += eps;
    }
    const Vector& c = problem.c;

    double lmax = power_iteration_lmax(q, config.seed);
    if (lmax <= 0.0) {
      // Q == 0 implies c == -A'y with A == 0, i.e. a constant objective.
      report.alpha = make_weight_vector(uniform);
      report.rmse = problem.residual_rmse(report.alpha.alpha);
      Vector tmp = report.alpha.alpha - c;
      detail::project_simplex_inplace(tmp);
      report.kkt_residual = (report.alpha.alpha - tmp).lpNorm<Eigen::Infinity>();
      report.iterations = 0;
    } else {
      const double step = 1.0 / (lmax * (1.0 + 1e-6));
      auto fval = [&](const Vector& a) { return 0.5 * a.dot(q * a) + c.dot(a); };

      auto certificate = [&](const Vector& a) {
        Vector fix = a - (q * a + c);
        detail::project_simplex_inplace(fix);
        return (a - fix).lpNorm<Eigen::Infinity>();
      };

      Vector x = uniform;
      Vector z = x;
      double fx = fval(x);
      double t = 1.0;
      long iter = 0;
      bool converged = false;
      double residual = std::numeric_limits<double>::infinity();

      while (iter < config.max_iterations) {
        ++iter;
        Vector x_prev = x;
        x = z - step * (q * z + c);
        detail::project_simplex_inplace(x);
        double fnew = fval(x);
        if (fnew > fx) {
          // Momentum overshoot: restart from the last monotone iterate.
          z = x_prev;
          t = 1.0;
          x = z - step * (q * z + c);
          detail::project_simplex_inplace(x);
          fnew = fval(x);
        }
        if (!x.allFinite()) throw std::runtime_error("solve_qp: NaN in iterates");
        fx = fnew;

        // Certificate: fixed point of the unit-step gradient projection.
        residual = certificate(x);
        if (residual <= config.kkt_tolerance) {
          converged = true;
          break;
        }

        if (iter == 1 || iter % 10 == 0) {
          const auto candidate = detail::active_set_candidate(q, c, x);
          if (candidate) {
            const double cand_res = certificate(*candidate);
            if (cand_res <= config.kkt_tolerance && fval(*candidate) <= fx) {
              x = *candidate;
              fx = fval(x);
              residual = cand_res;
              converged = true;
              break;
            }
          }
        }

        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        z = x + ((t - 1.0) / t_next) * (x - x_prev);
        t = t_next;
      }

      report.alpha = make_weight_vector(x);
      report.rmse = problem.residual_rmse(report.alpha.alpha);
      report.kkt_residual = residual;
      report.iterations = iter;
      report.converged = converged;
    }
  }

  for (long j = 0; j < s; ++j) {
    if (report.alpha[j] > kActiveWeightTol && !problem.model_names.empty())
      report.active_models.push_back(problem.model_names[j]);
  }
  return report;
}

}  // namespace ccm
