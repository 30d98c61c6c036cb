#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "ccm/qp.hpp"

namespace ccm {

struct EsConfig {
  long budget = 2000;           // objective evaluations, initial one included
  double initial_sigma = 0.25;  // mutation scale
  long adaptation_interval = 20;
  double sigma_factor = 1.22;  // 1/5th-rule multiplier
  std::uint64_t seed = 0;

  void validate() const {
    if (budget < 1) throw data_error("es: budget must be >= 1");
    if (!(initial_sigma > 0.0)) throw data_error("es: initial_sigma must be positive");
    if (adaptation_interval < 1) throw data_error("es: adaptation_interval must be >= 1");
    if (!(sigma_factor > 1.0)) throw data_error("es: sigma_factor must be > 1");
  }
};

struct EsTrace {
  std::vector<std::pair<WeightVector, double>> evaluations;  // in evaluation order
  FitReport best;
};

/// (1+1)-ES with the 1/5th success rule on the QP objective. Starts at
/// the uniform weight vector; offspring are parent plus isotropic Gaussian
/// noise of scale sigma, repaired onto the simplex by projection, and
/// accepted iff the objective does not increase. Every adaptation_interval
/// generations sigma is multiplied by sigma_factor when the success rate
/// exceeds 1/5 and divided by it when below.
inline EsTrace es_optimize(const QpProblem& problem, const EsConfig& config = {}) {
  config.validate();
  const long s = problem.s();
  if (s < 1) throw data_error("es_optimize: malformed problem");

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  EsTrace trace;
  Vector parent = Vector::Constant(s, 1.0 / static_cast<double>(s));
  double f_parent = problem.objective(parent);
  trace.evaluations.emplace_back(make_weight_vector(parent), f_parent);

  Vector best = parent;
  double f_best = f_parent;

  if (s > 1) {
    double sigma = config.initial_sigma;
    long successes = 0;
    long generation = 0;
    Vector child(s);
    while (static_cast<long>(trace.evaluations.size()) < config.budget) {
      for (long i = 0; i < s; ++i) child[i] = parent[i] + sigma * gauss(rng);
      detail::project_simplex_inplace(child);
      const double f_child = problem.objective(child);
      trace.evaluations.emplace_back(make_weight_vector(child), f_child);

      if (f_child <= f_parent) {
        parent = child;
        f_parent = f_child;
        ++successes;
      }
      if (f_child < f_best) {
        best = child;
        f_best = f_child;
      }

      ++generation;
      if (generation % config.adaptation_interval == 0) {
        const double rate =
            static_cast<double>(successes) / static_cast<double>(config.adaptation_interval);
        if (rate > 0.2)
          sigma *= config.sigma_factor;
        else if (rate < 0.2)
          sigma /= config.sigma_factor;
        successes = 0;
      }
    }
  }

  FitReport report;
  report.solver = SolverKind::ES;
  report.alpha = make_weight_vector(best);
  report.rmse = problem.residual_rmse(report.alpha.alpha);
  report.iterations = static_cast<long>(trace.evaluations.size());
  report.converged = true;
  for (long j = 0; j < s; ++j) {
    if (report.alpha[j] > kActiveWeightTol && !problem.model_names.empty())
      report.active_models.push_back(problem.model_names[j]);
  }
  trace.best = std::move(report);
  return trace;
}

}  // namespace ccm
