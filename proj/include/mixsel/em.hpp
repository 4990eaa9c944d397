#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "mixsel/model.hpp"
#include "mixsel/momprior.hpp"
#include "mixsel/rng.hpp"

namespace mixsel {

struct Responsibilities {
  Eigen::MatrixXd zbar;    // n x k, rows sum to 1
  Eigen::VectorXd counts;  // soft counts n_j
};

enum class EmMode { MLE, LPMAP, NLPMAP };

struct EMResult {
  MixtureParams params;
  std::vector<double> objective_trace;
  bool converged = false;
  int iterations = 0;
  int fallback_count = 0;
  bool collapsed = false;  // a component variance collapsed under MLE
};

struct EmInit {
  enum class Kind { FromMLE, Given, RandomRestarts };
  Kind kind = Kind::FromMLE;
  MixtureParams params;
  int restarts = 10;

  static EmInit from_mle() { return EmInit{Kind::FromMLE, {}, 10}; }
  static EmInit given(MixtureParams p) { return EmInit{Kind::Given, std::move(p), 0}; }
  static EmInit random_restarts(int r) { return EmInit{Kind::RandomRestarts, {}, r}; }
};

Responsibilities e_step(const MixtureParams& params, const Dataset& data, const ModelSpec& spec);

// One blockwise M-step (means, then covariances, then weights). NLPMAP
// candidates are kept only when the block objective increases; otherwise the
// gradient fallback runs. fallback_count accumulates fallback invocations.
MixtureParams m_step(const Responsibilities& resp, const MixtureParams& current,
                     const Dataset& data, const ModelSpec& spec, const PriorSettings& settings,
                     EmMode mode, double c_k, RandomStream* reinit_stream = nullptr,
                     int* fallback_count = nullptr, bool* collapsed = nullptr);

// Expected complete-data log posterior given responsibilities.
double objective_xi(const MixtureParams& params, const Responsibilities& resp,
                    const Dataset& data, const ModelSpec& spec, const PriorSettings& settings,
                    EmMode mode, double c_k);

// Marginal objective ascended across iterations: log likelihood plus the
// mode's prior terms (the covariance prior enters as a Wishart density on the
// precision, matching the closed-form updates).
double em_objective(const MixtureParams& params, const Dataset& data, const ModelSpec& spec,
                    const PriorSettings& settings, EmMode mode, double c_k);

// Gradient of objective_xi with respect to mu_j; exact for every mode.
Eigen::VectorXd grad_xi_mu(int j, const MixtureParams& params, const Responsibilities& resp,
                           const Dataset& data, const ModelSpec& spec,
                           const PriorSettings& settings, EmMode mode);

struct FallbackOutcome {
  Eigen::VectorXd point;
  bool moved = false;
  bool stalled = false;
};

// Backtracking ascent step along a fixed gradient direction, halving from the
// initial step until the target strictly increases (at most 60 halvings).
FallbackOutcome gradient_fallback(const std::function<double(const Eigen::VectorXd&)>& target,
                                  const Eigen::VectorXd& grad_at_start,
                                  const Eigen::VectorXd& start, double initial_step);

EMResult run_em(const Dataset& data, const ModelSpec& spec, const PriorSettings& settings,
                EmMode mode, const EmInit& init, double c_k, RandomStream& stream,
                int max_iters = 10000, double tol = 1e-4);

}  // namespace mixsel
