#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixsel/em.hpp"
#include "mixsel/gibbs.hpp"
#include "mixsel/model.hpp"
#include "mixsel/momprior.hpp"

namespace mixsel {

enum class CovChoice { Equal, Unequal, Both };

struct RunConfig {
  int kmax = 6;
  CovChoice cov = CovChoice::Both;
  double g = 0.0;      // <= 0: elicit from alpha and kappa_threshold
  double q = 0.0;      // <= 0: structure default
  double alpha = 0.05;
  double kappa_threshold = 4.0;
  int iters = 7500;
  int burnin = 2500;
  int restarts = 10;
  std::uint64_t seed = 1;
  int max_threads = 0;  // 0: hardware concurrency
};

struct ModelResult {
  ModelSpec spec;
  double log_marginal_lp = 0.0;
  double log_marginal_nlp = 0.0;
  double se_lp = 0.0;
  double se_omega = 0.0;
  double bic = 0.0;
  double aic = 0.0;
  int p_k = 0;
  double post_prob_lp = 0.0;
  double post_prob_nlp = 0.0;
  bool failed = false;
  std::string failure;
  MixtureParams mle;
  MixtureParams lp_map;
  MixtureParams nlp_map;
  Eigen::VectorXd nonempty_lp;   // only for the largest-k models
  Eigen::VectorXd nonempty_nlp;  // omega-weighted counterpart
};

struct SelectionReport {
  std::vector<ModelResult> models;
  int chosen_nlp = -1;
  int chosen_lp = -1;
  int chosen_bic = -1;
  int chosen_aic = -1;
  PriorSettings settings_equal;    // q differs by covariance structure
  PriorSettings settings_unequal;
  double g_local = 0.0;            // percentile-matched local dispersion (reported)
  RunConfig config;
  int n = 0;
  int p = 0;
  std::vector<std::string> warnings;
  Eigen::VectorXd standardize_center;
  Eigen::VectorXd standardize_scale;
  std::vector<int> constant_columns;
  double runtime_seconds = 0.0;
};

// Information criteria on the "larger is better" scale used throughout.
std::pair<double, double> bic_aic(const Dataset& data, const ModelSpec& spec,
                                  const EMResult& mle);

// Softmax of log marginal + log prior; -inf entries get probability zero.
Eigen::VectorXd posterior_model_probs(const Eigen::VectorXd& log_marginals,
                                      const Eigen::VectorXd& prior_weights);
Eigen::VectorXd posterior_model_probs(const Eigen::VectorXd& log_marginals);

// Full model scan: information criteria, local marginal likelihoods and their
// non-local corrections for every model with k = 1..kmax, crossed with the
// requested covariance structures (k = 1 counted once).
SelectionReport select(const Dataset& data, const RunConfig& config);

}  // namespace mixsel
