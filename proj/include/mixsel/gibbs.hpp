#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mixsel/model.hpp"
#include "mixsel/momprior.hpp"
#include "mixsel/rng.hpp"

namespace mixsel {

struct ChainOutput {
  std::vector<MixtureParams> draws;     // T kept draws
  std::vector<Allocation> allocations;  // T kept allocation vectors
  Eigen::VectorXd omega_logs;           // log importance weight per kept draw
  Eigen::VectorXd log_liks;             // log likelihood per kept draw
  PriorSettings settings;
  ModelSpec spec;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  int iters = 0;
  int burnin = 0;

  int T() const { return static_cast<int>(draws.size()); }
};

// Blocked Gibbs sweep under the local Normal-IW-Dirichlet prior:
// allocations, then weights, then covariances from their collapsed
// conditionals, then means. Empty components revert to the prior.
ChainOutput run_chain(const Dataset& data, const ModelSpec& spec, const PriorSettings& settings,
                      int iters, int burnin, RandomStream& stream, double c_k,
                      const MixtureParams* init = nullptr);

// log p^L(theta_hat | y, z) factored in the sampler's blocked order.
double conditional_ordinate(const MixtureParams& theta_hat, const Allocation& z,
                            const Dataset& data, const ModelSpec& spec,
                            const PriorSettings& settings);

struct ChibResult {
  double log_marginal = 0.0;
  double se_log_ordinate = 0.0;  // batch-means standard error of the ordinate average
};

// Marginal likelihood under the local prior: likelihood and prior at
// theta_hat over the Rao-Blackwellized posterior ordinate, the latter
// averaged over draws and over all k! relabelings.
ChibResult chib_log_marginal(const ChainOutput& chain, const MixtureParams& theta_hat,
                             const Dataset& data, const ModelSpec& spec,
                             const PriorSettings& settings);

struct MarginalEstimate {
  double log_marginal_lp = 0.0;
  double log_marginal_nlp = 0.0;
  double mc_std_err_lp = 0.0;
  double mc_std_err_omega = 0.0;
  MixtureParams ordinate_at;
  bool omega_degenerate = false;  // every weight vanished
};

// Importance-reweighting correction: the non-local marginal equals the local
// one times the posterior average of the weights.
MarginalEstimate nlp_log_marginal(const ChainOutput& chain, double log_marginal_lp,
                                  double se_lp = 0.0, const MixtureParams* ordinate_at = nullptr);

// Distribution of the number of non-empty components across kept sweeps;
// entry m-1 holds P(m components have at least one observation).
Eigen::VectorXd nonempty_distribution(const ChainOutput& chain);

// Same distribution under the non-local posterior, via the importance weights.
Eigen::VectorXd nonempty_distribution_weighted(const ChainOutput& chain);

// Mean of exp(log_values) computed stably, with a batch-means standard error
// reported on the log scale. Used for both the ordinate and omega averages.
struct LogMeanResult {
  double log_mean = 0.0;
  double se_log = 0.0;
};
LogMeanResult log_mean_with_se(const Eigen::VectorXd& log_values, int n_batches = 20);

}  // namespace mixsel
