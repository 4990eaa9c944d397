#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "mixsel/model.hpp"
#include "mixsel/rng.hpp"

namespace mixsel {

// Hyperparameters of the MOM-IW-Dirichlet prior and of the matching local
// Normal-IW-Dirichlet prior used as the sampling target.
struct PriorSettings {
  double g = 1.0;            // dispersion of the mean prior
  double q = 2.0;            // symmetric Dirichlet concentration, q > 1
  double nu = 5.0;           // inverse-Wishart dof, default p+4
  Eigen::MatrixXd S;         // inverse-Wishart scale, default (p+4)^{-1} I
  double kappa_threshold = 4.0;
  double tail_prob = 0.05;
};

// Default q: number of additional parameters per component.
double default_q(int p, CovStructure cov);

// Dispersion g such that P(kappa < threshold) = tail_prob under the prior
// separation law Gamma(p/2 + 1, 1/(4g)).
double elicit_g(int p, double tail_prob, double kappa_threshold);

// Local-prior dispersion matched so that the `percentile` quantile of the
// separation kappa ~ 2 g^L chi2_p equals the same quantile under the
// non-local prior's Gamma law.
double elicit_g_local(int p, double g_nlp, double percentile = 0.95);

// Settings with elicited g, structure-matched q, nu = p+4, S = (p+4)^{-1} I.
PriorSettings default_prior_settings(int p, CovStructure cov, double tail_prob = 0.05,
                                     double kappa_threshold = 4.0);

// --- normalizing constant C_k ----------------------------------------------

// p = 1 closed form: prod_{j=1}^{k} Gamma(j+1).
double norm_const_closed_p1(int k);

// Exact recursion over the 2^{C(k,2)} sign vectors; k <= 7 enforced.
double norm_const_recursive(int k, int p);

// Literal pk x pk matrix for one sign vector (reference path, used for
// validating the production eigenvalue shortcut).
Eigen::MatrixXd build_b_upsilon(int k, int p, const std::vector<int>& upsilon);

struct McEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
};

// Monte Carlo oracle: mean of prod_{i<j} ||z_i - z_j||^2 for z_j ~ N(0, I_p).
McEstimate norm_const_mc(int k, int p, long n_draws, RandomStream& stream);

// Immutable table of C_k per k at fixed p; built once before any parallel work.
class NormConstTable {
 public:
  enum class Method { ClosedForm, Recursion, MonteCarlo };
  struct Entry {
    double value = 1.0;
    Method method = Method::ClosedForm;
    double std_err = 0.0;  // nonzero only for MonteCarlo
  };

  static NormConstTable build(int kmax, int p, std::uint64_t mc_seed = 0);

  const Entry& at(int k) const;
  int kmax() const { return static_cast<int>(entries_.size()); }
  int p() const { return p_; }

 private:
  std::vector<Entry> entries_;  // index k-1
  int p_ = 1;
};

// --- penalty, priors, importance weight -------------------------------------

// A_Sigma^{-1} = (1/k) sum_j Sigma_j^{-1}; equals Sigma^{-1} under Equal.
Eigen::MatrixXd mean_prior_precision(const MixtureParams& params);

// log of (1/C_k) prod_{i<j} (mu_i - mu_j)' A^{-1} (mu_i - mu_j) / g;
// -inf when any two means coincide, 0 for k = 1.
double log_penalty_d_theta(const MixtureParams& params, const PriorSettings& settings,
                           const ModelSpec& spec, double c_k);
double penalty_d_theta(const MixtureParams& params, const PriorSettings& settings,
                       const ModelSpec& spec, double c_k);

// MOM-IW-Dir log prior density (the non-local prior).
double nlp_log_prior(const MixtureParams& params, const PriorSettings& settings,
                     const ModelSpec& spec, double c_k);

// Normal-IW-Dir log prior density (the local prior used by the sampler).
double lp_log_prior(const MixtureParams& params, const PriorSettings& settings,
                    const ModelSpec& spec);

// log of the prior ratio NLP/LP at a parameter value; may be -inf.
double omega_log_weight(const MixtureParams& params, const PriorSettings& settings,
                        const ModelSpec& spec, double c_k);

}  // namespace mixsel
