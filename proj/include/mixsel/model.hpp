#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mixsel/rng.hpp"

namespace mixsel {

// Observation matrix together with the column transform that produced it.
// Inference always runs on the standardized scale; the recorded transform
// lets reports map estimates back to the original units.
struct Dataset {
  Eigen::MatrixXd y;       // n x p
  Eigen::VectorXd center;  // per-column shift (original = y * diag(scale) + center)
  Eigen::VectorXd scale;   // per-column scale
  std::vector<int> constant_columns;
  bool standardized = false;

  int n() const { return static_cast<int>(y.rows()); }
  int p() const { return static_cast<int>(y.cols()); }
};

// Center and scale columns by sample mean and sample sd (n-1 denominator).
// Constant columns keep scale 1 and are flagged.
Dataset standardize(const Eigen::MatrixXd& raw);

// Wrap a matrix with the identity transform (data used as-is).
Dataset dataset_from_matrix(const Eigen::MatrixXd& y);

enum class CovStructure { Equal, Unequal };

struct ModelSpec {
  int k = 1;
  CovStructure cov = CovStructure::Equal;
  int p = 1;
};

// Canonical form: at k=1 Equal and Unequal are the same model.
inline ModelSpec canonical(ModelSpec spec) {
  if (spec.k == 1) spec.cov = CovStructure::Equal;
  return spec;
}

struct MixtureParams {
  Eigen::VectorXd eta;                 // k weights on the simplex
  std::vector<Eigen::VectorXd> mu;     // k means
  std::vector<Eigen::MatrixXd> sigma;  // 1 matrix (Equal) or k matrices (Unequal)

  int k() const { return static_cast<int>(eta.size()); }
  const Eigen::MatrixXd& sigma_of(int j) const {
    return sigma.size() == 1 ? sigma[0] : sigma[static_cast<size_t>(j)];
  }
};

// Relabel components by a permutation: component j of the result is
// component perm[j] of the input. Shared covariances are untouched.
MixtureParams apply_permutation(const MixtureParams& params, const std::vector<int>& perm);

struct Allocation {
  std::vector<int> z;  // entries in 0..k-1

  Eigen::VectorXi counts(int k) const;
};

// n x k matrix of log(eta_j) + log N(y_i | mu_j, Sigma_j).
Eigen::MatrixXd log_kernel_matrix(const MixtureParams& params, const Dataset& data,
                                  const ModelSpec& spec);

// Mixture log likelihood, inner sums in log space.
double log_likelihood(const MixtureParams& params, const Dataset& data, const ModelSpec& spec);

// dim(Theta_k): means + covariance terms + free weights.
int param_count(const ModelSpec& spec);

// --- data-generating truths for the simulation study ----------------------

struct SimulatedCase {
  Dataset data;  // raw draws, identity transform
  ModelSpec truth_spec;
  MixtureParams truth;
};

// Cases 1-4 are univariate, 5-8 bivariate with correlation -0.5.
SimulatedCase simulate_case(int case_id, int n, RandomStream& stream);

// Three-component bivariate Student-t mixture (4 dof) used as a
// misspecification stress test; returns raw draws.
Eigen::MatrixXd simulate_student_misspec(int n, RandomStream& stream);

}  // namespace mixsel
