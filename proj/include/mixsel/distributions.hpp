#pragma once

#include <variant>

#include <Eigen/Dense>

#include "mixsel/rng.hpp"

namespace mixsel {

// Cholesky factor of an SPD matrix. On failure a single jitter of
// 1e-10 * trace/p is added to the diagonal before giving up with SingularMatrix.
Eigen::LLT<Eigen::MatrixXd> safe_llt(const Eigen::MatrixXd& m);

// log|M| from its Cholesky factor.
double logdet_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt);

// --- multivariate Normal -------------------------------------------------

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                  const Eigen::MatrixXd& cov);
double mvn_logpdf_chol(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::LLT<Eigen::MatrixXd>& cov_llt);
Eigen::VectorXd draw_mvn(RandomStream& stream, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& cov);
Eigen::VectorXd draw_mvn_chol(RandomStream& stream, const Eigen::VectorXd& mean,
                              const Eigen::LLT<Eigen::MatrixXd>& cov_llt);

// --- inverse Wishart ------------------------------------------------------
//
// Convention: Sigma ~ InvWishart(nu, S) iff Sigma^{-1} ~ Wishart(nu, S), so
// E(Sigma^{-1}) = nu * S. Density:
//   p(Sigma) = |S|^{-nu/2} |Sigma|^{-(nu+p+1)/2} exp(-tr(S^{-1} Sigma^{-1})/2)
//              / (2^{nu p/2} Gamma_p(nu/2)).
// The "rate" variants take R = S^{-1} directly, which is the natural quantity
// in the conjugate updates.

double invwishart_logpdf(const Eigen::MatrixXd& x, double dof, const Eigen::MatrixXd& scale);
double invwishart_logpdf_rate(const Eigen::LLT<Eigen::MatrixXd>& x_llt, double dof,
                              const Eigen::LLT<Eigen::MatrixXd>& rate_llt);
Eigen::MatrixXd draw_invwishart(RandomStream& stream, double dof, const Eigen::MatrixXd& scale);
Eigen::MatrixXd draw_invwishart_rate(RandomStream& stream, double dof,
                                     const Eigen::LLT<Eigen::MatrixXd>& rate_llt);

// Wishart density of a precision matrix W under W ~ Wishart(nu, S).
double wishart_logpdf(const Eigen::MatrixXd& w, double dof, const Eigen::MatrixXd& scale);

// --- Dirichlet ------------------------------------------------------------

double dirichlet_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& concentration);
Eigen::VectorXd draw_dirichlet(RandomStream& stream, const Eigen::VectorXd& concentration);

// --- Gamma ----------------------------------------------------------------

double gamma_logpdf(double x, double shape, double rate);

// --- tagged-union surface -------------------------------------------------

struct Mvn {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
struct InvWishartSpec {
  double dof;
  Eigen::MatrixXd scale;
};
struct DirichletSpec {
  Eigen::VectorXd concentration;
};
struct GammaSpec {
  double shape;
  double rate;
};

using DistributionSpec = std::variant<Mvn, InvWishartSpec, DirichletSpec, GammaSpec>;
using Variate = std::variant<double, Eigen::VectorXd, Eigen::MatrixXd>;

double logpdf(const DistributionSpec& dist, const Variate& x);
Variate draw(const DistributionSpec& dist, RandomStream& stream);

}  // namespace mixsel
