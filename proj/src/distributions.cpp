#include "mixsel/distributions.hpp"

#include <cmath>
#include <limits>

#include "mixsel/errors.hpp"
#include "mixsel/special.hpp"

namespace mixsel {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

Eigen::LLT<Eigen::MatrixXd> safe_llt(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw ShapeError("safe_llt: matrix not square");
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = 1e-10 * m.trace() / static_cast<double>(m.rows());
  Eigen::MatrixXd fixed = m;
  fixed.diagonal().array() += jitter;
  llt.compute(fixed);
  if (llt.info() == Eigen::Success) return llt;
  throw SingularMatrix("safe_llt: matrix not positive definite");
}

double logdet_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double mvn_logpdf_chol(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::LLT<Eigen::MatrixXd>& cov_llt) {
  const int p = static_cast<int>(x.size());
  if (mean.size() != p) throw ShapeError("mvn_logpdf: dimension mismatch");
  const Eigen::VectorXd u = cov_llt.matrixL().solve(x - mean);
  return -0.5 * (p * kLog2Pi + logdet_from_llt(cov_llt) + u.squaredNorm());
}

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                  const Eigen::MatrixXd& cov) {
  return mvn_logpdf_chol(x, mean, safe_llt(cov));
}

Eigen::VectorXd draw_mvn_chol(RandomStream& stream, const Eigen::VectorXd& mean,
                              const Eigen::LLT<Eigen::MatrixXd>& cov_llt) {
  return mean + cov_llt.matrixL() * stream.normal_vector(static_cast<int>(mean.size()));
}

Eigen::VectorXd draw_mvn(RandomStream& stream, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& cov) {
  return draw_mvn_chol(stream, mean, safe_llt(cov));
}

double invwishart_logpdf_rate(const Eigen::LLT<Eigen::MatrixXd>& x_llt, double dof,
                              const Eigen::LLT<Eigen::MatrixXd>& rate_llt) {
  const int p = static_cast<int>(x_llt.matrixL().rows());
  if (!(dof > p - 1)) throw DomainError("invwishart_logpdf: dof must exceed p-1");
  // tr(R X^{-1}) = ||Lx^{-1} Lr||_F^2 with R = Lr Lr', X = Lx Lx'.
  const Eigen::MatrixXd b = x_llt.matrixL().solve(rate_llt.matrixL().toDenseMatrix());
  const double trace_term = b.squaredNorm();
  const double logdet_rate = logdet_from_llt(rate_llt);
  const double logdet_x = logdet_from_llt(x_llt);
  return 0.5 * dof * logdet_rate - 0.5 * (dof + p + 1) * logdet_x - 0.5 * trace_term -
         0.5 * dof * p * std::log(2.0) - lgamma_multivariate(p, 0.5 * dof);
}

double invwishart_logpdf(const Eigen::MatrixXd& x, double dof, const Eigen::MatrixXd& scale) {
  const Eigen::LLT<Eigen::MatrixXd> scale_llt = safe_llt(scale);
  const int p = static_cast<int>(x.rows());
  // R = scale^{-1}
  const Eigen::MatrixXd rate = scale_llt.solve(Eigen::MatrixXd::Identity(p, p));
  return invwishart_logpdf_rate(safe_llt(x), dof, safe_llt(rate));
}

Eigen::MatrixXd draw_invwishart_rate(RandomStream& stream, double dof,
                                     const Eigen::LLT<Eigen::MatrixXd>& rate_llt) {
  const int p = static_cast<int>(rate_llt.matrixL().rows());
  if (!(dof > p - 1)) throw DomainError("draw_invwishart: dof must exceed p-1");
  // Bartlett draw of W = Sigma^{-1} ~ Wishart(dof, R^{-1}) without forming R^{-1}:
  // Sigma = M' M with M = A^{-1} Lr' and A the Bartlett factor.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(stream.chi_square(dof - i));
    for (int j = 0; j < i; ++j) a(i, j) = stream.normal();
  }
  const Eigen::MatrixXd lr_t = rate_llt.matrixL().toDenseMatrix().transpose();
  const Eigen::MatrixXd m =
      a.triangularView<Eigen::Lower>().solve(lr_t);
  return m.transpose() * m;
}

Eigen::MatrixXd draw_invwishart(RandomStream& stream, double dof, const Eigen::MatrixXd& scale) {
  const Eigen::LLT<Eigen::MatrixXd> scale_llt = safe_llt(scale);
  const int p = static_cast<int>(scale.rows());
  const Eigen::MatrixXd rate = scale_llt.solve(Eigen::MatrixXd::Identity(p, p));
  return draw_invwishart_rate(stream, dof, safe_llt(rate));
}

double wishart_logpdf(const Eigen::MatrixXd& w, double dof, const Eigen::MatrixXd& scale) {
  const int p = static_cast<int>(w.rows());
  if (!(dof > p - 1)) throw DomainError("wishart_logpdf: dof must exceed p-1");
  const Eigen::LLT<Eigen::MatrixXd> w_llt = safe_llt(w);
  const Eigen::LLT<Eigen::MatrixXd> s_llt = safe_llt(scale);
  const Eigen::MatrixXd u = s_llt.matrixL().solve(w);
  const double trace_term = s_llt.matrixL().transpose().solve(u).trace();  // tr(S^{-1} W)
  return 0.5 * (dof - p - 1) * logdet_from_llt(w_llt) - 0.5 * trace_term -
         0.5 * dof * p * std::log(2.0) - 0.5 * dof * logdet_from_llt(s_llt) -
         lgamma_multivariate(p, 0.5 * dof);
}

double dirichlet_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& concentration) {
  if (x.size() != concentration.size()) throw ShapeError("dirichlet_logpdf: dimension mismatch");
  if (std::abs(x.sum() - 1.0) > 1e-8) throw DomainError("dirichlet_logpdf: point not on the simplex");
  double out = -lbeta(concentration);
  for (int i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0) {
      if (concentration[i] == 1.0) continue;  // uniform direction: density ignores the coordinate
      return concentration[i] > 1.0 ? kNegInf : std::numeric_limits<double>::infinity();
    }
    out += (concentration[i] - 1.0) * std::log(x[i]);
  }
  return out;
}

Eigen::VectorXd draw_dirichlet(RandomStream& stream, const Eigen::VectorXd& concentration) {
  Eigen::VectorXd out(concentration.size());
  for (int i = 0; i < concentration.size(); ++i) {
    if (!(concentration[i] > 0.0)) throw DomainError("draw_dirichlet: nonpositive concentration");
    out[i] = stream.gamma(concentration[i], 1.0);
  }
  const double s = out.sum();
  return out / s;
}

double gamma_logpdf(double x, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw DomainError("gamma_logpdf: bad parameters");
  if (x <= 0.0) throw DomainError("gamma_logpdf: x outside support");
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double logpdf(const DistributionSpec& dist, const Variate& x) {
  struct Visitor {
    const Variate& x;
    double operator()(const Mvn& d) const {
      return mvn_logpdf(std::get<Eigen::VectorXd>(x), d.mean, d.cov);
    }
    double operator()(const InvWishartSpec& d) const {
      return invwishart_logpdf(std::get<Eigen::MatrixXd>(x), d.dof, d.scale);
    }
    double operator()(const DirichletSpec& d) const {
      return dirichlet_logpdf(std::get<Eigen::VectorXd>(x), d.concentration);
    }
    double operator()(const GammaSpec& d) const {
      return gamma_logpdf(std::get<double>(x), d.shape, d.rate);
    }
  };
  return std::visit(Visitor{x}, dist);
}

Variate draw(const DistributionSpec& dist, RandomStream& stream) {
  struct Visitor {
    RandomStream& stream;
    Variate operator()(const Mvn& d) const { return draw_mvn(stream, d.mean, d.cov); }
    Variate operator()(const InvWishartSpec& d) const {
      return draw_invwishart(stream, d.dof, d.scale);
    }
    Variate operator()(const DirichletSpec& d) const {
      return draw_dirichlet(stream, d.concentration);
    }
    Variate operator()(const GammaSpec& d) const {
      return stream.gamma(d.shape, d.rate);
    }
  };
  return std::visit(Visitor{stream}, dist);
}

}  // namespace mixsel
