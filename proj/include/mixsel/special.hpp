#pragma once

#include <functional>
#include <span>

#include <Eigen/Dense>

namespace mixsel {

// Overflow-safe log(sum(exp(v))). Returns -inf if every entry is -inf.
double log_sum_exp(std::span<const double> values);
double log_sum_exp(const Eigen::VectorXd& values);

// Regularized lower incomplete gamma P(shape, rate * x); absolute accuracy ~1e-14.
double gamma_cdf(double x, double shape, double rate);

// Inverse of gamma_cdf in x for fixed (shape, rate).
double gamma_quantile(double prob, double shape, double rate);

// Inverse chi-square CDF.
double chi2_quantile(double prob, double dof);

// Root of f(x) = target on [lo, hi] for continuous monotone f, |f(r)-target| <= 1e-10.
double solve_monotone(const std::function<double(double)>& f, double target, double lo, double hi);

// log of the multivariate gamma function Gamma_p(a).
double lgamma_multivariate(int p, double a);

// log of the multivariate beta function: sum lgamma(a_j) - lgamma(sum a_j).
double lbeta(const Eigen::VectorXd& a);

}  // namespace mixsel
