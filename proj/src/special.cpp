#include "mixsel/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixsel/errors.hpp"

namespace mixsel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Series expansion of P(a,x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x) by modified Lentz, valid for x >= a + 1.
double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw DomainError("log_sum_exp: empty input");
  double m = kNegInf;
  for (double v : values) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

double log_sum_exp(const Eigen::VectorXd& values) {
  return log_sum_exp(std::span<const double>(values.data(), static_cast<size_t>(values.size())));
}

double gamma_cdf(double x, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw DomainError("gamma_cdf: shape and rate must be positive");
  if (x < 0.0) throw DomainError("gamma_cdf: negative x");
  if (x == 0.0) return 0.0;
  const double t = rate * x;
  if (std::isinf(t)) return 1.0;
  if (t < shape + 1.0) return gamma_p_series(shape, t);
  return 1.0 - gamma_q_contfrac(shape, t);
}

double solve_monotone(const std::function<double(double)>& f, double target, double lo, double hi) {
  double flo = f(lo) - target;
  double fhi = f(hi) - target;
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) throw BracketError("solve_monotone: no sign change on bracket");

  // Brent's method; iterate until the residual itself is small.
  double a = lo, b = hi, fa = flo, fb = fhi;
  double c = a, fc = fa;
  double d = b - a, e = d;
  for (int iter = 0; iter < 300; ++iter) {
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b);
    const double xm = 0.5 * (c - b);
    if (std::abs(fb) <= 1e-10) return b;
    if (std::abs(xm) <= tol) return b;  // bracket exhausted at machine precision
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
      const double s = fb / fa;
      double p, q;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        const double qq = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
        q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol) ? d : (xm > 0 ? tol : -tol);
    fb = f(b) - target;
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      e = d = b - a;
    }
  }
  return b;
}

double gamma_quantile(double prob, double shape, double rate) {
  if (!(prob > 0.0 && prob < 1.0)) throw DomainError("gamma_quantile: prob outside (0,1)");
  double hi = (shape + 10.0 * std::sqrt(shape) + 10.0) / rate;
  while (gamma_cdf(hi, shape, rate) < prob) hi *= 2.0;
  return solve_monotone([&](double x) { return gamma_cdf(x, shape, rate); }, prob, 0.0, hi);
}

double chi2_quantile(double prob, double dof) {
  if (!(prob > 0.0 && prob < 1.0)) throw DomainError("chi2_quantile: prob outside (0,1)");
  if (!(dof > 0.0)) throw DomainError("chi2_quantile: dof must be positive");
  return gamma_quantile(prob, 0.5 * dof, 0.5);
}

double lgamma_multivariate(int p, double a) {
  double out = 0.25 * p * (p - 1) * std::log(M_PI);
  for (int j = 1; j <= p; ++j) out += std::lgamma(a + 0.5 * (1.0 - j));
  return out;
}

double lbeta(const Eigen::VectorXd& a) {
  double s = 0.0, tot = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    s += std::lgamma(a[i]);
    tot += a[i];
  }
  return s - std::lgamma(tot);
}

}  // namespace mixsel
