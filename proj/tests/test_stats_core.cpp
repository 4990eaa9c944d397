#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mixsel/distributions.hpp"
#include "mixsel/errors.hpp"
#include "mixsel/rng.hpp"
#include "mixsel/special.hpp"

using namespace mixsel;

namespace {

// Trapezoid quadrature on a dense grid; independent check of density
// normalization.
double integrate(const std::function<double(double)>& f, double lo, double hi, int n) {
  double acc = 0.5 * (f(lo) + f(hi));
  const double h = (hi - lo) / n;
  for (int i = 1; i < n; ++i) acc += f(lo + i * h);
  return acc * h;
}

}  // namespace

TEST_CASE("log_sum_exp basics") {
  std::vector<double> two_zeros{0.0, 0.0};
  CHECK(log_sum_exp(std::span<const double>(two_zeros)) == doctest::Approx(std::log(2.0)));

  std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(std::span<const double>(big)) ==
        doctest::Approx(1000.0 + std::log(2.0)));

  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> mixed{neg_inf, 0.0};
  CHECK(log_sum_exp(std::span<const double>(mixed)) == doctest::Approx(0.0));

  std::vector<double> all_inf{neg_inf, neg_inf};
  CHECK(log_sum_exp(std::span<const double>(all_inf)) == neg_inf);

  std::vector<double> empty;
  CHECK_THROWS_AS(log_sum_exp(std::span<const double>(empty)), DomainError);
}

TEST_CASE("log_sum_exp shift invariance") {
  RandomStream stream(7, 0);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd v(5);
    for (int i = 0; i < 5; ++i) v[i] = 10.0 * stream.normal();
    const double c = 100.0 * stream.normal();
    const double lhs = log_sum_exp(Eigen::VectorXd(v.array() + c));
    const double rhs = log_sum_exp(v) + c;
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("gamma_cdf endpoints and exponential case") {
  CHECK(gamma_cdf(1e60, 1.5, 2.0) == doctest::Approx(1.0));
  // shape 1 is exponential: F(mean) = 1 - exp(-1)
  CHECK(gamma_cdf(1.0, 1.0, 1.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(gamma_cdf(-0.5, 1.0, 1.0), DomainError);
}

TEST_CASE("gamma_cdf matches the elicitation anchor") {
  // g = 5.68 puts 5% mass below 4 under Gamma(3/2, 1/(4g))
  CHECK(gamma_cdf(4.0, 1.5, 1.0 / (4.0 * 5.68)) == doctest::Approx(0.05).epsilon(0.04));
}

TEST_CASE("gamma_cdf against quadrature of the density") {
  // brute-force check of the regularized incomplete gamma
  const double shape = 2.7, rate = 1.3;
  for (double x : {0.3, 1.0, 2.5, 6.0}) {
    const double direct = integrate(
        [&](double t) { return t <= 0 ? 0.0 : std::exp(gamma_logpdf(t, shape, rate)); }, 1e-12,
        x, 200000);
    CHECK(gamma_cdf(x, shape, rate) == doctest::Approx(direct).epsilon(1e-7));
  }
}

TEST_CASE("chi2_quantile reference values") {
  CHECK(chi2_quantile(0.95, 1.0) == doctest::Approx(3.8415).epsilon(1e-4));
  CHECK(chi2_quantile(0.5, 2.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-8));
  CHECK(chi2_quantile(0.95, 3.0) == doctest::Approx(7.8147).epsilon(1e-4));
  CHECK_THROWS_AS(chi2_quantile(1.5, 1.0), DomainError);
}

TEST_CASE("solve_monotone") {
  CHECK(solve_monotone([](double x) { return x * x; }, 4.0, 0.0, 10.0) ==
        doctest::Approx(2.0).epsilon(1e-10));
  CHECK(solve_monotone([](double x) { return std::exp(x); }, 1.0, -1.0, 1.0) ==
        doctest::Approx(0.0).epsilon(1e-10));
  const double g = solve_monotone(
      [](double g_) { return gamma_cdf(4.0, 1.5, 1.0 / (4.0 * g_)); }, 0.05, 0.1, 100.0);
  CHECK(g == doctest::Approx(5.68).epsilon(0.01));
  CHECK_THROWS_AS(solve_monotone([](double x) { return x; }, 5.0, 0.0, 1.0), BracketError);
}

TEST_CASE("RandomStream reproducibility and stream separation") {
  RandomStream a(42, 3), b(42, 3), c(42, 4);
  bool identical = true, distinct = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    if (va != b.next_u64()) identical = false;
    if (va != c.next_u64()) distinct = true;
  }
  CHECK(identical);
  CHECK(distinct);
}

TEST_CASE("normal and gamma draws match analytic moments") {
  RandomStream stream(123, 0);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = stream.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));

  // Gamma(3.5, 2): mean 1.75, var 0.875
  double gsum = 0.0, gsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = stream.gamma(3.5, 2.0);
    gsum += x;
    gsq += x * x;
  }
  const double mean = gsum / n;
  const double var = gsq / n - mean * mean;
  CHECK(mean == doctest::Approx(1.75).epsilon(0.01));
  CHECK(var == doctest::Approx(0.875).epsilon(0.05));
}

TEST_CASE("mvn logpdf anchors") {
  Eigen::VectorXd x(1), mu(1);
  x << 0.0;
  mu << 0.0;
  Eigen::MatrixXd cov(1, 1);
  cov << 1.0;
  CHECK(mvn_logpdf(x, mu, cov) == doctest::Approx(-0.91893853).epsilon(1e-7));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
  Eigen::VectorXd x2 = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(mvn_logpdf(x2, x2, bad), SingularMatrix);
}

TEST_CASE("mvn density integrates to one (p=1)") {
  Eigen::VectorXd mu(1);
  mu << 0.3;
  Eigen::MatrixXd cov(1, 1);
  cov << 0.7;
  const double total = integrate(
      [&](double t) {
        Eigen::VectorXd x(1);
        x << t;
        return std::exp(mvn_logpdf(x, mu, cov));
      },
      -12.0, 12.0, 100000);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("dirichlet uniform density") {
  Eigen::VectorXd conc = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd x(2);
  x << 0.3, 0.7;
  CHECK(dirichlet_logpdf(x, conc) == doctest::Approx(0.0));
}

TEST_CASE("dirichlet draws: symmetry of Dir(2,2)") {
  RandomStream stream(5, 0);
  const int n = 100000;
  double sum = 0.0;
  Eigen::VectorXd conc = Eigen::VectorXd::Constant(2, 2.0);
  for (int i = 0; i < n; ++i) sum += draw_dirichlet(stream, conc)[0];
  CHECK(std::abs(sum / n - 0.5) < 0.005);
}

TEST_CASE("inverse Wishart: scalar case matches an inverse-gamma density") {
  // With the fixed convention, p=1 and Sigma ~ IW(nu, s) means
  // 1/Sigma ~ Gamma(nu/2, 1/(2s)); check by quadrature normalization.
  const double nu = 5.0, s = 0.2;
  Eigen::MatrixXd sm(1, 1);
  sm << s;
  const auto dens = [&](double v) {
    Eigen::MatrixXd x(1, 1);
    x << v;
    return std::exp(invwishart_logpdf(x, nu, sm));
  };
  const double total = integrate(dens, 1e-6, 60.0, 400000);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
  // spot value against the transformed gamma density of the precision
  const double v = 0.2;
  const double via_gamma = std::exp(gamma_logpdf(1.0 / v, nu / 2.0, 1.0 / (2.0 * s))) / (v * v);
  CHECK(dens(v) == doctest::Approx(via_gamma).epsilon(1e-10));
}

TEST_CASE("inverse Wishart draws: E(Sigma^{-1}) = nu S") {
  // defaults nu = p+4, S = I/(p+4) give E(Sigma^{-1}) = I
  RandomStream stream(99, 0);
  const double nu = 5.0;
  Eigen::MatrixXd s(1, 1);
  s << 1.0 / 5.0;
  const int n = 100000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double prec = 1.0 / draw_invwishart(stream, nu, s)(0, 0);
    acc += prec;
    acc2 += prec * prec;
  }
  const double mean = acc / n;
  const double se = std::sqrt((acc2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("mvn draws: mean squared norm equals trace") {
  RandomStream stream(17, 2);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd cov = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  const int n = 100000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = draw_mvn(stream, mu, cov).squaredNorm();
    acc += v;
    acc2 += v * v;
  }
  const double mean = acc / n;
  const double se = std::sqrt((acc2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 4.0) < 3.0 * se);
}

TEST_CASE("wishart draws and density agree on moments") {
  RandomStream stream(31, 0);
  Eigen::MatrixXd s(2, 2);
  s << 0.4, 0.1, 0.1, 0.3;
  const double nu = 7.0;
  const int n = 50000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd sigma = draw_invwishart(stream, nu, s);
    acc += safe_llt(sigma).solve(Eigen::MatrixXd::Identity(2, 2));
  }
  acc /= n;
  CHECK((acc - nu * s).norm() < 0.05);  // E(Sigma^{-1}) = nu S
}

TEST_CASE("tagged-union surface dispatches") {
  DistributionSpec d = GammaSpec{2.0, 3.0};
  CHECK(std::get<double>(Variate(1.0)) == 1.0);
  CHECK(logpdf(d, Variate(1.0)) == doctest::Approx(gamma_logpdf(1.0, 2.0, 3.0)));
  RandomStream stream(1, 0);
  CHECK(std::get<double>(draw(d, stream)) > 0.0);
}
