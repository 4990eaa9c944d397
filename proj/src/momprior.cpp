#include "mixsel/momprior.hpp"

#include <cmath>
#include <limits>

#include "mixsel/distributions.hpp"
#include "mixsel/errors.hpp"
#include "mixsel/special.hpp"

namespace mixsel {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

double default_q(int p, CovStructure cov) {
  if (cov == CovStructure::Equal) return p + 1.0;
  return p + 0.5 * p * (p + 1) + 1.0;
}

double elicit_g(int p, double tail_prob, double kappa_threshold) {
  if (!(tail_prob > 0.0 && tail_prob < 1.0)) throw DomainError("elicit_g: tail_prob outside (0,1)");
  const double shape = 0.5 * p + 1.0;
  return solve_monotone(
      [&](double g) { return gamma_cdf(kappa_threshold, shape, 1.0 / (4.0 * g)); }, tail_prob,
      1e-3, 1e6);
}

double elicit_g_local(int p, double g_nlp, double percentile) {
  const double q_gamma = gamma_quantile(percentile, 0.5 * p + 1.0, 1.0 / (4.0 * g_nlp));
  return q_gamma / (2.0 * chi2_quantile(percentile, p));
}

PriorSettings default_prior_settings(int p, CovStructure cov, double tail_prob,
                                     double kappa_threshold) {
  PriorSettings s;
  s.kappa_threshold = kappa_threshold;
  s.tail_prob = tail_prob;
  s.g = elicit_g(p, tail_prob, kappa_threshold);
  s.q = default_q(p, cov);
  s.nu = p + 4.0;
  s.S = Eigen::MatrixXd::Identity(p, p) / (p + 4.0);
  return s;
}

double norm_const_closed_p1(int k) {
  double out = 1.0;
  for (int j = 1; j <= k; ++j) out *= std::tgamma(j + 1.0);
  return out;
}

Eigen::MatrixXd build_b_upsilon(int k, int p, const std::vector<int>& upsilon) {
  // B = sum over pairs (i,j) of (1/2 - upsilon_{(i,j)}) A_{(i,j)}, where
  // A_{(i,j)} has identity blocks on the (i,i), (j,j) diagonal and minus the
  // identity on the (i,j), (j,i) cross blocks.
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p * k, p * k);
  int idx = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j, ++idx) {
      const double w = 0.5 - upsilon[idx];
      for (int d = 0; d < p; ++d) {
        b(p * i + d, p * i + d) += w;
        b(p * j + d, p * j + d) += w;
        b(p * i + d, p * j + d) -= w;
        b(p * j + d, p * i + d) -= w;
      }
    }
  }
  return b;
}

namespace {

using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// Q_s(B) = s! 2^s d_s(B) with d_s(B) = (1/2s) sum_i tr(B^i) d_{s-i}(B), d_0 = 1,
// from the power sums of the eigenvalues. Extended precision: the alternating
// outer sum cancels heavily for k >= 5.
long double q_s_from_eigenvalues(const Eigen::Matrix<long double, Eigen::Dynamic, 1>& eigs,
                                 int s) {
  std::vector<long double> powsum(s + 1, 0.0L);
  Eigen::Matrix<long double, Eigen::Dynamic, 1> cur =
      Eigen::Matrix<long double, Eigen::Dynamic, 1>::Ones(eigs.size());
  for (int i = 1; i <= s; ++i) {
    cur = cur.cwiseProduct(eigs);
    powsum[i] = cur.sum();
  }
  std::vector<long double> d(s + 1, 0.0L);
  d[0] = 1.0L;
  for (int m = 1; m <= s; ++m) {
    long double acc = 0.0L;
    for (int i = 1; i <= m; ++i) acc += powsum[i] * d[m - i];
    d[m] = acc / (2.0L * m);
  }
  long double fact2 = 1.0L;
  for (int i = 1; i <= s; ++i) fact2 *= 2.0L * i;  // s! 2^s
  return fact2 * d[s];
}

}  // namespace

double norm_const_recursive(int k, int p) {
  if (k < 1) throw DomainError("norm_const_recursive: k must be >= 1");
  if (k == 1) return 1.0;
  if (k > 7) throw ComplexityLimit("norm_const_recursive: k > 7; use the Monte Carlo estimate");
  const int s = k * (k - 1) / 2;
  const long terms = 1L << s;
  // The pk x pk matrix is M kron I_p for a k x k core M, so its spectrum is
  // that of M with multiplicity p.
  long double total = 0.0L;
  std::vector<int> upsilon(s);
  MatrixXld core(k, k);
  for (long mask = 0; mask < terms; ++mask) {
    int ones = 0;
    for (int b = 0; b < s; ++b) {
      upsilon[b] = static_cast<int>((mask >> b) & 1L);
      ones += upsilon[b];
    }
    core.setZero();
    int idx = 0;
    for (int i = 0; i < k; ++i) {
      for (int j = i + 1; j < k; ++j, ++idx) {
        const long double w = 0.5L - upsilon[idx];
        core(i, i) += w;
        core(j, j) += w;
        core(i, j) -= w;
        core(j, i) -= w;
      }
    }
    Eigen::SelfAdjointEigenSolver<MatrixXld> es(core, Eigen::EigenvaluesOnly);
    Eigen::Matrix<long double, Eigen::Dynamic, 1> eigs(k * p);
    for (int i = 0; i < k; ++i) eigs.segment(i * p, p).setConstant(es.eigenvalues()[i]);
    const long double sign = (ones % 2 == 0) ? 1.0L : -1.0L;
    total += sign * q_s_from_eigenvalues(eigs, s);
  }
  long double s_fact = 1.0L;
  for (int i = 2; i <= s; ++i) s_fact *= i;
  return static_cast<double>(total / s_fact);
}

McEstimate norm_const_mc(int k, int p, long n_draws, RandomStream& stream) {
  if (n_draws < 1) throw DomainError("norm_const_mc: need at least one draw");
  double mean = 0.0;
  double m2 = 0.0;
  std::vector<Eigen::VectorXd> z(k);
  for (long t = 0; t < n_draws; ++t) {
    for (int j = 0; j < k; ++j) z[j] = stream.normal_vector(p);
    double prod = 1.0;
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j) prod *= (z[i] - z[j]).squaredNorm();
    const double delta = prod - mean;
    mean += delta / (t + 1);
    m2 += delta * (prod - mean);
  }
  McEstimate out;
  out.estimate = mean;
  out.std_err = n_draws > 1 ? std::sqrt(m2 / (n_draws - 1) / n_draws) : 0.0;
  return out;
}

NormConstTable NormConstTable::build(int kmax, int p, std::uint64_t mc_seed) {
  NormConstTable table;
  table.p_ = p;
  table.entries_.resize(kmax);
  for (int k = 1; k <= kmax; ++k) {
    Entry& e = table.entries_[k - 1];
    if (k == 1) {
      e = Entry{1.0, Method::ClosedForm, 0.0};
    } else if (p == 1) {
      e = Entry{norm_const_closed_p1(k), Method::ClosedForm, 0.0};
    } else if (k <= 7) {
      e = Entry{norm_const_recursive(k, p), Method::Recursion, 0.0};
    } else {
      RandomStream stream(mc_seed, 0x4E4F524Du + static_cast<std::uint64_t>(k));
      const McEstimate mc = norm_const_mc(k, p, 2'000'000, stream);
      e = Entry{mc.estimate, Method::MonteCarlo, mc.std_err};
    }
  }
  return table;
}

const NormConstTable::Entry& NormConstTable::at(int k) const {
  if (k < 1 || k > static_cast<int>(entries_.size()))
    throw DomainError("NormConstTable: k out of range");
  return entries_[k - 1];
}

Eigen::MatrixXd mean_prior_precision(const MixtureParams& params) {
  const int p = static_cast<int>(params.mu[0].size());
  if (params.sigma.size() == 1) {
    const Eigen::LLT<Eigen::MatrixXd> llt = safe_llt(params.sigma[0]);
    return llt.solve(Eigen::MatrixXd::Identity(p, p));
  }
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p, p);
  for (const Eigen::MatrixXd& s : params.sigma) {
    acc += safe_llt(s).solve(Eigen::MatrixXd::Identity(p, p));
  }
  return acc / static_cast<double>(params.sigma.size());
}

double log_penalty_d_theta(const MixtureParams& params, const PriorSettings& settings,
                           const ModelSpec& spec, double c_k) {
  const int k = spec.k;
  if (k == 1) return 0.0 - std::log(c_k);  // empty product, C_1 = 1
  const Eigen::MatrixXd a_inv = mean_prior_precision(params);
  double out = -std::log(c_k);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const Eigen::VectorXd diff = params.mu[i] - params.mu[j];
      const double quad = diff.dot(a_inv * diff);
      if (quad <= 0.0) return kNegInf;
      out += std::log(quad) - std::log(settings.g);
    }
  }
  return out;
}

double penalty_d_theta(const MixtureParams& params, const PriorSettings& settings,
                       const ModelSpec& spec, double c_k) {
  return std::exp(log_penalty_d_theta(params, settings, spec, c_k));
}

namespace {

// log N(mu | 0, g A) given A^{-1} and log|A^{-1}|.
double log_normal_zero_meanprec(const Eigen::VectorXd& mu, const Eigen::MatrixXd& a_inv,
                                double logdet_a_inv, double g) {
  const int p = static_cast<int>(mu.size());
  return -0.5 * p * (kLog2Pi + std::log(g)) + 0.5 * logdet_a_inv -
         0.5 * mu.dot(a_inv * mu) / g;
}

double dirichlet_term(const MixtureParams& params, double q) {
  if (params.k() == 1) return 0.0;  // degenerate simplex
  return dirichlet_logpdf(params.eta, Eigen::VectorXd::Constant(params.k(), q));
}

double iw_terms(const MixtureParams& params, const PriorSettings& settings) {
  double out = 0.0;
  for (const Eigen::MatrixXd& s : params.sigma)
    out += invwishart_logpdf(s, settings.nu, settings.S);
  return out;
}

}  // namespace

double nlp_log_prior(const MixtureParams& params, const PriorSettings& settings,
                     const ModelSpec& spec, double c_k) {
  const double lpen = log_penalty_d_theta(params, settings, spec, c_k);
  if (lpen == kNegInf) return kNegInf;
  const Eigen::MatrixXd a_inv = mean_prior_precision(params);
  const double logdet_a_inv = logdet_from_llt(safe_llt(a_inv));
  double out = lpen + dirichlet_term(params, settings.q) + iw_terms(params, settings);
  for (const Eigen::VectorXd& mu : params.mu)
    out += log_normal_zero_meanprec(mu, a_inv, logdet_a_inv, settings.g);
  return out;
}

double lp_log_prior(const MixtureParams& params, const PriorSettings& settings,
                    const ModelSpec& spec) {
  (void)spec;
  double out = dirichlet_term(params, settings.q) + iw_terms(params, settings);
  for (int j = 0; j < params.k(); ++j) {
    const Eigen::MatrixXd& sj = params.sigma_of(j);
    out += mvn_logpdf(params.mu[j], Eigen::VectorXd::Zero(params.mu[j].size()),
                      settings.g * sj);
  }
  return out;
}

double omega_log_weight(const MixtureParams& params, const PriorSettings& settings,
                        const ModelSpec& spec, double c_k) {
  const double lpen = log_penalty_d_theta(params, settings, spec, c_k);
  if (lpen == kNegInf) return kNegInf;
  if (params.sigma.size() == 1) return lpen;  // A = Sigma: the normal terms cancel exactly
  const Eigen::MatrixXd a_inv = mean_prior_precision(params);
  const double logdet_a_inv = logdet_from_llt(safe_llt(a_inv));
  double out = lpen;
  for (int j = 0; j < params.k(); ++j) {
    out += log_normal_zero_meanprec(params.mu[j], a_inv, logdet_a_inv, settings.g);
    out -= mvn_logpdf(params.mu[j], Eigen::VectorXd::Zero(params.mu[j].size()),
                      settings.g * params.sigma_of(j));
  }
  return out;
}

}  // namespace mixsel
