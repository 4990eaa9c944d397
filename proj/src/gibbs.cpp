#include "mixsel/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "mixsel/distributions.hpp"
#include "mixsel/errors.hpp"
#include "mixsel/special.hpp"

namespace mixsel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

// Per-component conditioning quantities implied by a hard allocation.
struct BlockStats {
  Eigen::VectorXd counts;                  // n_j
  std::vector<Eigen::VectorXd> ybar;       // 0 when empty
  std::vector<Eigen::MatrixXd> rate;       // S^{-1} + scatter_j + collapsed term (Unequal)
  Eigen::MatrixXd pooled_rate;             // Equal-structure pooled rate
  std::vector<Eigen::VectorXd> mu_mean;    // g n_j ybar_j / (1 + g n_j)
  std::vector<double> mu_cov_factor;       // g / (1 + g n_j)
};

BlockStats block_stats(const std::vector<int>& z, const Dataset& data, const ModelSpec& spec,
                       const PriorSettings& settings) {
  const int n = data.n();
  const int p = data.p();
  const int k = spec.k;
  const double g = settings.g;

  BlockStats s;
  s.counts = Eigen::VectorXd::Zero(k);
  s.ybar.assign(k, Eigen::VectorXd::Zero(p));
  s.mu_mean.assign(k, Eigen::VectorXd::Zero(p));
  s.mu_cov_factor.assign(k, 0.0);

  for (int i = 0; i < n; ++i) {
    s.counts[z[i]] += 1.0;
    s.ybar[z[i]] += data.y.row(i).transpose();
  }
  for (int j = 0; j < k; ++j) {
    if (s.counts[j] > 0.0) s.ybar[j] /= s.counts[j];
  }

  const Eigen::MatrixXd s_inv =
      safe_llt(settings.S).solve(Eigen::MatrixXd::Identity(p, p));
  std::vector<Eigen::MatrixXd> scatter(k, Eigen::MatrixXd::Zero(p, p));
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd d = data.y.row(i).transpose() - s.ybar[z[i]];
    scatter[z[i]] += d * d.transpose();
  }

  s.rate.assign(k, Eigen::MatrixXd());
  Eigen::MatrixXd pooled_acc = Eigen::MatrixXd::Zero(p, p);
  for (int j = 0; j < k; ++j) {
    const double nj = s.counts[j];
    const double collapsed_coef = nj > 0.0 ? (nj / g) / (nj + 1.0 / g) : 0.0;
    const Eigen::MatrixXd contrib =
        scatter[j] + collapsed_coef * (s.ybar[j] * s.ybar[j].transpose());
    s.rate[j] = s_inv + contrib;
    pooled_acc += contrib;
    s.mu_mean[j] = (g * nj / (1.0 + g * nj)) * s.ybar[j];
    s.mu_cov_factor[j] = g / (1.0 + g * nj);
  }
  s.pooled_rate = s_inv + pooled_acc;
  return s;
}

std::vector<std::vector<int>> all_permutations(int k) {
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace

ChainOutput run_chain(const Dataset& data, const ModelSpec& spec, const PriorSettings& settings,
                      int iters, int burnin, RandomStream& stream, double c_k,
                      const MixtureParams* init) {
  const int n = data.n();
  const int p = data.p();
  const int k = spec.k;
  if (iters <= burnin || burnin < 0) throw DomainError("run_chain: need iters > burnin >= 0");
  if (n > 0 && n < k * (p + p * (p + 1) / 2)) {
    std::cerr << "warning: n=" << n << " is small for k=" << k << ", p=" << p
              << "; posterior may be prior-dominated\n";
  }

  MixtureParams params;
  if (init != nullptr) {
    params = *init;
  } else {
    params.eta = Eigen::VectorXd::Constant(k, 1.0 / k);
    params.mu.assign(k, Eigen::VectorXd::Zero(p));
    params.sigma.assign(spec.cov == CovStructure::Equal ? 1 : k,
                        Eigen::MatrixXd::Identity(p, p));
    for (int j = 0; j < k && n > 0; ++j) {
      const int idx = std::min(n - 1, static_cast<int>(stream.uniform() * n));
      params.mu[j] = data.y.row(idx).transpose();
    }
  }

  ChainOutput out;
  out.settings = settings;
  out.spec = spec;
  out.seed = stream.seed();
  out.stream_id = stream.stream_id();
  out.iters = iters;
  out.burnin = burnin;
  const int T = iters - burnin;
  out.draws.reserve(T);
  out.allocations.reserve(T);
  out.omega_logs.resize(T);
  out.log_liks.resize(T);

  std::vector<int> z(n, 0);
  const Eigen::VectorXd q_vec = Eigen::VectorXd::Constant(k, settings.q);

  for (int t = 1; t <= iters; ++t) {
    // allocations from the previous draw
    if (n > 0) {
      const Eigen::MatrixXd lk = log_kernel_matrix(params, data, spec);
      for (int i = 0; i < n; ++i) {
        const double lse = log_sum_exp(Eigen::VectorXd(lk.row(i)));
        const double u = stream.uniform();
        double acc = 0.0;
        int pick = k - 1;
        for (int j = 0; j < k; ++j) {
          acc += std::exp(lk(i, j) - lse);
          if (u < acc) {
            pick = j;
            break;
          }
        }
        z[i] = pick;
      }
    }

    const BlockStats bs = block_stats(z, data, spec, settings);

    // weights
    Eigen::VectorXd alpha = q_vec + bs.counts;
    params.eta = draw_dirichlet(stream, alpha);
    if (k == 1) params.eta[0] = 1.0;

    // covariances from the collapsed conditional
    if (spec.cov == CovStructure::Equal) {
      params.sigma[0] =
          draw_invwishart_rate(stream, settings.nu + n, safe_llt(bs.pooled_rate));
    } else {
      for (int j = 0; j < k; ++j) {
        params.sigma[static_cast<size_t>(j)] =
            draw_invwishart_rate(stream, settings.nu + bs.counts[j], safe_llt(bs.rate[j]));
      }
    }

    // means
    for (int j = 0; j < k; ++j) {
      const Eigen::MatrixXd cov = bs.mu_cov_factor[j] * params.sigma_of(j);
      params.mu[j] = draw_mvn(stream, bs.mu_mean[j], cov);
    }

    if (t > burnin) {
      const int idx = t - burnin - 1;
      out.draws.push_back(params);
      out.allocations.push_back(Allocation{z});
      out.omega_logs[idx] = omega_log_weight(params, settings, spec, c_k);
      out.log_liks[idx] = n > 0 ? log_likelihood(params, data, spec) : 0.0;
    }
  }
  return out;
}

namespace {

// Ordinate evaluation context: everything about theta_hat that permutations reuse.
struct OrdinateContext {
  int k = 1;
  int p = 1;
  bool equal = true;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> sigma_llt;  // per component (one if Equal)
  std::vector<double> sigma_logdet;
  Eigen::VectorXd log_eta;
  const MixtureParams* theta = nullptr;

  explicit OrdinateContext(const MixtureParams& theta_hat) {
    theta = &theta_hat;
    k = theta_hat.k();
    p = static_cast<int>(theta_hat.mu[0].size());
    equal = theta_hat.sigma.size() == 1;
    for (const Eigen::MatrixXd& s : theta_hat.sigma) {
      sigma_llt.push_back(safe_llt(s));
      sigma_logdet.push_back(logdet_from_llt(sigma_llt.back()));
    }
    log_eta = theta_hat.eta.array().log();
  }
};

// log IW density at component `comp` of theta_hat under dof and rate R (with
// its Cholesky), minus nothing: full normalized density.
double iw_term(const OrdinateContext& ctx, int comp, double dof,
               const Eigen::LLT<Eigen::MatrixXd>& rate_llt, double rate_logdet) {
  const int p = ctx.p;
  const Eigen::MatrixXd b =
      ctx.sigma_llt[comp].matrixL().solve(rate_llt.matrixL().toDenseMatrix());
  return 0.5 * dof * rate_logdet - 0.5 * (dof + p + 1) * ctx.sigma_logdet[comp] -
         0.5 * b.squaredNorm() - 0.5 * dof * p * std::log(2.0) -
         lgamma_multivariate(p, 0.5 * dof);
}

double mu_term(const OrdinateContext& ctx, int comp, const Eigen::VectorXd& mean,
               double cov_factor) {
  const Eigen::VectorXd u = ctx.sigma_llt[ctx.equal ? 0 : comp].matrixL().solve(
      ctx.theta->mu[comp] - mean);
  return -0.5 * ctx.p * (kLog2Pi + std::log(cov_factor)) -
         0.5 * ctx.sigma_logdet[ctx.equal ? 0 : comp] - 0.5 * u.squaredNorm() / cov_factor;
}

// ordinate for a single allocation and relabeling; slot j evaluates component perm[j].
double ordinate_for(const OrdinateContext& ctx, const BlockStats& bs, double nu, int n,
                    const Eigen::VectorXd& alpha, double neg_lbeta,
                    const std::vector<int>& perm) {
  const int k = ctx.k;
  double out = neg_lbeta;
  if (k > 1) {
    for (int j = 0; j < k; ++j) out += (alpha[j] - 1.0) * ctx.log_eta[perm[j]];
  }
  if (ctx.equal) {
    const Eigen::LLT<Eigen::MatrixXd> rate_llt = safe_llt(bs.pooled_rate);
    out += iw_term(ctx, 0, nu + n, rate_llt, logdet_from_llt(rate_llt));
  } else {
    for (int j = 0; j < k; ++j) {
      const Eigen::LLT<Eigen::MatrixXd> rate_llt = safe_llt(bs.rate[j]);
      out += iw_term(ctx, perm[j], nu + bs.counts[j], rate_llt, logdet_from_llt(rate_llt));
    }
  }
  for (int j = 0; j < k; ++j) out += mu_term(ctx, perm[j], bs.mu_mean[j], bs.mu_cov_factor[j]);
  return out;
}

}  // namespace

double conditional_ordinate(const MixtureParams& theta_hat, const Allocation& z,
                            const Dataset& data, const ModelSpec& spec,
                            const PriorSettings& settings) {
  const OrdinateContext ctx(theta_hat);
  const BlockStats bs = block_stats(z.z, data, spec, settings);
  const Eigen::VectorXd alpha =
      Eigen::VectorXd::Constant(spec.k, settings.q) + bs.counts;
  const double neg_lbeta = spec.k > 1 ? -lbeta(alpha) : 0.0;
  std::vector<int> identity(spec.k);
  std::iota(identity.begin(), identity.end(), 0);
  return ordinate_for(ctx, bs, settings.nu, data.n(), alpha, neg_lbeta, identity);
}

ChibResult chib_log_marginal(const ChainOutput& chain, const MixtureParams& theta_hat,
                             const Dataset& data, const ModelSpec& spec,
                             const PriorSettings& settings) {
  const int T = chain.T();
  const int k = spec.k;
  const int n = data.n();
  const OrdinateContext ctx(theta_hat);
  const std::vector<std::vector<int>> perms = all_permutations(k);
  const double log_kfact = std::log(static_cast<double>(perms.size()));

  Eigen::VectorXd per_sweep(T);  // log of the per-sweep permutation average
  std::vector<double> work(perms.size());
  Eigen::MatrixXd kernel(k, k);  // slot x component terms that depend on both

  for (int t = 0; t < T; ++t) {
    const BlockStats bs = block_stats(chain.allocations[t].z, data, spec, settings);
    const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(k, settings.q) + bs.counts;
    const double neg_lbeta = k > 1 ? -lbeta(alpha) : 0.0;

    double shared = neg_lbeta;
    if (ctx.equal) {
      const Eigen::LLT<Eigen::MatrixXd> rate_llt = safe_llt(bs.pooled_rate);
      shared += iw_term(ctx, 0, settings.nu + n, rate_llt, logdet_from_llt(rate_llt));
      for (int j = 0; j < k; ++j) {
        for (int l = 0; l < k; ++l) {
          kernel(j, l) = mu_term(ctx, l, bs.mu_mean[j], bs.mu_cov_factor[j]) +
                         (k > 1 ? (alpha[j] - 1.0) * ctx.log_eta[l] : 0.0);
        }
      }
    } else {
      for (int j = 0; j < k; ++j) {
        const Eigen::LLT<Eigen::MatrixXd> rate_llt = safe_llt(bs.rate[j]);
        const double rate_logdet = logdet_from_llt(rate_llt);
        for (int l = 0; l < k; ++l) {
          kernel(j, l) = iw_term(ctx, l, settings.nu + bs.counts[j], rate_llt, rate_logdet) +
                         mu_term(ctx, l, bs.mu_mean[j], bs.mu_cov_factor[j]) +
                         (k > 1 ? (alpha[j] - 1.0) * ctx.log_eta[l] : 0.0);
        }
      }
    }

    for (size_t s = 0; s < perms.size(); ++s) {
      double acc = shared;
      for (int j = 0; j < k; ++j) acc += kernel(j, perms[s][j]);
      work[s] = acc;
    }
    per_sweep[t] = log_sum_exp(std::span<const double>(work.data(), work.size())) - log_kfact;
  }

  const LogMeanResult ord = log_mean_with_se(per_sweep);
  if (ord.log_mean == kNegInf)
    throw EstimatorDegenerate("chib_log_marginal: every ordinate vanished at theta_hat");

  ChibResult out;
  out.log_marginal = log_likelihood(theta_hat, data, spec) +
                     lp_log_prior(theta_hat, settings, spec) - ord.log_mean;
  out.se_log_ordinate = ord.se_log;
  return out;
}

LogMeanResult log_mean_with_se(const Eigen::VectorXd& log_values, int n_batches) {
  const int T = static_cast<int>(log_values.size());
  if (T == 0) throw DomainError("log_mean_with_se: empty input");
  LogMeanResult out;
  out.log_mean = log_sum_exp(log_values) - std::log(static_cast<double>(T));
  if (out.log_mean == kNegInf || T < 2) return out;

  const int b = std::max(2, std::min(n_batches, T));
  const double shift = out.log_mean;  // batch means are ~1 in shifted units
  Eigen::VectorXd batch_means(b);
  const int base = T / b;
  int rem = T % b, pos = 0;
  for (int i = 0; i < b; ++i) {
    const int len = base + (i < rem ? 1 : 0);
    double acc = 0.0;
    for (int t = 0; t < len; ++t, ++pos) acc += std::exp(log_values[pos] - shift);
    batch_means[i] = acc / len;
  }
  const double bm = batch_means.mean();
  const double var = (batch_means.array() - bm).square().sum() / (b - 1);
  // standard error of the (shifted) mean; delta method onto the log scale
  out.se_log = std::sqrt(var / b) / bm;
  return out;
}

MarginalEstimate nlp_log_marginal(const ChainOutput& chain, double log_marginal_lp,
                                  double se_lp, const MixtureParams* ordinate_at) {
  MarginalEstimate out;
  out.log_marginal_lp = log_marginal_lp;
  out.mc_std_err_lp = se_lp;
  if (ordinate_at != nullptr) out.ordinate_at = *ordinate_at;
  const LogMeanResult omega = log_mean_with_se(chain.omega_logs);
  if (omega.log_mean == kNegInf) {
    out.log_marginal_nlp = kNegInf;
    out.omega_degenerate = true;
    return out;
  }
  out.log_marginal_nlp = log_marginal_lp + omega.log_mean;
  out.mc_std_err_omega = omega.se_log;
  return out;
}

Eigen::VectorXd nonempty_distribution(const ChainOutput& chain) {
  const int k = chain.spec.k;
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(k);
  if (chain.allocations.empty()) throw DomainError("nonempty_distribution: no allocations");
  for (const Allocation& a : chain.allocations) {
    const Eigen::VectorXi counts = a.counts(k);
    const int m = static_cast<int>((counts.array() > 0).count());
    probs[std::max(0, m - 1)] += 1.0;
  }
  return probs / static_cast<double>(chain.allocations.size());
}

Eigen::VectorXd nonempty_distribution_weighted(const ChainOutput& chain) {
  const int k = chain.spec.k;
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(k);
  if (chain.allocations.empty()) throw DomainError("nonempty_distribution: no allocations");
  const double shift = chain.omega_logs.maxCoeff();
  if (shift == kNegInf) return probs;
  double total = 0.0;
  for (int t = 0; t < chain.T(); ++t) {
    const double w = std::exp(chain.omega_logs[t] - shift);
    const Eigen::VectorXi counts = chain.allocations[t].counts(k);
    const int m = static_cast<int>((counts.array() > 0).count());
    probs[std::max(0, m - 1)] += w;
    total += w;
  }
  return probs / total;
}

}  // namespace mixsel
