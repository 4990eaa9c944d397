#include "mixsel/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixsel/distributions.hpp"
#include "mixsel/errors.hpp"
#include "mixsel/special.hpp"

namespace mixsel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDijGuard = 1e-12;
constexpr double kCollapseEig = 1e-8;

struct SuffStats {
  Eigen::VectorXd counts;               // n_j
  std::vector<Eigen::VectorXd> ybar;    // weighted means (0 when empty)
  std::vector<Eigen::MatrixXd> scatter; // weighted scatter about ybar
};

SuffStats sufficient_stats(const Responsibilities& resp, const Dataset& data) {
  const int n = data.n();
  const int p = data.p();
  const int k = static_cast<int>(resp.zbar.cols());
  SuffStats s;
  s.counts = resp.counts;
  s.ybar.assign(k, Eigen::VectorXd::Zero(p));
  s.scatter.assign(k, Eigen::MatrixXd::Zero(p, p));
  for (int j = 0; j < k; ++j) {
    if (s.counts[j] <= 0.0) continue;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < n; ++i) acc += resp.zbar(i, j) * data.y.row(i).transpose();
    s.ybar[j] = acc / s.counts[j];
    Eigen::MatrixXd sc = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd d = data.y.row(i).transpose() - s.ybar[j];
      sc += resp.zbar(i, j) * (d * d.transpose());
    }
    s.scatter[j] = sc;
  }
  return s;
}

// Weighted scatter about an arbitrary center from the ybar-centered scatter.
Eigen::MatrixXd scatter_about(const SuffStats& s, int j, const Eigen::VectorXd& center) {
  const Eigen::VectorXd d = s.ybar[j] - center;
  return s.scatter[j] + s.counts[j] * (d * d.transpose());
}

Eigen::MatrixXd precision_of(const Eigen::MatrixXd& sigma) {
  return safe_llt(sigma).solve(Eigen::MatrixXd::Identity(sigma.rows(), sigma.cols()));
}

double guarded_quad(const Eigen::VectorXd& u, const Eigen::MatrixXd& a_inv) {
  return std::max(u.dot(a_inv * u), kDijGuard);
}

// Prior part of the objective for a given mode. Covariances contribute
// through the Wishart density of their inverses, which is the parameterization
// the closed-form updates maximize.
double mode_log_prior(const MixtureParams& params, const ModelSpec& spec,
                      const PriorSettings& settings, EmMode mode, double c_k) {
  if (mode == EmMode::MLE) return 0.0;
  const int k = spec.k;
  double out = 0.0;
  if (k > 1) {
    out += dirichlet_logpdf(params.eta, Eigen::VectorXd::Constant(k, settings.q));
  }
  for (const Eigen::MatrixXd& s : params.sigma) {
    out += wishart_logpdf(precision_of(s), settings.nu, settings.S);
  }
  if (mode == EmMode::LPMAP) {
    for (int j = 0; j < k; ++j) {
      out += mvn_logpdf(params.mu[j], Eigen::VectorXd::Zero(spec.p),
                        settings.g * params.sigma_of(j));
    }
  } else {  // NLPMAP
    out += log_penalty_d_theta(params, settings, spec, c_k);
    const Eigen::MatrixXd a_inv = mean_prior_precision(params);
    const double logdet_a_inv = logdet_from_llt(safe_llt(a_inv));
    constexpr double kLog2Pi = 1.8378770664093454836;
    for (int j = 0; j < k; ++j) {
      out += -0.5 * spec.p * (kLog2Pi + std::log(settings.g)) + 0.5 * logdet_a_inv -
             0.5 * params.mu[j].dot(a_inv * params.mu[j]) / settings.g;
    }
  }
  return out;
}

}  // namespace

Responsibilities e_step(const MixtureParams& params, const Dataset& data, const ModelSpec& spec) {
  const Eigen::MatrixXd lk = log_kernel_matrix(params, data, spec);
  const int n = data.n();
  const int k = spec.k;
  Responsibilities resp;
  resp.zbar.resize(n, k);
  for (int i = 0; i < n; ++i) {
    const double lse = log_sum_exp(Eigen::VectorXd(lk.row(i)));
    if (std::isfinite(lse)) {
      resp.zbar.row(i) = (lk.row(i).array() - lse).exp();
    } else {
      resp.zbar.row(i).setConstant(1.0 / k);
    }
  }
  resp.counts = resp.zbar.colwise().sum();
  return resp;
}

FallbackOutcome gradient_fallback(const std::function<double(const Eigen::VectorXd&)>& target,
                                  const Eigen::VectorXd& grad_at_start,
                                  const Eigen::VectorXd& start, double initial_step) {
  FallbackOutcome out;
  out.point = start;
  const double f0 = target(start);
  const double gnorm = grad_at_start.norm();
  if (!(gnorm > 0.0) || !std::isfinite(gnorm) || !std::isfinite(initial_step) ||
      initial_step <= 0.0) {
    return out;  // stationary or unusable direction: no movement
  }
  double step = initial_step;
  for (int h = 0; h < 60; ++h) {
    const Eigen::VectorXd cand = start + step * grad_at_start;
    const double f = target(cand);
    if (f > f0) {
      out.point = cand;
      out.moved = true;
      return out;
    }
    step *= 0.5;
  }
  out.stalled = true;
  return out;
}

namespace {

// --- mean update ------------------------------------------------------------

// Block objective in mu_j with everything else fixed.
double mu_block_target(const Eigen::VectorXd& mu, int j, const SuffStats& ss,
                       const Eigen::MatrixXd& w_j, const std::vector<Eigen::VectorXd>& mus,
                       const Eigen::MatrixXd& a_inv, const PriorSettings& settings, EmMode mode) {
  const double nj = ss.counts[j];
  const Eigen::VectorXd d = ss.ybar[j] - mu;
  double out = -0.5 * (ss.scatter[j] * w_j).trace() - 0.5 * nj * d.dot(w_j * d);
  if (mode == EmMode::MLE) return out;
  out -= 0.5 * mu.dot(a_inv * mu) / settings.g;
  if (mode == EmMode::NLPMAP) {
    for (int i = 0; i < static_cast<int>(mus.size()); ++i) {
      if (i == j) continue;
      const double quad = (mus[i] - mu).dot(a_inv * (mus[i] - mu));
      if (quad <= 0.0) return kNegInf;
      out += std::log(quad);
    }
  }
  return out;
}

Eigen::VectorXd mu_block_gradient(const Eigen::VectorXd& mu, int j, const SuffStats& ss,
                                  const Eigen::MatrixXd& w_j,
                                  const std::vector<Eigen::VectorXd>& mus,
                                  const Eigen::MatrixXd& a_inv, const PriorSettings& settings,
                                  EmMode mode) {
  const double nj = ss.counts[j];
  Eigen::VectorXd g = w_j * (nj * (ss.ybar[j] - mu));
  if (mode == EmMode::MLE) return g;
  g -= (a_inv * mu) / settings.g;
  if (mode == EmMode::NLPMAP) {
    for (int i = 0; i < static_cast<int>(mus.size()); ++i) {
      if (i == j) continue;
      const Eigen::VectorXd u = mu - mus[i];
      const double quad = guarded_quad(u, a_inv);
      g += 2.0 * (a_inv * u) / quad;
    }
  }
  return g;
}

Eigen::VectorXd update_mu(int j, const SuffStats& ss, const MixtureParams& prev,
                          const Eigen::MatrixXd& w_j, const Eigen::MatrixXd& a_inv,
                          const PriorSettings& settings, EmMode mode, int* fallback_count) {
  const double nj = ss.counts[j];
  if (mode == EmMode::MLE) return ss.ybar[j];
  if (mode == EmMode::LPMAP) {
    // exact conditional maximizer: the precision cancels
    return (settings.g * nj / (1.0 + settings.g * nj)) * ss.ybar[j];
  }
  // NLPMAP: linearized solve with pair distances frozen at the previous iterate.
  const int k = prev.k();
  const int p = static_cast<int>(prev.mu[j].size());
  double pair_coef = 0.0;
  Eigen::VectorXd pair_rhs = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < k; ++i) {
    if (i == j) continue;
    const double dij = guarded_quad(prev.mu[i] - prev.mu[j], a_inv);
    pair_coef += 2.0 / dij;
    pair_rhs += 2.0 * (2.0 * prev.mu[j] - prev.mu[i]) / dij;
  }
  const Eigen::MatrixXd lhs = nj * w_j + a_inv * (1.0 / settings.g + pair_coef);
  const Eigen::VectorXd rhs = nj * (w_j * ss.ybar[j]) + a_inv * pair_rhs;
  Eigen::VectorXd candidate;
  bool have_candidate = true;
  Eigen::LLT<Eigen::MatrixXd> llt(lhs);
  if (llt.info() == Eigen::Success) {
    candidate = llt.solve(rhs);
  } else {
    candidate = prev.mu[j];
    have_candidate = false;
  }

  const auto target = [&](const Eigen::VectorXd& m) {
    return mu_block_target(m, j, ss, w_j, prev.mu, a_inv, settings, mode);
  };
  const double f_prev = target(prev.mu[j]);
  if (have_candidate && target(candidate) > f_prev) return candidate;

  const Eigen::VectorXd grad = mu_block_gradient(prev.mu[j], j, ss, w_j, prev.mu, a_inv,
                                                 settings, mode);
  const double gnorm = grad.norm();
  const double kbar = gnorm > 0.0 ? std::sqrt((candidate - prev.mu[j]).norm() / gnorm) : 0.0;
  if (fallback_count) ++(*fallback_count);
  return gradient_fallback(target, grad, prev.mu[j], kbar).point;
}

// --- covariance update ------------------------------------------------------

// Block objective in one covariance (Unequal: component j; Equal: the shared
// matrix). Includes every term that depends on it, penalty and mean priors
// included, since A_Sigma ties them together.
double sigma_block_target(const Eigen::MatrixXd& sigma, int j, const SuffStats& ss,
                          const MixtureParams& params, const ModelSpec& spec,
                          const PriorSettings& settings, EmMode mode) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return kNegInf;
  const int p = spec.p;
  const int k = spec.k;
  const bool equal = params.sigma.size() == 1;
  const double logdet = logdet_from_llt(llt);
  const Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(p, p));

  double a_count = 0.0;
  double out = 0.0;
  Eigen::MatrixXd v;  // trace matrix: -(a/2) log|Sigma| - tr(W v)/2
  if (equal) {
    Eigen::MatrixXd data_scatter = Eigen::MatrixXd::Zero(p, p);
    double n_tot = 0.0;
    for (int l = 0; l < k; ++l) {
      data_scatter += scatter_about(ss, l, params.mu[l]);
      n_tot += ss.counts[l];
    }
    if (mode == EmMode::MLE) {
      v = data_scatter;
      a_count = n_tot;
    } else {
      v = data_scatter + safe_llt(settings.S).solve(Eigen::MatrixXd::Identity(p, p));
      a_count = n_tot + settings.nu - p - 1 + k;
      Eigen::MatrixXd mm = Eigen::MatrixXd::Zero(p, p);
      for (int l = 0; l < k; ++l) mm += params.mu[l] * params.mu[l].transpose();
      v += mm / settings.g;
    }
  } else {
    v = scatter_about(ss, j, params.mu[j]);
    a_count = ss.counts[j];
    if (mode != EmMode::MLE) {
      v += safe_llt(settings.S).solve(Eigen::MatrixXd::Identity(p, p));
      a_count += settings.nu - p - 1;
    }
  }
  out += -0.5 * a_count * logdet - 0.5 * (w * v).trace();

  if (mode == EmMode::MLE) return out;

  if (equal) {
    if (mode == EmMode::NLPMAP) {
      for (int i = 0; i < k; ++i) {
        for (int l = i + 1; l < k; ++l) {
          const double quad = (params.mu[i] - params.mu[l]).dot(w * (params.mu[i] - params.mu[l]));
          if (quad <= 0.0) return kNegInf;
          out += std::log(quad);
        }
      }
    }
    return out;
  }

  // Unequal: mean priors and penalty run through A_Sigma.
  if (mode == EmMode::LPMAP) {
    out += -0.5 * logdet - 0.5 * params.mu[j].dot(w * params.mu[j]) / settings.g;
    return out;
  }
  // NLPMAP: A^{-1} = (1/k)(W_j(sigma) + sum_{m != j} W_m)
  Eigen::MatrixXd a_inv = w;
  for (int m = 0; m < k; ++m) {
    if (m == j) continue;
    a_inv += precision_of(params.sigma[m]);
  }
  a_inv /= static_cast<double>(k);
  Eigen::LLT<Eigen::MatrixXd> a_llt(a_inv);
  if (a_llt.info() != Eigen::Success) return kNegInf;
  out += 0.5 * k * logdet_from_llt(a_llt);
  for (int l = 0; l < k; ++l) out += -0.5 * params.mu[l].dot(a_inv * params.mu[l]) / settings.g;
  for (int i = 0; i < k; ++i) {
    for (int l = i + 1; l < k; ++l) {
      const double quad = (params.mu[i] - params.mu[l]).dot(a_inv * (params.mu[i] - params.mu[l]));
      if (quad <= 0.0) return kNegInf;
      out += std::log(quad);
    }
  }
  return out;
}

// Gradient of the block objective with respect to Sigma (symmetric matrix).
Eigen::MatrixXd sigma_block_gradient(const Eigen::MatrixXd& sigma, int j, const SuffStats& ss,
                                     const MixtureParams& params, const ModelSpec& spec,
                                     const PriorSettings& settings, EmMode mode) {
  const int p = spec.p;
  const int k = spec.k;
  const bool equal = params.sigma.size() == 1;
  const Eigen::MatrixXd w = precision_of(sigma);

  double a_count;
  Eigen::MatrixXd v;
  if (equal) {
    Eigen::MatrixXd data_scatter = Eigen::MatrixXd::Zero(p, p);
    double n_tot = 0.0;
    for (int l = 0; l < k; ++l) {
      data_scatter += scatter_about(ss, l, params.mu[l]);
      n_tot += ss.counts[l];
    }
    if (mode == EmMode::MLE) {
      v = data_scatter;
      a_count = n_tot;
    } else {
      v = data_scatter + safe_llt(settings.S).solve(Eigen::MatrixXd::Identity(p, p));
      a_count = n_tot + settings.nu - p - 1 + k;
      Eigen::MatrixXd mm = Eigen::MatrixXd::Zero(p, p);
      for (int l = 0; l < k; ++l) mm += params.mu[l] * params.mu[l].transpose();
      v += mm / settings.g;
    }
  } else {
    v = scatter_about(ss, j, params.mu[j]);
    a_count = ss.counts[j];
    if (mode != EmMode::MLE) {
      v += safe_llt(settings.S).solve(Eigen::MatrixXd::Identity(p, p));
      a_count += settings.nu - p - 1;
    }
  }
  Eigen::MatrixXd g = -0.5 * a_count * w + 0.5 * w * v * w;
  if (mode == EmMode::MLE) return g;

  if (equal) {
    if (mode == EmMode::NLPMAP) {
      for (int i = 0; i < k; ++i) {
        for (int l = i + 1; l < k; ++l) {
          const Eigen::VectorXd u = params.mu[i] - params.mu[l];
          const double quad = guarded_quad(u, w);
          g -= (w * u * u.transpose() * w) / quad;
        }
      }
    }
    return g;
  }

  if (mode == EmMode::LPMAP) {
    g += -0.5 * w + 0.5 * (w * params.mu[j] * params.mu[j].transpose() * w) / settings.g;
    return g;
  }
  // NLPMAP, Unequal
  Eigen::MatrixXd a_inv = w;
  for (int m = 0; m < k; ++m) {
    if (m == j) continue;
    a_inv += precision_of(params.sigma[m]);
  }
  a_inv /= static_cast<double>(k);
  const Eigen::MatrixXd a = safe_llt(a_inv).solve(Eigen::MatrixXd::Identity(p, p));
  // from (k/2) log|A^{-1}|
  g -= 0.5 * w * a * w;
  // from mean priors
  Eigen::MatrixXd mm = Eigen::MatrixXd::Zero(p, p);
  for (int l = 0; l < k; ++l) mm += params.mu[l] * params.mu[l].transpose();
  g += (w * mm * w) / (2.0 * settings.g * k);
  // from the penalty
  Eigen::MatrixXd pair_acc = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < k; ++i) {
    for (int l = i + 1; l < k; ++l) {
      const Eigen::VectorXd u = params.mu[i] - params.mu[l];
      pair_acc += (u * u.transpose()) / guarded_quad(u, a_inv);
    }
  }
  g -= (w * pair_acc * w) / static_cast<double>(k);
  return g;
}

Eigen::VectorXd vec_lower(const Eigen::MatrixXd& l) {
  const int p = static_cast<int>(l.rows());
  Eigen::VectorXd v(p * (p + 1) / 2);
  int idx = 0;
  for (int c = 0; c < p; ++c)
    for (int r = c; r < p; ++r) v[idx++] = l(r, c);
  return v;
}

Eigen::MatrixXd unvec_lower(const Eigen::VectorXd& v, int p) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p, p);
  int idx = 0;
  for (int c = 0; c < p; ++c)
    for (int r = c; r < p; ++r) l(r, c) = v[idx++];
  return l;
}

Eigen::MatrixXd sigma_candidate(int j, const SuffStats& ss, const MixtureParams& params,
                                const MixtureParams& prev, const ModelSpec& spec,
                                const PriorSettings& settings, EmMode mode,
                                const Eigen::MatrixXd& a_inv_prev) {
  const int p = spec.p;
  const int k = spec.k;
  const bool equal = spec.cov == CovStructure::Equal;
  Eigen::MatrixXd s_inv = Eigen::MatrixXd::Zero(p, p);
  if (mode != EmMode::MLE) s_inv = safe_llt(settings.S).solve(Eigen::MatrixXd::Identity(p, p));

  if (equal) {
    Eigen::MatrixXd num = Eigen::MatrixXd::Zero(p, p);
    double n_tot = 0.0;
    for (int l = 0; l < k; ++l) {
      num += scatter_about(ss, l, params.mu[l]);
      n_tot += ss.counts[l];
    }
    if (mode == EmMode::MLE) return num / std::max(n_tot, 1.0);
    num += s_inv;
    for (int l = 0; l < k; ++l) num += params.mu[l] * params.mu[l].transpose() / settings.g;
    double denom = n_tot + settings.nu - p - 1 + k;
    if (mode == EmMode::NLPMAP) {
      for (int i = 0; i < k; ++i) {
        for (int l = i + 1; l < k; ++l) {
          const Eigen::VectorXd u = params.mu[i] - params.mu[l];
          const double dij = guarded_quad(prev.mu[i] - prev.mu[l], a_inv_prev);
          num -= 2.0 * (u * u.transpose()) / dij;
        }
      }
    }
    return num / denom;
  }

  // Unequal
  Eigen::MatrixXd num = scatter_about(ss, j, params.mu[j]);
  if (mode == EmMode::MLE) return num / std::max(ss.counts[j], 1.0);
  num += s_inv;
  const double denom = settings.nu - p + ss.counts[j];
  if (mode == EmMode::LPMAP) {
    num += params.mu[j] * params.mu[j].transpose() / settings.g;
    return num / denom;
  }
  // NLPMAP as printed: own-mean ridge scaled by 1/(kg), penalty pairs through j.
  num += params.mu[j] * params.mu[j].transpose() / (static_cast<double>(k) * settings.g);
  for (int i = 0; i < k; ++i) {
    if (i == j) continue;
    const Eigen::VectorXd u = params.mu[j] - params.mu[i];
    const double dij = guarded_quad(prev.mu[i] - prev.mu[j], a_inv_prev);
    num -= (2.0 / k) * (u * u.transpose()) / dij;
  }
  return num / denom;
}

Eigen::MatrixXd update_sigma(int j, const SuffStats& ss, MixtureParams& params,
                             const MixtureParams& prev, const ModelSpec& spec,
                             const PriorSettings& settings, EmMode mode,
                             const Eigen::MatrixXd& a_inv_prev, int* fallback_count) {
  const int p = spec.p;
  const Eigen::MatrixXd current = params.sigma.size() == 1 ? params.sigma[0]
                                                           : params.sigma[static_cast<size_t>(j)];
  const Eigen::MatrixXd candidate =
      sigma_candidate(j, ss, params, prev, spec, settings, mode, a_inv_prev);

  if (mode != EmMode::NLPMAP) return candidate;  // exact conditional maximizers

  const auto target = [&](const Eigen::MatrixXd& s) {
    return sigma_block_target(s, j, ss, params, spec, settings, mode);
  };
  const double f_prev = target(current);
  Eigen::LLT<Eigen::MatrixXd> cand_llt(candidate);
  if (cand_llt.info() == Eigen::Success && target(candidate) > f_prev) return candidate;

  // Fallback in the Cholesky-factor parameterization: Sigma = L L'.
  const Eigen::LLT<Eigen::MatrixXd> cur_llt = safe_llt(current);
  const Eigen::MatrixXd l_cur = cur_llt.matrixL();
  const Eigen::MatrixXd grad_sigma =
      sigma_block_gradient(current, j, ss, params, spec, settings, mode);
  const Eigen::MatrixXd grad_l = 2.0 * (grad_sigma * l_cur);
  Eigen::VectorXd grad_vec(p * (p + 1) / 2);
  {
    int idx = 0;
    for (int c = 0; c < p; ++c)
      for (int r = c; r < p; ++r) grad_vec[idx++] = grad_l(r, c);
  }
  const auto vec_target = [&](const Eigen::VectorXd& v) {
    const Eigen::MatrixXd l = unvec_lower(v, p);
    return target(l * l.transpose());
  };
  const double gnorm = grad_vec.norm();
  const double kbar =
      gnorm > 0.0 ? std::sqrt((candidate - current).norm() / gnorm) : 0.0;
  if (fallback_count) ++(*fallback_count);
  const FallbackOutcome fb = gradient_fallback(vec_target, grad_vec, vec_lower(l_cur), kbar);
  const Eigen::MatrixXd l_new = unvec_lower(fb.point, p);
  return l_new * l_new.transpose();
}

}  // namespace

MixtureParams m_step(const Responsibilities& resp, const MixtureParams& current,
                     const Dataset& data, const ModelSpec& spec, const PriorSettings& settings,
                     EmMode mode, double c_k, RandomStream* reinit_stream, int* fallback_count,
                     bool* collapsed) {
  (void)c_k;
  const int k = spec.k;
  const int p = spec.p;
  const int n = data.n();
  SuffStats ss = sufficient_stats(resp, data);

  MixtureParams prev = current;
  MixtureParams next = current;

  // Empty components under the MLE target: reseed at a random data point.
  if (mode == EmMode::MLE) {
    for (int j = 0; j < k; ++j) {
      if (ss.counts[j] < 1e-10 && reinit_stream != nullptr && n > 0) {
        const int idx = static_cast<int>(reinit_stream->uniform() * n);
        Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(p, p);
        for (int l = 0; l < k; ++l) pooled += ss.scatter[l];
        pooled /= std::max(1.0, static_cast<double>(n));
        pooled.diagonal().array() += 1e-6;
        next.mu[j] = data.y.row(std::min(idx, n - 1)).transpose();
        if (spec.cov == CovStructure::Unequal) next.sigma[static_cast<size_t>(j)] = pooled;
        ss.counts[j] = 0.0;
        ss.ybar[j] = next.mu[j];
        ss.scatter[j].setZero();
      }
    }
  }

  const Eigen::MatrixXd a_inv_prev =
      mode == EmMode::NLPMAP ? mean_prior_precision(prev) : Eigen::MatrixXd();

  // means (pair distances and other means frozen at the previous iterate)
  for (int j = 0; j < k; ++j) {
    if (mode == EmMode::MLE && ss.counts[j] < 1e-10) continue;  // reseeded above
    const Eigen::MatrixXd w_j = precision_of(prev.sigma_of(j));
    const Eigen::MatrixXd& a_inv = mode == EmMode::NLPMAP ? a_inv_prev : w_j;
    next.mu[j] = update_mu(j, ss, prev, w_j, a_inv, settings, mode, fallback_count);
  }

  // covariances (use the new means)
  if (spec.cov == CovStructure::Equal) {
    next.sigma[0] = update_sigma(0, ss, next, prev, spec, settings, mode, a_inv_prev,
                                 fallback_count);
  } else {
    for (int j = 0; j < k; ++j) {
      if (mode == EmMode::MLE && ss.counts[j] < 1e-10) continue;  // keep the reseeded pooled matrix
      next.sigma[static_cast<size_t>(j)] =
          update_sigma(j, ss, next, prev, spec, settings, mode, a_inv_prev, fallback_count);
    }
  }

  // weights
  if (mode == EmMode::MLE) {
    next.eta = ss.counts / std::max(1.0, static_cast<double>(n));
    if (k == 1) next.eta[0] = 1.0;
  } else {
    const double denom = n + k * (settings.q - 1.0);
    for (int j = 0; j < k; ++j) next.eta[j] = (ss.counts[j] + settings.q - 1.0) / denom;
  }

  if (mode == EmMode::MLE) {
    // A vanishing variance signals likelihood unboundedness. Flag the
    // collapse and floor the matrix so degenerate data (constant columns)
    // still yields usable parameters.
    for (Eigen::MatrixXd& s : next.sigma) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
      const double min_eig = es.eigenvalues().minCoeff();
      if (min_eig < kCollapseEig) {
        if (collapsed != nullptr) *collapsed = true;
        s.diagonal().array() += kCollapseEig - std::min(0.0, min_eig);
      }
    }
  }
  return next;
}

double objective_xi(const MixtureParams& params, const Responsibilities& resp,
                    const Dataset& data, const ModelSpec& spec, const PriorSettings& settings,
                    EmMode mode, double c_k) {
  const int n = data.n();
  const int k = spec.k;
  double out = 0.0;
  for (int j = 0; j < k; ++j) {
    if (resp.counts[j] > 0.0) out += resp.counts[j] * std::log(params.eta[j]);
    const Eigen::LLT<Eigen::MatrixXd> llt = safe_llt(params.sigma_of(j));
    for (int i = 0; i < n; ++i) {
      if (resp.zbar(i, j) == 0.0) continue;
      out += resp.zbar(i, j) * mvn_logpdf_chol(data.y.row(i).transpose(), params.mu[j], llt);
    }
  }
  return out + mode_log_prior(params, spec, settings, mode, c_k);
}

double em_objective(const MixtureParams& params, const Dataset& data, const ModelSpec& spec,
                    const PriorSettings& settings, EmMode mode, double c_k) {
  return log_likelihood(params, data, spec) + mode_log_prior(params, spec, settings, mode, c_k);
}

Eigen::VectorXd grad_xi_mu(int j, const MixtureParams& params, const Responsibilities& resp,
                           const Dataset& data, const ModelSpec& spec,
                           const PriorSettings& settings, EmMode mode) {
  SuffStats ss = sufficient_stats(resp, data);
  const Eigen::MatrixXd w_j = precision_of(params.sigma_of(j));
  const Eigen::MatrixXd a_inv =
      mode == EmMode::NLPMAP ? mean_prior_precision(params) : w_j;
  (void)spec;
  return mu_block_gradient(params.mu[j], j, ss, w_j, params.mu, a_inv, settings, mode);
}

namespace {

MixtureParams init_from_random_allocation(const Dataset& data, const ModelSpec& spec,
                                          RandomStream& stream) {
  const int n = data.n();
  const int p = data.p();
  const int k = spec.k;
  MixtureParams params;
  params.eta = Eigen::VectorXd::Constant(k, 1.0 / k);
  params.mu.assign(k, Eigen::VectorXd::Zero(p));
  params.sigma.assign(spec.cov == CovStructure::Equal ? 1 : k, Eigen::MatrixXd::Identity(p, p));

  std::vector<int> z(n);
  for (int i = 0; i < n; ++i) z[i] = std::min(k - 1, static_cast<int>(stream.uniform() * k));
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
  for (int i = 0; i < n; ++i) counts[z[i]] += 1.0;

  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(p, p);
  const Eigen::VectorXd grand_mean = data.y.colwise().mean();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd d = data.y.row(i).transpose() - grand_mean;
    pooled += d * d.transpose();
  }
  pooled /= std::max(1, n - 1);
  pooled.diagonal().array() += 1e-6;

  for (int j = 0; j < k; ++j) {
    params.eta[j] = counts[j] > 0.0 ? counts[j] / n : 1.0 / n;
  }
  const double esum = params.eta.sum();
  params.eta /= esum;
  for (Eigen::MatrixXd& s : params.sigma) s = pooled;

  // Means are seeded at distinct data points. Allocation-averaged means all
  // start at the grand mean, which is a stationary point of EM; the tolerance
  // test stops there before the symmetry breaks.
  std::vector<int> picked;
  for (int j = 0; j < k; ++j) {
    int idx = 0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      idx = std::min(n - 1, static_cast<int>(stream.uniform() * n));
      bool fresh = true;
      for (int other : picked) {
        if (other == idx) fresh = false;
      }
      if (fresh || n <= k) break;
    }
    picked.push_back(idx);
    params.mu[j] = data.y.row(idx).transpose();
  }
  return params;
}

EMResult run_single(const Dataset& data, const ModelSpec& spec, const PriorSettings& settings,
                    EmMode mode, MixtureParams start, double c_k, RandomStream& stream,
                    int max_iters, double tol) {
  EMResult result;
  result.params = std::move(start);
  double prev_obj = em_objective(result.params, data, spec, settings, mode, c_k);
  result.objective_trace.push_back(prev_obj);
  for (int t = 1; t <= max_iters; ++t) {
    const Responsibilities resp = e_step(result.params, data, spec);
    bool collapsed = false;
    result.params = m_step(resp, result.params, data, spec, settings, mode, c_k, &stream,
                           &result.fallback_count, &collapsed);
    result.iterations = t;
    const double obj = em_objective(result.params, data, spec, settings, mode, c_k);
    result.objective_trace.push_back(obj);
    if (collapsed) {
      result.collapsed = true;  // floored variance: stop chasing the spike
      break;
    }
    if (std::abs(obj - prev_obj) < tol) {
      result.converged = true;
      break;
    }
    prev_obj = obj;
  }
  return result;
}

}  // namespace

EMResult run_em(const Dataset& data, const ModelSpec& spec, const PriorSettings& settings,
                EmMode mode, const EmInit& init, double c_k, RandomStream& stream,
                int max_iters, double tol) {
  const int n = data.n();
  const int p = data.p();
  const int k = spec.k;

  if (init.kind == EmInit::Kind::Given) {
    return run_single(data, spec, settings, mode, init.params, c_k, stream, max_iters, tol);
  }

  if (init.kind == EmInit::Kind::FromMLE) {
    const EMResult mle =
        run_em(data, spec, settings, EmMode::MLE, EmInit::random_restarts(init.restarts), c_k,
               stream, max_iters, tol);
    return run_single(data, spec, settings, mode, mle.params, c_k, stream, max_iters, tol);
  }

  // RandomRestarts
  EMResult best;
  EMResult best_collapsed;
  bool have_best = false, have_collapsed = false;
  double best_obj = kNegInf, best_collapsed_obj = kNegInf;
  for (int r = 0; r < std::max(1, init.restarts); ++r) {
    MixtureParams start = init_from_random_allocation(data, spec, stream);
    EMResult res = run_single(data, spec, settings, mode, start, c_k, stream, max_iters, tol);
    const double obj = res.objective_trace.back();
    if (res.collapsed) {
      if (!have_collapsed || obj > best_collapsed_obj) {
        best_collapsed = std::move(res);
        best_collapsed_obj = obj;
        have_collapsed = true;
      }
      continue;  // discard in favor of any non-degenerate restart
    }
    if (!have_best || obj > best_obj) {
      best = std::move(res);
      best_obj = obj;
      have_best = true;
    }
    if (k == 1) break;  // deterministic fixed point, extra restarts are identical
  }
  if (have_best) return best;
  if (have_collapsed) return best_collapsed;  // degenerate data: floored variances, flagged
  throw NumericalError("run_em: no usable restart; n=" + std::to_string(n) +
                       ", k=" + std::to_string(k) + ", p=" + std::to_string(p));
}

}  // namespace mixsel
