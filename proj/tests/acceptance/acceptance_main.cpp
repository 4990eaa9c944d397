// Acceptance suite: every release-gating check, one pass/fail line each.
// Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mixsel/csv.hpp"
#include "mixsel/distributions.hpp"
#include "mixsel/em.hpp"
#include "mixsel/gibbs.hpp"
#include "mixsel/model.hpp"
#include "mixsel/momprior.hpp"
#include "mixsel/report_json.hpp"
#include "mixsel/selection.hpp"
#include "mixsel/special.hpp"

using namespace mixsel;

namespace {

struct Harness {
  int failures = 0;
  int index = 0;

  void run(const std::string& name, const std::function<bool(std::string&)>& body) {
    ++index;
    std::string detail;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ok = body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
      ok = false;
    }
    const double sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", index, name.c_str(),
                sec, detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// --- shared helpers ---------------------------------------------------------

double exact_k1_log_marginal(const Eigen::MatrixXd& y, double g, double nu,
                             const Eigen::MatrixXd& s_mat) {
  const int n = static_cast<int>(y.rows());
  const int p = static_cast<int>(y.cols());
  const auto lmvg = [](int dim, double a) {
    double out = 0.25 * dim * (dim - 1) * std::log(M_PI);
    for (int j = 1; j <= dim; ++j) out += std::lgamma(a + 0.5 * (1.0 - j));
    return out;
  };
  const Eigen::VectorXd ybar = y.colwise().mean();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd d = y.row(i).transpose() - ybar;
    v += d * d.transpose();
  }
  v += (n / (1.0 + g * n)) * (ybar * ybar.transpose());
  return -0.5 * n * p * std::log(2.0 * M_PI) + 0.5 * n * p * std::log(2.0) -
         0.5 * p * std::log(1.0 + g * n) + lmvg(p, 0.5 * (nu + n)) - lmvg(p, 0.5 * nu) -
         0.5 * nu * std::log(s_mat.determinant()) -
         0.5 * (nu + n) * std::log((s_mat.inverse() + v).determinant());
}

// posterior average of the importance weight for one simulated dataset
double omega_average(int case_id, int n, int k, std::uint64_t seed) {
  RandomStream data_stream(seed, 0);
  const SimulatedCase sim = simulate_case(case_id, n, data_stream);
  const Dataset data = standardize(sim.data.y);
  const ModelSpec spec{k, CovStructure::Equal, 1};
  PriorSettings s = default_prior_settings(1, CovStructure::Equal);
  const double c_k = norm_const_closed_p1(k);
  RandomStream em_stream(seed, 1);
  const EMResult lp_map = run_em(data, spec, s, EmMode::LPMAP, EmInit::from_mle(), c_k,
                                 em_stream);
  RandomStream chain_stream(seed, 2);
  const ChainOutput chain =
      run_chain(data, spec, s, 7500, 2500, chain_stream, c_k, &lp_map.params);
  return std::exp(log_sum_exp(chain.omega_logs) - std::log(chain.T()));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

int main() {
  Harness h;

  h.run("normalizing constant closed form (k=2..6, p=1, 1e-9 relative)", [](std::string& d) {
    for (int k = 2; k <= 6; ++k) {
      const double rec = norm_const_recursive(k, 1);
      const double closed = norm_const_closed_p1(k);
      if (std::abs(rec - closed) / closed >= 1e-9) {
        d = "k=" + std::to_string(k) + " rec=" + fmt(rec) + " closed=" + fmt(closed);
        return false;
      }
    }
    return true;
  });

  h.run("normalizing constant vs Monte Carlo oracle (1e7 draws, 3 s.e.)", [](std::string& d) {
    const std::vector<std::pair<int, int>> combos{{2, 1}, {2, 2}, {2, 3}, {3, 1},
                                                  {3, 2}, {3, 3}, {4, 2}};
    for (const auto& [k, p] : combos) {
      RandomStream stream(8100 + 10 * k + p, 0);
      const McEstimate mc = norm_const_mc(k, p, 10'000'000, stream);
      const double rec = norm_const_recursive(k, p);
      if (std::abs(rec - mc.estimate) >= 3.0 * mc.std_err) {
        d = "k=" + std::to_string(k) + " p=" + std::to_string(p) + " rec=" + fmt(rec) +
            " mc=" + fmt(mc.estimate) + " se=" + fmt(mc.std_err);
        return false;
      }
    }
    return true;
  });

  h.run("prior elicitation defaults (g in [5.6,5.8], round-trip, g_local in [11.4,11.7])",
        [](std::string& d) {
          const double g = elicit_g(1, 0.05, 4.0);
          const double round_trip = gamma_cdf(4.0, 1.5, 1.0 / (4.0 * g));
          const double gl = elicit_g_local(1, g);
          d = "g=" + fmt(g) + " cdf=" + fmt(round_trip) + " g_local=" + fmt(gl);
          return g > 5.6 && g < 5.8 && std::abs(round_trip - 0.05) <= 1e-8 && gl > 11.4 &&
                 gl < 11.7;
        });

  h.run("marginal likelihood matches the exact conjugate value (k=1, 10 seeds, +-0.05)",
        [](std::string& d) {
          double worst = 0.0;
          for (int p : {1, 2}) {
            RandomStream data_stream(4200 + p, 0);
            Eigen::MatrixXd y(100, p);
            for (int i = 0; i < 100; ++i) y.row(i) = data_stream.normal_vector(p).transpose();
            const Dataset data = dataset_from_matrix(y);
            const ModelSpec spec{1, CovStructure::Equal, p};
            PriorSettings s = default_prior_settings(p, CovStructure::Equal);
            const double exact = exact_k1_log_marginal(y, s.g, s.nu, s.S);
            RandomStream em_stream(4300 + p, 0);
            const EMResult lp_map =
                run_em(data, spec, s, EmMode::LPMAP, EmInit::from_mle(), 1.0, em_stream);
            for (int seed = 0; seed < 10; ++seed) {
              RandomStream chain_stream(4400 + seed, p);
              const ChainOutput chain =
                  run_chain(data, spec, s, 7500, 2500, chain_stream, 1.0, &lp_map.params);
              const double est =
                  chib_log_marginal(chain, lp_map.params, data, spec, s).log_marginal;
              worst = std::max(worst, std::abs(est - exact));
            }
          }
          d = "max abs error " + fmt(worst);
          return worst <= 0.05;
        });

  h.run("information criterion offset (aic - bic = 10.992 at k=1, p=2, n=600)",
        [](std::string& d) {
          const int pk = param_count(ModelSpec{1, CovStructure::Equal, 2});
          const double offset = -pk + 0.5 * pk * std::log(600.0);
          const double table_offset = -2981.828 - (-2992.820);
          d = "offset=" + fmt(offset);
          return std::abs(offset - 10.992) < 5e-4 && std::abs(offset - table_offset) < 5e-4;
        });

  h.run("overfitted-model weight average decreases in n (medians over 10 replicates)",
        [](std::string& d) {
          std::vector<double> medians;
          for (int n : {200, 500, 1000}) {
            std::vector<double> omegas;
            for (int rep = 0; rep < 10; ++rep) {
              omegas.push_back(omega_average(1, n, 2, 9000 + 97 * rep + n));
            }
            medians.push_back(median(omegas));
          }
          d = "medians " + fmt(medians[0]) + " > " + fmt(medians[1]) + " > " + fmt(medians[2]);
          return medians[0] > medians[1] && medians[1] > medians[2];
        });

  h.run("simulation power and parsimony (Case 3 and Case 1 at n=500, 20 replicates)",
        [](std::string& d) {
          int case3_hits = 0, case1_hits = 0;
          for (int rep = 0; rep < 20; ++rep) {
            RandomStream data_stream(30'000 + rep, 0);
            const SimulatedCase sim = simulate_case(3, 500, data_stream);
            const Dataset data = standardize(sim.data.y);
            RunConfig config;
            config.kmax = 3;
            config.cov = CovChoice::Equal;
            config.seed = 31'000 + rep;
            const SelectionReport report = select(data, config);
            double p2 = 0.0;
            for (const ModelResult& m : report.models)
              if (m.spec.k == 2) p2 = m.post_prob_nlp;
            if (p2 > 0.9) ++case3_hits;
          }
          for (int rep = 0; rep < 20; ++rep) {
            RandomStream data_stream(32'000 + rep, 0);
            const SimulatedCase sim = simulate_case(1, 500, data_stream);
            const Dataset data = standardize(sim.data.y);
            RunConfig config;
            config.kmax = 3;
            config.cov = CovChoice::Equal;
            config.seed = 33'000 + rep;
            const SelectionReport report = select(data, config);
            double nlp1 = 0.0, lp1 = 0.0;
            for (const ModelResult& m : report.models) {
              if (m.spec.k == 1) {
                nlp1 = m.post_prob_nlp;
                lp1 = m.post_prob_lp;
              }
            }
            if (nlp1 > lp1) ++case1_hits;
          }
          d = "Case3 P(M2)>0.9 in " + std::to_string(case3_hits) + "/20; Case1 nlp>lp in " +
              std::to_string(case1_hits) + "/20";
          return case3_hits >= 16 && case1_hits >= 14;
        });

  h.run("Iris reproduction (nlp: k=3 equal with P>0.95; lp top k=3 with P in [0.6,0.95])",
        [](std::string& d) {
          const CsvData csv = read_csv(std::string(MIXSEL_DATA_DIR) + "/iris.csv", true);
          const Dataset data = standardize(csv.values);
          RunConfig config;
          config.kmax = 6;
          config.cov = CovChoice::Both;
          config.seed = 20'260'101;
          const SelectionReport report = select(data, config);
          const ModelResult& nlp = report.models[report.chosen_nlp];
          const ModelResult& lp = report.models[report.chosen_lp];
          d = "nlp: k=" + std::to_string(nlp.spec.k) +
              (nlp.spec.cov == CovStructure::Equal ? " equal" : " unequal") + " P=" +
              fmt(nlp.post_prob_nlp) + "; lp: k=" + std::to_string(lp.spec.k) + " P=" +
              fmt(lp.post_prob_lp);
          return nlp.spec.k == 3 && nlp.spec.cov == CovStructure::Equal &&
                 nlp.post_prob_nlp > 0.95 && lp.spec.k == 3 && lp.post_prob_lp >= 0.6 &&
                 lp.post_prob_lp <= 0.95;
        });

  h.run("Old Faithful reproduction (nlp: k=3 equal with P>0.9)", [](std::string& d) {
    const CsvData csv = read_csv(std::string(MIXSEL_DATA_DIR) + "/faithful.csv", true);
    const Dataset data = standardize(csv.values);
    RunConfig config;
    config.kmax = 6;
    config.cov = CovChoice::Both;
    config.seed = 20'260'102;
    const SelectionReport report = select(data, config);
    const ModelResult& nlp = report.models[report.chosen_nlp];
    d = "nlp: k=" + std::to_string(nlp.spec.k) +
        (nlp.spec.cov == CovStructure::Equal ? " equal" : " unequal") + " P=" +
        fmt(nlp.post_prob_nlp);
    return nlp.spec.k == 3 && nlp.spec.cov == CovStructure::Equal && nlp.post_prob_nlp > 0.9;
  });

  h.run("EM properties (100 instances: ascent, gradient check, row sums)", [](std::string& d) {
    RandomStream stream(777, 0);
    int instances = 0;
    while (instances < 100) {
      const int k = 1 + static_cast<int>(stream.uniform() * 3);
      const int p = 1 + static_cast<int>(stream.uniform() * 2);
      const CovStructure cov =
          stream.uniform() < 0.5 ? CovStructure::Equal : CovStructure::Unequal;
      const ModelSpec spec{k, cov, p};
      PriorSettings s = default_prior_settings(p, cov);
      const double c_k = k == 1 ? 1.0 : norm_const_recursive(k, p);
      Eigen::MatrixXd y(35, p);
      for (int i = 0; i < 35; ++i) y.row(i) = (1.5 * stream.normal_vector(p)).transpose();
      const Dataset data = dataset_from_matrix(y);
      ++instances;

      const EmMode mode =
          instances % 3 == 0 ? EmMode::MLE : (instances % 3 == 1 ? EmMode::LPMAP : EmMode::NLPMAP);
      RandomStream em_stream(900 + instances, 0);
      EMResult res;
      if (mode == EmMode::MLE) {
        res = run_em(data, spec, s, mode, EmInit::random_restarts(2), c_k, em_stream, 250);
      } else {
        res = run_em(data, spec, s, mode, EmInit::from_mle(), c_k, em_stream, 250);
      }
      if (res.collapsed) continue;
      for (size_t t = 1; t < res.objective_trace.size(); ++t) {
        if (res.objective_trace[t] < res.objective_trace[t - 1] - 1e-8) {
          d = "descent at instance " + std::to_string(instances);
          return false;
        }
      }

      // responsibilities and the mean-block gradient at the solution
      const Responsibilities r = e_step(res.params, data, spec);
      for (int i = 0; i < data.n(); ++i) {
        if (std::abs(r.zbar.row(i).sum() - 1.0) > 1e-12) {
          d = "row sum violation";
          return false;
        }
      }
      if (k >= 2) {
        const int j = instances % k;
        const Eigen::VectorXd grad =
            grad_xi_mu(j, res.params, r, data, spec, s, EmMode::NLPMAP);
        const double step = 1e-5;
        for (int dd = 0; dd < p; ++dd) {
          MixtureParams up = res.params, dn = res.params;
          up.mu[j][dd] += step;
          dn.mu[j][dd] -= step;
          const double fd = (objective_xi(up, r, data, spec, s, EmMode::NLPMAP, c_k) -
                             objective_xi(dn, r, data, spec, s, EmMode::NLPMAP, c_k)) /
                            (2.0 * step);
          const double scale = std::max(1.0, std::abs(fd));
          if (std::abs(grad[dd] - fd) > 1e-5 * scale) {
            d = "gradient mismatch " + fmt(grad[dd]) + " vs " + fmt(fd);
            return false;
          }
        }
      }
    }
    return true;
  });

  h.run("estimator bookkeeping, symmetry, determinism", [](std::string& d) {
    RandomStream data_stream(606, 0);
    const SimulatedCase sim = simulate_case(6, 100, data_stream);
    const Dataset data = standardize(sim.data.y);
    const ModelSpec spec{2, CovStructure::Equal, 2};
    PriorSettings s = default_prior_settings(2, CovStructure::Equal);
    const double c2 = norm_const_recursive(2, 2);
    RandomStream em_stream(607, 0);
    const EMResult lp_map = run_em(data, spec, s, EmMode::LPMAP, EmInit::from_mle(), c2,
                                   em_stream);
    RandomStream chain_stream(608, 0);
    const ChainOutput chain = run_chain(data, spec, s, 2500, 500, chain_stream, c2,
                                        &lp_map.params);
    const ChibResult chib = chib_log_marginal(chain, lp_map.params, data, spec, s);
    const MarginalEstimate est = nlp_log_marginal(chain, chib.log_marginal);

    const double shift = chain.omega_logs.maxCoeff();
    double acc = 0.0;
    for (int t = 0; t < chain.T(); ++t) acc += std::exp(chain.omega_logs[t] - shift);
    const double log_mean = shift + std::log(acc / chain.T());
    const double gap = std::abs((est.log_marginal_nlp - est.log_marginal_lp) - log_mean);
    if (gap > 1e-12 * std::max(1.0, std::abs(log_mean))) {
      d = "bookkeeping gap " + fmt(gap);
      return false;
    }

    const double relabeled =
        chib_log_marginal(chain, apply_permutation(lp_map.params, {1, 0}), data, spec, s)
            .log_marginal;
    if (std::abs(relabeled - chib.log_marginal) > 1e-10) {
      d = "relabeling changed the estimate by " + fmt(relabeled - chib.log_marginal);
      return false;
    }

    RunConfig config;
    config.kmax = 2;
    config.iters = 1000;
    config.burnin = 250;
    config.restarts = 3;
    config.seed = 609;
    const SelectionReport r1 = select(data, config);
    const SelectionReport r2 = select(data, config);
    nlohmann::ordered_json j1 = report_to_json(r1);
    nlohmann::ordered_json j2 = report_to_json(r2);
    j1.erase("runtime_seconds");
    j2.erase("runtime_seconds");
    if (j1.dump() != j2.dump()) {
      d = "reports differ across identical runs";
      return false;
    }
    return true;
  });

  h.run("prior reproduction with no data (moments within 4 s.e. over 1e4 sweeps)",
        [](std::string& d) {
          const int k = 2, p = 1;
          const ModelSpec spec{k, CovStructure::Unequal, p};
          PriorSettings s = default_prior_settings(p, CovStructure::Unequal);
          const Dataset empty = dataset_from_matrix(Eigen::MatrixXd(0, p));
          RandomStream stream(4141, 0);
          const int sweeps = 10000;
          const ChainOutput chain = run_chain(empty, spec, s, sweeps, 0, stream, 2.0);

          double eta_acc = 0.0, eta_sq = 0.0, sig_acc = 0.0, sig_sq = 0.0;
          double prec_acc = 0.0, prec_sq = 0.0, mu_acc = 0.0, mu_sq = 0.0, mu4 = 0.0;
          for (const MixtureParams& draw : chain.draws) {
            const double e = draw.eta[0];
            const double v = draw.sigma[0](0, 0);
            const double m = draw.mu[0][0];
            eta_acc += e;
            eta_sq += e * e;
            sig_acc += v;
            sig_sq += v * v;
            prec_acc += 1.0 / v;
            prec_sq += 1.0 / (v * v);
            mu_acc += m;
            mu_sq += m * m;
            mu4 += m * m * m * m;
          }
          const double inv_t = 1.0 / sweeps;
          const auto se = [&](double mean, double sq) {
            return std::sqrt((sq * inv_t - mean * mean) * inv_t);
          };
          const double eta_mean = eta_acc * inv_t;
          const double sig_mean = sig_acc * inv_t;
          const double prec_mean = prec_acc * inv_t;
          const double mu_mean = mu_acc * inv_t;
          const double sig_expect = (1.0 / s.S(0, 0)) / (s.nu - p - 1);
          const double mu_var = mu_sq * inv_t - mu_mean * mu_mean;
          const double var_se = std::sqrt((mu4 * inv_t - mu_var * mu_var) * inv_t);

          const bool ok = std::abs(eta_mean - 0.5) < 4.0 * se(eta_mean, eta_sq) &&
                          std::abs(sig_mean - sig_expect) < 4.0 * se(sig_mean, sig_sq) &&
                          std::abs(prec_mean - s.nu * s.S(0, 0)) < 4.0 * se(prec_mean, prec_sq) &&
                          std::abs(mu_mean) < 4.0 * se(mu_mean, mu_sq) &&
                          std::abs(mu_var - s.g * sig_expect) < 4.0 * var_se;
          d = "eta=" + fmt(eta_mean) + " E(sigma)=" + fmt(sig_mean) + " (expect " +
              fmt(sig_expect) + ") E(prec)=" + fmt(prec_mean);
          return ok;
        });

  std::printf("%d of %d criteria passed\n", h.index - h.failures, h.index);
  return h.failures;
}
