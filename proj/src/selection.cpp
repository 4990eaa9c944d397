#include "mixsel/selection.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

#include "mixsel/errors.hpp"
#include "mixsel/special.hpp"

namespace mixsel {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

std::pair<double, double> bic_aic(const Dataset& data, const ModelSpec& spec,
                                  const EMResult& mle) {
  const double loglik = mle.objective_trace.back();
  const int pk = param_count(spec);
  const double bic = loglik - 0.5 * pk * std::log(static_cast<double>(data.n()));
  const double aic = loglik - pk;
  return {bic, aic};
}

Eigen::VectorXd posterior_model_probs(const Eigen::VectorXd& log_marginals,
                                      const Eigen::VectorXd& prior_weights) {
  const int m = static_cast<int>(log_marginals.size());
  if (prior_weights.size() != m) throw ShapeError("posterior_model_probs: size mismatch");
  Eigen::VectorXd scores(m);
  for (int i = 0; i < m; ++i) {
    scores[i] = prior_weights[i] > 0.0 ? log_marginals[i] + std::log(prior_weights[i]) : kNegInf;
  }
  const double lse = log_sum_exp(scores);
  if (lse == kNegInf) throw DegenerateModelSpace("posterior_model_probs: no finite marginal");
  Eigen::VectorXd out(m);
  for (int i = 0; i < m; ++i) out[i] = scores[i] == kNegInf ? 0.0 : std::exp(scores[i] - lse);
  return out;
}

Eigen::VectorXd posterior_model_probs(const Eigen::VectorXd& log_marginals) {
  return posterior_model_probs(
      log_marginals, Eigen::VectorXd::Constant(log_marginals.size(),
                                               1.0 / static_cast<double>(log_marginals.size())));
}

namespace {

struct ModelTask {
  ModelSpec spec;
  PriorSettings settings;
  double c_k = 1.0;
  bool want_nonempty = false;
};

ModelResult run_model(const ModelTask& task, const Dataset& data, const RunConfig& config,
                      std::uint64_t stream_base) {
  ModelResult res;
  res.spec = task.spec;
  res.p_k = param_count(task.spec);
  try {
    RandomStream em_stream(config.seed, stream_base);
    const EMResult mle = run_em(data, task.spec, task.settings, EmMode::MLE,
                                EmInit::random_restarts(config.restarts), task.c_k, em_stream);
    std::tie(res.bic, res.aic) = bic_aic(data, task.spec, mle);
    res.mle = mle.params;

    const EMResult lp_map = run_em(data, task.spec, task.settings, EmMode::LPMAP,
                                   EmInit::given(mle.params), task.c_k, em_stream);
    res.lp_map = lp_map.params;

    const EMResult nlp_map = run_em(data, task.spec, task.settings, EmMode::NLPMAP,
                                    EmInit::given(mle.params), task.c_k, em_stream);
    res.nlp_map = nlp_map.params;

    RandomStream chain_stream(config.seed, stream_base + 1);
    const ChainOutput chain = run_chain(data, task.spec, task.settings, config.iters,
                                        config.burnin, chain_stream, task.c_k, &lp_map.params);

    const ChibResult chib = chib_log_marginal(chain, lp_map.params, data, task.spec,
                                              task.settings);
    const MarginalEstimate marginal =
        nlp_log_marginal(chain, chib.log_marginal, chib.se_log_ordinate, &lp_map.params);
    res.log_marginal_lp = marginal.log_marginal_lp;
    res.log_marginal_nlp = marginal.log_marginal_nlp;
    res.se_lp = marginal.mc_std_err_lp;
    res.se_omega = marginal.mc_std_err_omega;

    if (task.want_nonempty) {
      res.nonempty_lp = nonempty_distribution(chain);
      res.nonempty_nlp = nonempty_distribution_weighted(chain);
    }
  } catch (const std::exception& e) {
    res.failed = true;
    res.failure = e.what();
  }
  return res;
}

// Argmax with ties broken toward smaller k, Equal before Unequal; models are
// stored in that canonical order, so strict improvement suffices.
int argmax_strict(const std::vector<ModelResult>& models,
                  const std::function<double(const ModelResult&)>& score) {
  int best = -1;
  double best_score = kNegInf;
  for (int i = 0; i < static_cast<int>(models.size()); ++i) {
    if (models[i].failed) continue;
    const double s = score(models[i]);
    if (!std::isfinite(s)) continue;
    if (best == -1 || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

}  // namespace

SelectionReport select(const Dataset& data, const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const int p = data.p();
  if (config.kmax < 1 || config.kmax > 7) throw DomainError("select: kmax must be in [1,7]");

  SelectionReport report;
  report.config = config;
  report.n = data.n();
  report.p = p;
  report.standardize_center = data.center;
  report.standardize_scale = data.scale;
  report.constant_columns = data.constant_columns;
  for (int col : data.constant_columns) {
    report.warnings.push_back("column " + std::to_string(col) + " is constant; scale left at 1");
  }

  const double g = config.g > 0.0 ? config.g
                                  : elicit_g(p, config.alpha, config.kappa_threshold);
  auto make_settings = [&](CovStructure cov) {
    PriorSettings s;
    s.g = g;
    s.q = config.q > 0.0 ? config.q : default_q(p, cov);
    s.nu = p + 4.0;
    s.S = Eigen::MatrixXd::Identity(p, p) / (p + 4.0);
    s.kappa_threshold = config.kappa_threshold;
    s.tail_prob = config.alpha;
    return s;
  };
  report.settings_equal = make_settings(CovStructure::Equal);
  report.settings_unequal = make_settings(CovStructure::Unequal);
  report.g_local = elicit_g_local(p, g);
  for (const PriorSettings* s : {&report.settings_equal, &report.settings_unequal}) {
    if (s->q < 2.0 || s->q > 4.0) {
      report.warnings.push_back("q=" + std::to_string(s->q) +
                                " lies outside the robust range [2,4]; inference on the "
                                "weights may be sensitive to this choice");
      break;
    }
  }

  const NormConstTable c_table = NormConstTable::build(config.kmax, p, config.seed);

  std::vector<ModelTask> tasks;
  for (int k = 1; k <= config.kmax; ++k) {
    const bool want_equal = config.cov != CovChoice::Unequal || k == 1;
    const bool want_unequal = config.cov != CovChoice::Equal && k > 1;
    if (want_equal) {
      tasks.push_back(ModelTask{ModelSpec{k, CovStructure::Equal, p},
                                report.settings_equal, c_table.at(k).value,
                                k == config.kmax});
    }
    if (want_unequal) {
      tasks.push_back(ModelTask{ModelSpec{k, CovStructure::Unequal, p},
                                report.settings_unequal, c_table.at(k).value,
                                k == config.kmax});
    }
  }

  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int n_threads = config.max_threads > 0 ? config.max_threads : std::max(1, hw);
  report.models.resize(tasks.size());
  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  const int pool = std::min<int>(n_threads, static_cast<int>(tasks.size()));
  for (int w = 0; w < pool; ++w) {
    workers.emplace_back([&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        report.models[i] = run_model(tasks[i], data, config, 16 * (i + 1));
      }
    });
  }
  for (std::thread& w : workers) w.join();

  // posterior model probabilities over the non-failed models
  Eigen::VectorXd lp_logs(report.models.size());
  Eigen::VectorXd nlp_logs(report.models.size());
  int ok_count = 0;
  for (size_t i = 0; i < report.models.size(); ++i) {
    const ModelResult& m = report.models[i];
    lp_logs[i] = m.failed ? kNegInf : m.log_marginal_lp;
    nlp_logs[i] = m.failed ? kNegInf : m.log_marginal_nlp;
    if (!m.failed) ++ok_count;
    if (m.failed) {
      report.warnings.push_back("model k=" + std::to_string(m.spec.k) + " " +
                                (m.spec.cov == CovStructure::Equal ? "equal" : "unequal") +
                                " failed and was excluded: " + m.failure);
    }
  }
  if (ok_count == 0) throw DegenerateModelSpace("select: every model failed");

  const Eigen::VectorXd lp_probs = posterior_model_probs(lp_logs);
  const Eigen::VectorXd nlp_probs = posterior_model_probs(nlp_logs);
  for (size_t i = 0; i < report.models.size(); ++i) {
    report.models[i].post_prob_lp = lp_probs[i];
    report.models[i].post_prob_nlp = nlp_probs[i];
  }

  report.chosen_nlp = argmax_strict(report.models,
                                    [](const ModelResult& m) { return m.post_prob_nlp; });
  report.chosen_lp = argmax_strict(report.models,
                                   [](const ModelResult& m) { return m.post_prob_lp; });
  report.chosen_bic = argmax_strict(report.models, [](const ModelResult& m) { return m.bic; });
  report.chosen_aic = argmax_strict(report.models, [](const ModelResult& m) { return m.aic; });

  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace mixsel
