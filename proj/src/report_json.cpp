#include "mixsel/report_json.hpp"

#include <cmath>
#include <fstream>
#include <utility>

#include "mixsel/errors.hpp"

namespace mixsel {

namespace {

using json = nlohmann::ordered_json;

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

std::string cov_name(CovStructure cov) {
  return cov == CovStructure::Equal ? "equal" : "unequal";
}

json spec_to_json(const ModelSpec& spec) {
  return json{{"k", spec.k}, {"cov", cov_name(spec.cov)}};
}

json params_to_json(const MixtureParams& params, const Eigen::VectorXd& center,
                    const Eigen::VectorXd& scale) {
  json mus = json::array();
  json sigmas = json::array();
  json mus_orig = json::array();
  json sigmas_orig = json::array();
  const Eigen::MatrixXd d = scale.asDiagonal();
  for (const Eigen::VectorXd& mu : params.mu) {
    mus.push_back(vec_to_json(mu));
    mus_orig.push_back(vec_to_json((scale.array() * mu.array()).matrix() + center));
  }
  for (const Eigen::MatrixXd& s : params.sigma) {
    sigmas.push_back(mat_to_json(s));
    sigmas_orig.push_back(mat_to_json(d * s * d));
  }
  return json{{"eta", vec_to_json(params.eta)},
              {"mu", mus},
              {"sigma", sigmas},
              {"original_scale", json{{"mu", mus_orig}, {"sigma", sigmas_orig}}}};
}

double safe_num(double v) {
  // JSON has no -inf; the schema uses null for vanished marginals.
  return v;
}

json maybe_num(double v) {
  if (std::isfinite(v)) return json(safe_num(v));
  return json(nullptr);
}

}  // namespace

json report_to_json(const SelectionReport& report) {
  json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["version"] = kLibraryVersion;
  doc["seed"] = report.config.seed;
  doc["n"] = report.n;
  doc["p"] = report.p;

  json settings;
  settings["g"] = report.settings_equal.g;
  settings["g_local"] = report.g_local;
  settings["q_equal"] = report.settings_equal.q;
  settings["q_unequal"] = report.settings_unequal.q;
  settings["nu"] = report.settings_equal.nu;
  settings["s_diag"] = vec_to_json(report.settings_equal.S.diagonal());
  settings["alpha"] = report.config.alpha;
  settings["kappa_threshold"] = report.config.kappa_threshold;
  settings["kmax"] = report.config.kmax;
  settings["cov"] = report.config.cov == CovChoice::Both
                        ? "both"
                        : (report.config.cov == CovChoice::Equal ? "equal" : "unequal");
  settings["iters"] = report.config.iters;
  settings["burnin"] = report.config.burnin;
  settings["restarts"] = report.config.restarts;
  settings["standardization"] = json{{"center", vec_to_json(report.standardize_center)},
                                     {"scale", vec_to_json(report.standardize_scale)},
                                     {"constant_columns", report.constant_columns}};
  doc["settings"] = settings;

  json models = json::array();
  for (const ModelResult& m : report.models) {
    json jm;
    jm["k"] = m.spec.k;
    jm["cov"] = cov_name(m.spec.cov);
    jm["p_k"] = m.p_k;
    jm["failed"] = m.failed;
    if (m.failed) {
      jm["failure"] = m.failure;
    } else {
      jm["log_marginal_lp"] = maybe_num(m.log_marginal_lp);
      jm["log_marginal_nlp"] = maybe_num(m.log_marginal_nlp);
      jm["se_lp"] = m.se_lp;
      jm["se_omega"] = m.se_omega;
      jm["bic"] = m.bic;
      jm["aic"] = m.aic;
      jm["post_prob_lp"] = m.post_prob_lp;
      jm["post_prob_nlp"] = m.post_prob_nlp;
    }
    models.push_back(jm);
  }
  doc["models"] = models;

  json chosen;
  const auto put_choice = [&](const char* name, int idx) {
    chosen[name] = idx >= 0 ? spec_to_json(report.models[idx].spec) : json(nullptr);
  };
  put_choice("nlp", report.chosen_nlp);
  put_choice("lp", report.chosen_lp);
  put_choice("bic", report.chosen_bic);
  put_choice("aic", report.chosen_aic);
  doc["chosen"] = chosen;

  json maps;
  const auto put_map = [&](const char* name, int idx, const MixtureParams& params) {
    if (idx < 0) {
      maps[name] = json(nullptr);
      return;
    }
    json entry = spec_to_json(report.models[idx].spec);
    entry["estimate"] =
        params_to_json(params, report.standardize_center, report.standardize_scale);
    maps[name] = entry;
  };
  if (report.chosen_nlp >= 0) put_map("nlp", report.chosen_nlp, report.models[report.chosen_nlp].nlp_map);
  else maps["nlp"] = json(nullptr);
  if (report.chosen_lp >= 0) put_map("lp", report.chosen_lp, report.models[report.chosen_lp].lp_map);
  else maps["lp"] = json(nullptr);
  if (report.chosen_bic >= 0) put_map("bic", report.chosen_bic, report.models[report.chosen_bic].mle);
  else maps["bic"] = json(nullptr);
  if (report.chosen_aic >= 0) put_map("aic", report.chosen_aic, report.models[report.chosen_aic].mle);
  else maps["aic"] = json(nullptr);
  doc["map_estimates"] = maps;

  json nonempty = json::array();
  for (const ModelResult& m : report.models) {
    if (m.nonempty_lp.size() == 0) continue;
    nonempty.push_back(json{{"k", m.spec.k},
                            {"cov", cov_name(m.spec.cov)},
                            {"lp_probs", vec_to_json(m.nonempty_lp)},
                            {"nlp_probs", vec_to_json(m.nonempty_nlp)}});
  }
  doc["nonempty_diagnostic"] = nonempty;
  doc["warnings"] = report.warnings;
  doc["runtime_seconds"] = report.runtime_seconds;
  return doc;
}

void write_report(const std::string& path, const SelectionReport& report) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open file for writing: " + path);
  out << report_to_json(report).dump(2) << '\n';
}

std::string validate_report_json(const nlohmann::json& doc) {
  const auto need = [&](const char* key, const char* type) -> std::string {
    if (!doc.contains(key)) return std::string("missing key: ") + key;
    const auto& v = doc.at(key);
    const std::string t = type;
    const bool ok = (t == "string" && v.is_string()) || (t == "number" && v.is_number()) ||
                    (t == "integer" && v.is_number_integer()) || (t == "object" && v.is_object()) ||
                    (t == "array" && v.is_array());
    if (!ok) return std::string("key has wrong type: ") + key;
    return "";
  };
  for (const auto& [key, type] : std::initializer_list<std::pair<const char*, const char*>>{
           {"schema_version", "string"},
           {"version", "string"},
           {"seed", "integer"},
           {"n", "integer"},
           {"p", "integer"},
           {"settings", "object"},
           {"models", "array"},
           {"chosen", "object"},
           {"map_estimates", "object"},
           {"nonempty_diagnostic", "array"},
           {"warnings", "array"}}) {
    const std::string err = need(key, type);
    if (!err.empty()) return err;
  }
  for (const auto& m : doc.at("models")) {
    for (const char* key : {"k", "cov", "p_k", "failed"}) {
      if (!m.contains(key)) return std::string("model entry missing key: ") + key;
    }
    if (!m.at("failed").get<bool>()) {
      for (const char* key : {"log_marginal_lp", "log_marginal_nlp", "se_lp", "se_omega", "bic",
                              "aic", "post_prob_lp", "post_prob_nlp"}) {
        if (!m.contains(key)) return std::string("model entry missing key: ") + key;
      }
    }
  }
  for (const char* key : {"nlp", "lp", "bic", "aic"}) {
    if (!doc.at("chosen").contains(key)) return std::string("chosen missing key: ") + key;
    if (!doc.at("map_estimates").contains(key))
      return std::string("map_estimates missing key: ") + key;
  }
  return "";
}

LoadedReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open report: " + path);
  json doc = json::parse(in, nullptr, true);
  const std::string err = validate_report_json(doc);
  if (!err.empty()) throw DomainError("invalid report: " + err);

  LoadedReport out;
  const auto& std_block = doc.at("settings").at("standardization");
  const auto to_vec = [](const json& arr) {
    Eigen::VectorXd v(arr.size());
    for (size_t i = 0; i < arr.size(); ++i) v[static_cast<int>(i)] = arr[i].get<double>();
    return v;
  };
  out.center = to_vec(std_block.at("center"));
  out.scale = to_vec(std_block.at("scale"));

  for (const char* method : {"bic", "aic", "lp", "nlp"}) {
    const auto& entry = doc.at("map_estimates").at(method);
    if (entry.is_null()) continue;
    LoadedEstimate est;
    est.spec.k = entry.at("k").get<int>();
    est.spec.cov = entry.at("cov").get<std::string>() == "equal" ? CovStructure::Equal
                                                                 : CovStructure::Unequal;
    const auto& pj = entry.at("estimate");
    est.params.eta = to_vec(pj.at("eta"));
    for (const auto& mu : pj.at("mu")) est.params.mu.push_back(to_vec(mu));
    for (const auto& sj : pj.at("sigma")) {
      const size_t rows = sj.size();
      Eigen::MatrixXd m(rows, sj[0].size());
      for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < sj[r].size(); ++c)
          m(static_cast<int>(r), static_cast<int>(c)) = sj[r][c].get<double>();
      est.params.sigma.push_back(m);
    }
    est.spec.p = static_cast<int>(est.params.mu[0].size());
    out.estimates.emplace_back(method, est);
  }
  return out;
}

}  // namespace mixsel
