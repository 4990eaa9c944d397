#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <json.hpp>

#include "mixsel/csv.hpp"
#include "mixsel/distributions.hpp"
#include "mixsel/errors.hpp"
#include "mixsel/model.hpp"
#include "mixsel/momprior.hpp"
#include "mixsel/report_json.hpp"
#include "mixsel/selection.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

int cmd_fit(const std::string& data_path, bool header, mixsel::RunConfig config,
            const std::string& out_path) {
  using namespace mixsel;
  CsvData csv;
  try {
    csv = read_csv(data_path, header);
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (csv.values.rows() < 2) {
    std::cerr << "error: need at least 2 rows, found " << csv.values.rows() << "\n";
    return kExitUsage;
  }
  try {
    const Dataset data = standardize(csv.values);
    for (int col : data.constant_columns) {
      std::cerr << "warning: column " << (col + 1) << " is constant\n";
    }
    const SelectionReport report = select(data, config);
    write_report(out_path, report);
    if (report.chosen_nlp >= 0) {
      const ModelSpec& s = report.models[report.chosen_nlp].spec;
      std::cout << "chosen (nlp): k=" << s.k << " cov="
                << (s.cov == CovStructure::Equal ? "equal" : "unequal")
                << " prob=" << report.models[report.chosen_nlp].post_prob_nlp << "\n";
    }
    std::cout << "report written to " << out_path << "\n";
    return kExitOk;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

int cmd_simulate(const std::string& case_id, int n, std::uint64_t seed,
                 const std::string& out_path) {
  using namespace mixsel;
  try {
    RandomStream stream(seed, 0);
    nlohmann::ordered_json sidecar;
    sidecar["seed"] = seed;
    sidecar["n"] = n;
    Eigen::MatrixXd y;
    if (case_id == "student-t") {
      y = simulate_student_misspec(n, stream);
      sidecar["case"] = "student-t";
      sidecar["dof"] = 4.0;
      sidecar["mu"] = {{-1.0, 1.0}, {1.0, -1.0}, {6.0, 6.0}};
      sidecar["scale"] = {{2.0, -1.0}, {-1.0, 2.0}};
      sidecar["eta"] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    } else {
      int id = 0;
      try {
        id = std::stoi(case_id);
      } catch (...) {
        std::cerr << "error: invalid case '" << case_id << "'\n";
        return kExitUsage;
      }
      const SimulatedCase sim = simulate_case(id, n, stream);
      y = sim.data.y;
      sidecar["case"] = id;
      sidecar["k"] = sim.truth.k();
      nlohmann::ordered_json mus = nlohmann::ordered_json::array();
      for (const Eigen::VectorXd& mu : sim.truth.mu) {
        nlohmann::ordered_json m = nlohmann::ordered_json::array();
        for (int d = 0; d < mu.size(); ++d) m.push_back(mu[d]);
        mus.push_back(m);
      }
      sidecar["mu"] = mus;
      nlohmann::ordered_json etas = nlohmann::ordered_json::array();
      for (int j = 0; j < sim.truth.k(); ++j) etas.push_back(sim.truth.eta[j]);
      sidecar["eta"] = etas;
      nlohmann::ordered_json sig = nlohmann::ordered_json::array();
      for (int r = 0; r < sim.truth.sigma[0].rows(); ++r) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (int c = 0; c < sim.truth.sigma[0].cols(); ++c)
          row.push_back(sim.truth.sigma[0](r, c));
        sig.push_back(row);
      }
      sidecar["sigma"] = sig;
    }
    write_csv(out_path, y);
    std::ofstream side(out_path + ".truth.json");
    side << sidecar.dump(2) << '\n';
    std::cout << "wrote " << y.rows() << "x" << y.cols() << " to " << out_path << "\n";
    return kExitOk;
  } catch (const mixsel::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

int cmd_elicit(int p, double alpha, int kmax) {
  using namespace mixsel;
  try {
    const double g = elicit_g(p, alpha, 4.0);
    const double gl = elicit_g_local(p, g);
    std::cout << "p = " << p << ", alpha = " << alpha << "\n";
    std::cout << "g (non-local)           = " << g << "\n";
    std::cout << "g_local (matched 95pct) = " << gl << "\n";
    std::cout << "q (equal covariances)   = " << default_q(p, CovStructure::Equal) << "\n";
    std::cout << "q (unequal covariances) = " << default_q(p, CovStructure::Unequal) << "\n";
    std::cout << "nu                      = " << (p + 4) << "\n";
    std::cout << "S diagonal              = " << 1.0 / (p + 4) << "\n";
    const NormConstTable table = NormConstTable::build(kmax, p);
    for (int k = 1; k <= kmax; ++k) {
      const auto& e = table.at(k);
      const char* tag = e.method == NormConstTable::Method::ClosedForm
                            ? "closed-form"
                            : (e.method == NormConstTable::Method::Recursion ? "recursion"
                                                                             : "monte-carlo");
      std::cout << "C_" << k << " = " << e.value << "  [" << tag;
      if (e.std_err > 0.0) std::cout << ", se " << e.std_err;
      std::cout << "]\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

int cmd_contours(const std::string& report_path, const std::string& data_path, bool header,
                 int grid, bool pca2, const std::string& out_path) {
  using namespace mixsel;
  try {
    const LoadedReport report = load_report(report_path);
    const CsvData csv = read_csv(data_path, header);
    const int p = static_cast<int>(csv.values.cols());
    if (p != 2 && !pca2) {
      std::cerr << "error: contours need bivariate data (p=" << p
                << "); use --pca2 to project onto the first two principal components\n";
      return kExitUsage;
    }

    // standardize with the transform recorded in the report
    Eigen::MatrixXd y = csv.values;
    for (int c = 0; c < p; ++c)
      y.col(c) = (y.col(c).array() - report.center[c]) / report.scale[c];

    Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(p, 2);
    if (p != 2) {
      const Eigen::MatrixXd centered = y.rowwise() - y.colwise().mean();
      const Eigen::MatrixXd cov = centered.transpose() * centered / (y.rows() - 1.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
      basis.col(0) = es.eigenvectors().col(p - 1);  // leading components
      basis.col(1) = es.eigenvectors().col(p - 2);
    }
    const Eigen::MatrixXd proj = y * basis;  // n x 2

    const Eigen::Vector2d lo = proj.colwise().minCoeff();
    const Eigen::Vector2d hi = proj.colwise().maxCoeff();
    const Eigen::Vector2d pad = 0.1 * (hi - lo);
    const Eigen::Vector2d a = lo - pad, b = hi + pad;

    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "error: cannot open " << out_path << "\n";
      return kExitUsage;
    }
    out.precision(10);
    out << "x,y,density,method\n";
    for (const auto& [method, est] : report.estimates) {
      // project the mixture onto the 2-d basis (a Normal marginal stays Normal)
      std::vector<Eigen::Vector2d> mu2;
      std::vector<Eigen::Matrix2d> s2;
      for (int j = 0; j < est.params.k(); ++j) {
        mu2.push_back(basis.transpose() * est.params.mu[j]);
        s2.push_back(basis.transpose() * est.params.sigma_of(j) * basis);
      }
      for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
          const double x = a[0] + (b[0] - a[0]) * gx / (grid - 1.0);
          const double yy = a[1] + (b[1] - a[1]) * gy / (grid - 1.0);
          Eigen::Vector2d pt(x, yy);
          double dens = 0.0;
          for (int j = 0; j < est.params.k(); ++j) {
            dens += est.params.eta[j] * std::exp(mvn_logpdf(pt, mu2[j], s2[j]));
          }
          out << x << ',' << yy << ',' << dens << ',' << method << '\n';
        }
      }
    }
    std::cout << "contour grid written to " << out_path << "\n";
    return kExitOk;
  } catch (const mixsel::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian selection of the number of Normal mixture components"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "fit models k=1..kmax and write a JSON report");
  std::string data_path, out_path = "report.json";
  bool header = false;
  mixsel::RunConfig config;
  std::string cov_choice = "both", g_opt = "auto", q_opt = "auto";
  fit->add_option("--data", data_path, "CSV of observations (rows)")->required();
  fit->add_flag("--header", header, "first CSV row is a header");
  fit->add_option("--kmax", config.kmax, "largest number of components")
      ->check(CLI::Range(1, 7));
  fit->add_option("--cov", cov_choice, "covariance structure: equal|unequal|both")
      ->check(CLI::IsMember({"equal", "unequal", "both"}));
  fit->add_option("--g", g_opt, "prior dispersion, or 'auto'");
  fit->add_option("--q", q_opt, "Dirichlet concentration, or 'auto'");
  fit->add_option("--alpha", config.alpha, "elicitation tail probability");
  fit->add_option("--iters", config.iters, "MCMC iterations");
  fit->add_option("--burnin", config.burnin, "burn-in iterations");
  fit->add_option("--restarts", config.restarts, "EM restarts for the MLE");
  fit->add_option("--seed", config.seed, "random seed");
  fit->add_option("--threads", config.max_threads, "worker threads (0 = all)");
  fit->add_option("--out", out_path, "output JSON path");

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw a synthetic dataset and its truth sidecar");
  std::string case_id = "1", sim_out = "sim.csv";
  int sim_n = 500;
  std::uint64_t sim_seed = 1;
  sim->add_option("--case", case_id, "case 1..8 or 'student-t'")->required();
  sim->add_option("--n", sim_n, "sample size")->required();
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--out", sim_out, "output CSV path");

  // elicit
  auto* eli = app.add_subcommand("elicit", "print default prior settings and C_k");
  int eli_p = 1, eli_kmax = 6;
  double eli_alpha = 0.05;
  eli->add_option("--p", eli_p, "dimension")->required()->check(CLI::PositiveNumber);
  eli->add_option("--alpha", eli_alpha, "tail probability");
  eli->add_option("--kmax", eli_kmax, "largest k for the C_k table")->check(CLI::Range(1, 7));

  // contours
  auto* con = app.add_subcommand("contours", "export density grids for the chosen models");
  std::string con_report, con_data, con_out = "contours.csv";
  bool con_header = false, pca2 = false;
  int grid = 80;
  con->add_option("--report", con_report, "fit report JSON")->required();
  con->add_option("--data", con_data, "CSV used for the fit")->required();
  con->add_flag("--header", con_header, "first CSV row is a header");
  con->add_option("--grid", grid, "grid resolution per axis");
  con->add_flag("--pca2", pca2, "project p>2 data on the first two principal components");
  con->add_option("--out", con_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  if (fit->parsed()) {
    if (config.iters <= config.burnin) {
      std::cerr << "error: --iters must exceed --burnin\n";
      return kExitUsage;
    }
    config.cov = cov_choice == "both"
                     ? mixsel::CovChoice::Both
                     : (cov_choice == "equal" ? mixsel::CovChoice::Equal
                                              : mixsel::CovChoice::Unequal);
    try {
      config.g = g_opt == "auto" ? 0.0 : std::stod(g_opt);
      config.q = q_opt == "auto" ? 0.0 : std::stod(q_opt);
    } catch (...) {
      std::cerr << "error: --g/--q must be numeric or 'auto'\n";
      return kExitUsage;
    }
    return cmd_fit(data_path, header, config, out_path);
  }
  if (sim->parsed()) return cmd_simulate(case_id, sim_n, sim_seed, sim_out);
  if (eli->parsed()) return cmd_elicit(eli_p, eli_alpha, eli_kmax);
  if (con->parsed()) return cmd_contours(con_report, con_data, con_header, grid, pca2, con_out);
  return kExitUsage;
}
