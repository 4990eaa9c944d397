#include "mixsel/model.hpp"

#include <cmath>

#include "mixsel/distributions.hpp"
#include "mixsel/errors.hpp"
#include "mixsel/special.hpp"

namespace mixsel {

Dataset standardize(const Eigen::MatrixXd& raw) {
  const int n = static_cast<int>(raw.rows());
  const int p = static_cast<int>(raw.cols());
  if (n < 2) throw DomainError("standardize: need at least two rows");
  Dataset out;
  out.center = raw.colwise().mean();
  out.scale = Eigen::VectorXd::Ones(p);
  out.y = raw.rowwise() - out.center.transpose();
  for (int d = 0; d < p; ++d) {
    const double var = out.y.col(d).squaredNorm() / (n - 1);
    if (var > 0.0) {
      out.scale[d] = std::sqrt(var);
      out.y.col(d) /= out.scale[d];
    } else {
      out.constant_columns.push_back(d);
    }
  }
  out.standardized = true;
  return out;
}

Dataset dataset_from_matrix(const Eigen::MatrixXd& y) {
  Dataset out;
  out.y = y;
  out.center = Eigen::VectorXd::Zero(y.cols());
  out.scale = Eigen::VectorXd::Ones(y.cols());
  return out;
}

MixtureParams apply_permutation(const MixtureParams& params, const std::vector<int>& perm) {
  MixtureParams out;
  const int k = params.k();
  out.eta.resize(k);
  out.mu.resize(k);
  for (int j = 0; j < k; ++j) {
    out.eta[j] = params.eta[perm[j]];
    out.mu[j] = params.mu[perm[j]];
  }
  if (params.sigma.size() == 1) {
    out.sigma = params.sigma;
  } else {
    out.sigma.resize(k);
    for (int j = 0; j < k; ++j) out.sigma[j] = params.sigma[perm[j]];
  }
  return out;
}

Eigen::VectorXi Allocation::counts(int k) const {
  Eigen::VectorXi out = Eigen::VectorXi::Zero(k);
  for (int zi : z) ++out[zi];
  return out;
}

Eigen::MatrixXd log_kernel_matrix(const MixtureParams& params, const Dataset& data,
                                  const ModelSpec& spec) {
  const int n = data.n();
  const int k = spec.k;
  if (params.k() != k) throw ShapeError("log_kernel_matrix: component count mismatch");
  if (!params.mu.empty() && params.mu[0].size() != data.p())
    throw ShapeError("log_kernel_matrix: dimension mismatch");
  Eigen::MatrixXd out(n, k);
  for (int j = 0; j < k; ++j) {
    const Eigen::LLT<Eigen::MatrixXd> llt = safe_llt(params.sigma_of(j));
    const double log_eta = std::log(params.eta[j]);
    for (int i = 0; i < n; ++i) {
      out(i, j) = log_eta + mvn_logpdf_chol(data.y.row(i).transpose(), params.mu[j], llt);
    }
  }
  return out;
}

double log_likelihood(const MixtureParams& params, const Dataset& data, const ModelSpec& spec) {
  const Eigen::MatrixXd lk = log_kernel_matrix(params, data, spec);
  double total = 0.0;
  for (int i = 0; i < lk.rows(); ++i) total += log_sum_exp(Eigen::VectorXd(lk.row(i)));
  return total;
}

int param_count(const ModelSpec& spec_in) {
  const ModelSpec spec = canonical(spec_in);
  const int p = spec.p;
  const int cov_terms = p * (p + 1) / 2;
  const int n_cov = spec.cov == CovStructure::Equal ? 1 : spec.k;
  return spec.k * p + n_cov * cov_terms + (spec.k - 1);
}

namespace {

MixtureParams make_truth(const std::vector<Eigen::VectorXd>& mu, const Eigen::VectorXd& eta,
                         const Eigen::MatrixXd& sigma) {
  MixtureParams out;
  out.eta = eta;
  out.mu = mu;
  out.sigma = {sigma};
  return out;
}

Eigen::MatrixXd draw_mixture(const MixtureParams& truth, int n, int p, RandomStream& stream) {
  const Eigen::LLT<Eigen::MatrixXd> llt = safe_llt(truth.sigma[0]);
  Eigen::MatrixXd y(n, p);
  for (int i = 0; i < n; ++i) {
    const double u = stream.uniform();
    double acc = 0.0;
    int j = 0;
    for (; j < truth.k() - 1; ++j) {
      acc += truth.eta[j];
      if (u < acc) break;
    }
    y.row(i) = draw_mvn_chol(stream, truth.mu[j], llt).transpose();
  }
  return y;
}

Eigen::VectorXd vec1(double a) {
  Eigen::VectorXd v(1);
  v << a;
  return v;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

SimulatedCase simulate_case(int case_id, int n, RandomStream& stream) {
  const Eigen::MatrixXd unit1 = Eigen::MatrixXd::Identity(1, 1);
  Eigen::MatrixXd biv(2, 2);
  biv << 1.0, -0.5, -0.5, 1.0;

  MixtureParams truth;
  int p = 1;
  switch (case_id) {
    case 1:
      truth = make_truth({vec1(0.0)}, Eigen::VectorXd::Ones(1), unit1);
      break;
    case 2:
      truth = make_truth({vec1(-1.0), vec1(1.0)}, Eigen::VectorXd::Constant(2, 0.5), unit1);
      break;
    case 3:
      truth = make_truth({vec1(-2.0), vec1(2.0)}, Eigen::VectorXd::Constant(2, 0.5), unit1);
      break;
    case 4: {
      Eigen::VectorXd eta(3);
      eta << 0.45, 0.45, 0.1;
      truth = make_truth({vec1(-1.0), vec1(1.0), vec1(4.0)}, eta, unit1);
      break;
    }
    case 5:
      p = 2;
      truth = make_truth({vec2(0.0, 0.0)}, Eigen::VectorXd::Ones(1), biv);
      break;
    case 6:
      p = 2;
      truth = make_truth({vec2(-0.4, -0.6), vec2(0.4, 0.6)}, Eigen::VectorXd::Constant(2, 0.5), biv);
      break;
    case 7:
      p = 2;
      truth = make_truth({vec2(-0.65, -0.85), vec2(0.65, 0.85)},
                         Eigen::VectorXd::Constant(2, 0.5), biv);
      break;
    case 8: {
      p = 2;
      Eigen::VectorXd eta(3);
      eta << 0.35, 0.35, 0.3;
      truth = make_truth({vec2(-0.65, -0.85), vec2(0.65, 0.85), vec2(3.0, 3.0)}, eta, biv);
      break;
    }
    default:
      throw DomainError("simulate_case: case_id must be in 1..8");
  }

  SimulatedCase out;
  out.truth = truth;
  out.truth_spec = ModelSpec{truth.k(), CovStructure::Equal, p};
  out.data = dataset_from_matrix(draw_mixture(truth, n, p, stream));
  return out;
}

Eigen::MatrixXd simulate_student_misspec(int n, RandomStream& stream) {
  const double dof = 4.0;
  Eigen::MatrixXd scale(2, 2);
  scale << 2.0, -1.0, -1.0, 2.0;
  const Eigen::LLT<Eigen::MatrixXd> llt = safe_llt(scale);
  const std::vector<Eigen::VectorXd> mu = {vec2(-1.0, 1.0), vec2(1.0, -1.0), vec2(6.0, 6.0)};

  Eigen::MatrixXd y(n, 2);
  for (int i = 0; i < n; ++i) {
    const double u = stream.uniform();
    const int j = u < 1.0 / 3.0 ? 0 : (u < 2.0 / 3.0 ? 1 : 2);
    // scale mixture: t = mu + L z / sqrt(w / dof)
    const Eigen::VectorXd z = stream.normal_vector(2);
    const double w = stream.chi_square(dof);
    y.row(i) = (mu[j] + (llt.matrixL() * z) / std::sqrt(w / dof)).transpose();
  }
  return y;
}

}  // namespace mixsel
