#include "multirfm/core.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <stdexcept>

namespace multirfm {

double log_cp(double nu, int p) {
  if (!(nu > 0.0)) throw std::invalid_argument("invalid degrees of freedom");
  if (p < 0) throw std::invalid_argument("negative dimension");
  if (p == 0) return 0.0;
  return -0.5 * p * std::log(M_PI * nu) + std::lgamma(0.5 * (nu + p)) - std::lgamma(0.5 * nu);
}

namespace {

// tr(M * S) for symmetric M, S.
double sym_trace_product(const Matrix& m, const Eigen::Ref<const Matrix>& s) {
  return m.cwiseProduct(s).sum();
}

// 0.5 * log|S| via Cholesky; failure means S is not positive definite.
double half_log_det_pd(const Eigen::Ref<const Matrix>& s) {
  if (s.size() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("degenerate variational covariance");
  return llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

double compute_phi(const ModelParameters& params, const Eigen::Ref<const Vector>& x, int study,
                   const Eigen::Ref<const Vector>& m_f, const Eigen::Ref<const Matrix>& S_f,
                   const Eigen::Ref<const Vector>& m_h, const Eigen::Ref<const Matrix>& S_h) {
  const Vector& lambda = params.lambda[static_cast<std::size_t>(study)];
  if (!(lambda.array() > 0.0).all() || !lambda.allFinite())
    throw std::invalid_argument("invalid scale");
  if (!x.allFinite() || !m_f.allFinite() || !S_f.allFinite() || !m_h.allFinite() ||
      !S_h.allFinite() || !std::isfinite(params.nu))
    throw std::invalid_argument("nonfinite input");

  const Matrix& A = params.A;
  const Matrix& B = params.B[static_cast<std::size_t>(study)];
  const Vector inv_lambda = lambda.cwiseInverse();

  Vector resid = x - params.mu[static_cast<std::size_t>(study)];
  if (A.cols() > 0) resid.noalias() -= A * m_f;
  if (B.cols() > 0) resid.noalias() -= B * m_h;

  double u = resid.cwiseProduct(inv_lambda).dot(resid);
  if (A.cols() > 0) {
    Matrix atla = A.transpose() * inv_lambda.asDiagonal() * A;
    u += sym_trace_product(atla, S_f);
  }
  if (B.cols() > 0) {
    Matrix btlb = B.transpose() * inv_lambda.asDiagonal() * B;
    u += sym_trace_product(btlb, S_h);
  }
  return 1.0 + u / params.nu;
}

namespace detail {

Vector expected_quadratic(const ModelParameters& params, const VariationalState& state,
                          const MultiStudyDataset& data, int s) {
  const auto su = static_cast<std::size_t>(s);
  const Matrix& x = data.studies[su];
  const StudyVariational& v = state.studies[su];
  const Matrix& A = params.A;
  const Matrix& B = params.B[su];
  const Vector& lambda = params.lambda[su];
  if (!(lambda.array() > 0.0).all() || !lambda.allFinite())
    throw std::invalid_argument("invalid scale");
  const Vector inv_lambda = lambda.cwiseInverse();
  const Index n = x.rows();

  Matrix resid = x;
  resid.rowwise() -= params.mu[su].transpose();
  if (A.cols() > 0) resid.noalias() -= v.m_f * A.transpose();
  if (B.cols() > 0) resid.noalias() -= v.m_h * B.transpose();

  Vector u = (resid.array().square().matrix() * inv_lambda);
  if (A.cols() > 0) {
    Matrix atla = A.transpose() * inv_lambda.asDiagonal() * A;
    for (Index i = 0; i < n; ++i) u[i] += sym_trace_product(atla, v.S_f[static_cast<std::size_t>(i)]);
  }
  if (B.cols() > 0) {
    Matrix btlb = B.transpose() * inv_lambda.asDiagonal() * B;
    for (Index i = 0; i < n; ++i) u[i] += sym_trace_product(btlb, v.S_h[static_cast<std::size_t>(i)]);
  }
  return u;
}

ElboParts elbo_parts(const ModelParameters& params, const VariationalState& state,
                     const MultiStudyDataset& data) {
  ElboParts parts;
  const int S = data.num_studies();
  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    const StudyVariational& v = state.studies[su];
    const Index n = data.rows(s);
    parts.u.push_back(expected_quadratic(params, state, data, s));
    parts.n_s.push_back(n);
    parts.lambda_terms -= 0.5 * static_cast<double>(n) * params.lambda[su].array().log().sum();
    parts.state_terms -= 0.5 * (v.m_f.squaredNorm() + v.m_h.squaredNorm());
    for (Index i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      parts.state_terms -= 0.5 * (v.S_f[iu].trace() + v.S_h[iu].trace());
      parts.state_terms += half_log_det_pd(v.S_f[iu]) + half_log_det_pd(v.S_h[iu]);
    }
  }
  return parts;
}

double elbo_at_nu(const ElboParts& parts, double nu, int p) {
  double value = parts.state_terms + parts.lambda_terms;
  for (std::size_t s = 0; s < parts.u.size(); ++s) {
    value -= 0.5 * (nu + p) * (parts.u[s].array() / nu).log1p().sum();
    value += static_cast<double>(parts.n_s[s]) * log_cp(nu, p);
  }
  return value;
}

}  // namespace detail

void update_phi(const ModelParameters& params, VariationalState& state,
                const MultiStudyDataset& data) {
  for (int s = 0; s < data.num_studies(); ++s) {
    Vector u = detail::expected_quadratic(params, state, data, s);
    state.study(s).phi = (u.array() / params.nu + 1.0).matrix();
  }
}

double elbo(const ModelParameters& params, const VariationalState& state,
            const MultiStudyDataset& data) {
  detail::ElboParts parts = detail::elbo_parts(params, state, data);
  return detail::elbo_at_nu(parts, params.nu, static_cast<int>(data.num_variables()));
}

}  // namespace multirfm
