#include "multirfm/align.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

namespace multirfm {

namespace {

// Sign of the first entry of v exceeding tol * ||v||; +1 for a zero column.
double leading_sign(const Eigen::Ref<const Vector>& v, double tol) {
  const double threshold = tol * v.norm();
  for (Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > threshold) return v[i] > 0.0 ? 1.0 : -1.0;
  return 1.0;
}

// Orthogonal T with loading_new = loading * T^T = U Sigma sign-fixed; the
// caller rotates moments by m' = T m, S' = T S T^T.
Matrix aligned_block(const Matrix& loading, Matrix* t_out) {
  const Index k = loading.cols();
  Eigen::BDCSVD<Matrix> svd(loading, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  if (sigma.size() == 0 || !(sigma[sigma.size() - 1] > 1e-12 * sigma[0]) || sigma[0] <= 0.0)
    throw std::runtime_error("degenerate loadings");

  Vector signs(k);
  for (Index j = 0; j < k; ++j) signs[j] = leading_sign(svd.matrixU().col(j), 1e-10);
  Matrix aligned = svd.matrixU() * (sigma.cwiseProduct(signs)).asDiagonal();
  *t_out = signs.asDiagonal() * svd.matrixV().transpose();
  return aligned;
}

void rotate_moments(Matrix& m, std::vector<Matrix>& s, const Matrix& t) {
  m = m * t.transpose();
  for (Matrix& cov : s) cov = t * cov * t.transpose();
}

}  // namespace

void fix_column_signs(Matrix& m, double tol) {
  for (Index j = 0; j < m.cols(); ++j)
    if (leading_sign(m.col(j), tol) < 0.0) m.col(j) = -m.col(j);
}

FitResult align(const FitResult& fit) {
  FitResult out = fit;
  const int S = out.params.num_studies();

  if (out.params.A.cols() > 0) {
    Matrix t;
    out.params.A = aligned_block(fit.params.A, &t);
    for (int s = 0; s < S; ++s) {
      StudyVariational& v = out.state.studies[static_cast<std::size_t>(s)];
      rotate_moments(v.m_f, v.S_f, t);
    }
  }
  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    if (out.params.B[su].cols() == 0) continue;
    Matrix t;
    out.params.B[su] = aligned_block(fit.params.B[su], &t);
    rotate_moments(out.state.studies[su].m_h, out.state.studies[su].S_h, t);
  }

  out.factor_scores_shared.clear();
  out.factor_scores_specific.clear();
  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    out.factor_scores_shared.push_back(out.state.studies[su].m_f);
    out.factor_scores_specific.push_back(out.state.studies[su].m_h);
  }
  return out;
}

namespace {

// Gram diagnostics for one loading block; results merge into the (A1) fields.
void inspect_gram(const Matrix& block, double tol, double& max_offdiag, bool& decreasing,
                  bool& signs) {
  const Index k = block.cols();
  if (k == 0) return;
  const Matrix gram = block.transpose() * block;
  const double scale = gram.diagonal().maxCoeff();
  if (!(scale > 0.0)) {
    decreasing = false;
    return;
  }
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      if (i != j) max_offdiag = std::max(max_offdiag, std::abs(gram(i, j)) / scale);
  for (Index i = 0; i + 1 < k; ++i)
    if (!(gram(i, i) > gram(i + 1, i + 1))) decreasing = false;
  if (!(gram(k - 1, k - 1) > 0.0)) decreasing = false;
  for (Index j = 0; j < k; ++j)
    if (leading_sign(block.col(j), 1e-10) < 0.0) signs = false;
}

}  // namespace

ConditionReport check_identifiability(const ModelParameters& params, const FactorCounts& counts,
                                      double tol) {
  ConditionReport report;
  const int S = params.num_studies();

  // (A1): joint (A, B_1) block, then each B_s for s >= 2.
  report.a1_decreasing = true;
  report.a1_signs = true;
  const Index q = params.A.cols();
  const Index q1 = params.B.empty() ? 0 : params.B[0].cols();
  Matrix joint(params.p(), q + q1);
  if (q > 0) joint.leftCols(q) = params.A;
  if (q1 > 0) joint.rightCols(q1) = params.B[0];
  inspect_gram(joint, tol, report.a1_max_offdiagonal, report.a1_decreasing, report.a1_signs);
  for (int s = 1; s < S; ++s)
    inspect_gram(params.B[static_cast<std::size_t>(s)], tol, report.a1_max_offdiagonal,
                 report.a1_decreasing, report.a1_signs);
  report.a1 = report.a1_decreasing && report.a1_signs && report.a1_max_offdiagonal <= tol;

  report.a2_slack = params.p() - 1 - counts.q - counts.total_specific();
  report.a2 = report.a2_slack > 0;

  Index q_min = std::numeric_limits<Index>::max();
  for (int s = 0; s < S; ++s) q_min = std::min(q_min, params.B[static_cast<std::size_t>(s)].cols());
  if (S < 2 || q_min == 0) {
    report.a3 = true;
    report.a3_min_gap = 0.0;
  } else {
    report.a3_min_gap = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < q_min; ++k) {
      double max_pair_gap = 0.0;
      for (int s1 = 0; s1 < S; ++s1)
        for (int s2 = s1 + 1; s2 < S; ++s2)
          max_pair_gap = std::max(
              max_pair_gap, (params.B[static_cast<std::size_t>(s1)].col(k) -
                             params.B[static_cast<std::size_t>(s2)].col(k))
                                .norm());
      report.a3_min_gap = std::min(report.a3_min_gap, max_pair_gap);
    }
    report.a3 = report.a3_min_gap > tol;
  }

  report.nu = params.nu;
  report.a4 = params.nu > 2.0;
  return report;
}

}  // namespace multirfm
