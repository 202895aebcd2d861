#include "multirfm/metrics.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>

namespace multirfm {

namespace {

// Thin orthonormal basis of span(m); throws if m is column-rank deficient.
Matrix orthonormal_basis(const Matrix& m, const char* rank_error) {
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  if (qr.rank() < m.cols()) throw std::runtime_error(rank_error);
  return qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
}

// Least-squares scores of every row of xc on the columns of loading.
Matrix project_scores(const Matrix& loading, const Matrix& xc) {
  if (loading.cols() == 0) return Matrix(xc.rows(), 0);
  Eigen::ColPivHouseholderQR<Matrix> qr(loading);
  if (qr.rank() < loading.cols()) throw std::runtime_error("degenerate loadings");
  return qr.solve(xc.transpose()).transpose();
}

Vector column_rms(const Matrix& resid) {
  return (resid.array().square().colwise().mean()).sqrt().matrix().transpose();
}

}  // namespace

double trace_stat(const Matrix& d_hat, const Matrix& d) {
  if (d_hat.rows() != d.rows()) throw std::invalid_argument("row count mismatch");
  if (d.size() == 0 || d.squaredNorm() == 0.0) throw std::runtime_error("zero truth");
  if (d_hat.cols() == 0) return 0.0;
  const Matrix basis = orthonormal_basis(d_hat, "degenerate estimate");
  const double numerator = (basis.transpose() * d).squaredNorm();
  return std::clamp(numerator / d.squaredNorm(), 0.0, 1.0);
}

double mean_trace(const std::vector<Matrix>& estimates, const std::vector<Matrix>& truths) {
  if (estimates.empty() || estimates.size() != truths.size())
    throw std::invalid_argument("per-study metric length mismatch");
  double total = 0.0;
  for (std::size_t s = 0; s < estimates.size(); ++s) total += trace_stat(estimates[s], truths[s]);
  return total / static_cast<double>(estimates.size());
}

ReconstructionReport reconstruction_error(const FitResult& fit, const MultiStudyDataset& data) {
  fit.params.validate(data);
  ReconstructionReport report;
  for (int s = 0; s < data.num_studies(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    const StudyVariational& v = fit.state.studies[su];
    if (v.m_f.rows() != data.rows(s))
      throw std::invalid_argument("factor scores do not match the dataset");
    Matrix resid = data.x(s).rowwise() - fit.params.mu[su].transpose();
    if (fit.params.A.cols() > 0) resid.noalias() -= v.m_f * fit.params.A.transpose();
    if (fit.params.B[su].cols() > 0) resid.noalias() -= v.m_h * fit.params.B[su].transpose();
    report.per_variable.push_back(column_rms(resid));
    report.re.push_back(report.per_variable.back().mean());
  }
  return report;
}

std::pair<Vector, Vector> oos_factor_scores(const ModelParameters& train,
                                            const Eigen::Ref<const Vector>& x_test, int s) {
  const auto su = static_cast<std::size_t>(s);
  if (s < 0 || s >= train.num_studies()) throw std::invalid_argument("study index out of range");
  if (x_test.size() != train.p()) throw std::invalid_argument("test vector has wrong length");
  const Matrix xc = (x_test - train.mu[su]).transpose();
  const Vector f = project_scores(train.A, xc).row(0).transpose();
  const Vector h = project_scores(train.B[su], xc).row(0).transpose();
  return {f, h};
}

PredictionReport prediction_error(const ModelParameters& train, const MultiStudyDataset& test) {
  train.validate(test);
  PredictionReport report;
  for (int s = 0; s < test.num_studies(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    const Matrix xc = test.x(s).rowwise() - train.mu[su].transpose();
    Matrix resid = xc;
    if (train.A.cols() > 0) resid.noalias() -= project_scores(train.A, xc) * train.A.transpose();
    if (train.B[su].cols() > 0)
      resid.noalias() -= project_scores(train.B[su], xc) * train.B[su].transpose();
    report.per_variable.push_back(column_rms(resid));
    report.pe.push_back(report.per_variable.back().mean());
  }
  return report;
}

std::pair<MultiStudyDataset, MultiStudyDataset> split_dataset(const MultiStudyDataset& data,
                                                              double test_fraction,
                                                              std::uint64_t seed) {
  data.validate();
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
    throw std::invalid_argument("test fraction must lie in (0, 1)");
  MultiStudyDataset train = data;
  MultiStudyDataset test = data;
  for (int s = 0; s < data.num_studies(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    const Index n = data.rows(s);
    const auto n_test = static_cast<Index>(std::floor(test_fraction * static_cast<double>(n)));
    if (n_test < 1 || n - n_test < 1)
      throw std::invalid_argument("test fraction leaves an empty split");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(s + 1));
    std::shuffle(order.begin(), order.end(), rng);

    Matrix test_x(n_test, data.num_variables());
    Matrix train_x(n - n_test, data.num_variables());
    for (Index i = 0; i < n_test; ++i) test_x.row(i) = data.x(s).row(order[static_cast<std::size_t>(i)]);
    for (Index i = n_test; i < n; ++i)
      train_x.row(i - n_test) = data.x(s).row(order[static_cast<std::size_t>(i)]);
    test.studies[su] = std::move(test_x);
    train.studies[su] = std::move(train_x);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace multirfm
