#include "multirfm/selection.hpp"

#include "multirfm/vem.hpp"

#include <Eigen/SVD>

#include <cstddef>
#include <stdexcept>

namespace multirfm {

namespace {

std::vector<double> singular_values(const Matrix& m) {
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  return {sv.data(), sv.data() + sv.size()};
}

}  // namespace

int svr(const std::vector<double>& xi, int k_max) {
  if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
  if (static_cast<int>(xi.size()) < k_max + 1)
    throw std::invalid_argument("spectrum shorter than k_max + 1");
  for (std::size_t i = 0; i < xi.size(); ++i) {
    if (!(xi[i] >= 0.0)) throw std::invalid_argument("spectrum must be nonnegative");
    if (i > 0 && xi[i] > xi[i - 1])
      throw std::invalid_argument("spectrum must be nonincreasing");
  }
  if (xi[0] <= 0.0) throw std::runtime_error("degenerate spectrum");

  const double floor = 1e-10 * xi[0];
  int best_k = 1;
  double best_ratio = -1.0;
  for (int k = 1; k <= k_max; ++k) {
    const double denom = std::max(xi[static_cast<std::size_t>(k)], floor);
    const double ratio = xi[static_cast<std::size_t>(k - 1)] / denom;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best_k = k;
    }
  }
  return best_k;
}

SelectionResult select_factor_counts(const MultiStudyDataset& data, int q_max,
                                     const std::vector<int>& q_s_max, const FitConfig& config) {
  data.validate();
  if (q_max < 2) throw std::invalid_argument("q_max must be at least 2");
  for (int b : q_s_max)
    if (b < 2) throw std::invalid_argument("q_s_max must be at least 2");
  FactorCounts bounds{q_max, q_s_max};
  bounds.validate(data.num_variables());
  if (bounds.num_studies() != data.num_studies())
    throw std::invalid_argument("factor counts do not match the number of studies");

  SelectionResult result;
  result.q_max = q_max;
  result.q_s_max = q_s_max;

  const FitResult stage1 = fit(data, bounds, config);
  result.shared_singular_values = singular_values(stage1.params.A);
  result.q_hat = svr(result.shared_singular_values, q_max - 1);

  const FitResult stage2 = fit(data, FactorCounts{result.q_hat, q_s_max}, config);
  for (int s = 0; s < data.num_studies(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    result.specific_singular_values.push_back(singular_values(stage2.params.B[su]));
    result.q_s_hat.push_back(svr(result.specific_singular_values[su], q_s_max[su] - 1));
  }
  return result;
}

SelectionResult select_factor_counts(const MultiStudyDataset& data, int q_max, int q_s_max,
                                     const FitConfig& config) {
  return select_factor_counts(
      data, q_max, std::vector<int>(static_cast<std::size_t>(data.num_studies()), q_s_max),
      config);
}

}  // namespace multirfm
