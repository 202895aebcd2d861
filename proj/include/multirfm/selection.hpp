#pragma once

#include "multirfm/types.hpp"

namespace multirfm {

/// Outcome of the step-wise singular-value-ratio (SSVR) selection, including
/// the spectra both stages ranked so the decision can be audited.
struct SelectionResult {
  int q_hat = 0;
  std::vector<int> q_s_hat;
  std::vector<double> shared_singular_values;               // spectrum of A-hat at q_max
  std::vector<std::vector<double>> specific_singular_values;  // per study, B_s-hat at q_s_max
  int q_max = 0;
  std::vector<int> q_s_max;
};

/// argmax_{1 <= k <= k_max} xi_k / xi_{k+1} over a nonincreasing nonnegative
/// spectrum (1-based k). Denominators are floored at 1e-10 * xi_1; ties go to
/// the smaller k.
int svr(const std::vector<double>& singular_values, int k_max);

/// Two-stage SSVR: fit at (q_max, q_s_max) and pick q_hat from the shared
/// spectrum, refit at (q_hat, q_s_max) and pick each q_s_hat from the study
/// spectra.
SelectionResult select_factor_counts(const MultiStudyDataset& data, int q_max,
                                     const std::vector<int>& q_s_max, const FitConfig& config);

/// Same bound for every study.
SelectionResult select_factor_counts(const MultiStudyDataset& data, int q_max, int q_s_max,
                                     const FitConfig& config);

}  // namespace multirfm
