#pragma once

#include "multirfm/types.hpp"

#include <utility>

namespace multirfm {

/// Deterministic SVD-based starting point: study means, shared loadings from
/// the concatenated centered data, specific loadings from per-study
/// residuals, floored residual variances, nu at the middle of the grid.
std::pair<ModelParameters, VariationalState> initialize(const MultiStudyDataset& data,
                                                        const FactorCounts& counts,
                                                        const FitConfig& config);

/// One variational E-step sweep with the weights state.phi held frozen.
/// Per observation: (S_f, m_f) first using the current m_h, then (S_h, m_h)
/// using the just-updated m_f. The cache state.phi is left untouched.
VariationalState e_step(const ModelParameters& params, const VariationalState& state,
                        const MultiStudyDataset& data);

/// Weighted mean of factor-adjusted observations for study s.
Vector m_step_mu(const VariationalState& state, const MultiStudyDataset& data,
                 const ModelParameters& params, int s);

/// Shared-loading update solved row-wise: one q x q system per variable
/// instead of the full (pq) x (pq) system.
Matrix m_step_A(const VariationalState& state, const MultiStudyDataset& data,
                const ModelParameters& params);

/// Study-specific loading update: weighted regression of residuals on the
/// m_h scores (the scale diagonal cancels within a study).
Matrix m_step_B(const VariationalState& state, const MultiStudyDataset& data,
                const ModelParameters& params, int s);

/// Weighted per-variable second moments, floored at lambda_floor.
Vector m_step_lambda(const VariationalState& state, const MultiStudyDataset& data,
                     const ModelParameters& params, int s, double lambda_floor);

/// Grid search for nu maximizing the lower bound, with the weights
/// re-evaluated as a function of each candidate. Ties go to the smaller nu.
double m_step_nu(const ModelParameters& params, const VariationalState& state,
                 const MultiStudyDataset& data, const std::vector<double>& grid);

/// Full fixed-point variational EM loop.
FitResult fit(const MultiStudyDataset& data, const FactorCounts& counts, const FitConfig& config);

}  // namespace multirfm
