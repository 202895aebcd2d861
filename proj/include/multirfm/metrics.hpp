#pragma once

#include "multirfm/types.hpp"

#include <cstdint>
#include <utility>

namespace multirfm {

/// Normalized projection of the truth D onto span(D_hat):
/// Tr{D^T D_hat (D_hat^T D_hat)^{-1} D_hat^T D} / Tr(D^T D), in [0, 1].
/// 1 means the column space is recovered exactly.
double trace_stat(const Matrix& d_hat, const Matrix& d);

/// Arithmetic mean of per-study trace statistics (MTr_B, MTr_F, MTr_H).
double mean_trace(const std::vector<Matrix>& estimates, const std::vector<Matrix>& truths);

struct ReconstructionReport {
  std::vector<double> re;            // RE_s, mean over variables
  std::vector<Vector> per_variable;  // RE_sj = RMS residual of variable j
};

/// In-sample reconstruction error of mu + A m_f + B_s m_h against the data.
ReconstructionReport reconstruction_error(const FitResult& fit, const MultiStudyDataset& data);

/// Out-of-sample factor scores via least-squares projection of x - mu onto
/// each loading block separately (both blocks project the same centered
/// vector; no cross-adjustment).
std::pair<Vector, Vector> oos_factor_scores(const ModelParameters& train,
                                            const Eigen::Ref<const Vector>& x_test, int s);

struct PredictionReport {
  std::vector<double> pe;
  std::vector<Vector> per_variable;
};

/// Out-of-sample analogue of reconstruction_error using oos_factor_scores.
PredictionReport prediction_error(const ModelParameters& train, const MultiStudyDataset& test);

/// Per-study uniform random split into (train, test). Every study must keep
/// at least one row on each side.
std::pair<MultiStudyDataset, MultiStudyDataset> split_dataset(const MultiStudyDataset& data,
                                                              double test_fraction,
                                                              std::uint64_t seed);

}  // namespace multirfm
