#pragma once

#include "multirfm/types.hpp"

namespace multirfm {

/// Measured outcome of the identifiability conditions (A1)-(A4). a3 is
/// vacuously true (gap 0) with fewer than two studies or no shared specific
/// column index.
struct ConditionReport {
  bool a1 = false;                   // diagonal Grams, decreasing, positive lead signs
  double a1_max_offdiagonal = 0.0;   // relative to the largest Gram diagonal
  bool a1_decreasing = false;
  bool a1_signs = false;
  bool a2 = false;                   // p - 1 > q + sum(q_s)
  Index a2_slack = 0;                // p - 1 - q - sum(q_s)
  bool a3 = false;                   // specific columns distinguishable across studies
  double a3_min_gap = 0.0;           // min over k of max pairwise column-difference norm
  bool a4 = false;                   // nu > 2
  double nu = 0.0;

  bool all() const { return a1 && a2 && a3 && a4; }
};

/// Flips each column whose first entry exceeding tol * ||column|| is
/// negative, so the leading sign convention of Condition (A1) holds.
void fix_column_signs(Matrix& m, double tol = 1e-10);

/// Per-block rotation of a fit into the Condition (A1) normal form: each
/// loading block becomes U Sigma from its thin SVD (decreasing columns,
/// positive leading signs) and the matching variational moments are
/// co-rotated, leaving every reconstruction and the ELBO unchanged.
FitResult align(const FitResult& fit);

/// Programmatic check of Conditions (A1)-(A4) with measured slack. (A1) is
/// evaluated on the joint block (A, B_1) and on each B_s for s >= 2.
ConditionReport check_identifiability(const ModelParameters& params, const FactorCounts& counts,
                                      double tol = 1e-8);

}  // namespace multirfm
