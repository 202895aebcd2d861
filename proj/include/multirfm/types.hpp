#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace multirfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Observation matrices X_s from S studies sharing a common variable set.
/// Rows are observations, columns are variables.
struct MultiStudyDataset {
  std::vector<Matrix> studies;
  std::vector<std::string> variable_names;  // empty or length p
  std::vector<std::string> study_ids;       // empty or length S

  int num_studies() const { return static_cast<int>(studies.size()); }
  Index num_variables() const { return studies.empty() ? 0 : studies.front().cols(); }
  Index rows(int s) const { return studies[static_cast<std::size_t>(s)].rows(); }
  Index total_rows() const;

  const Matrix& x(int s) const { return studies[static_cast<std::size_t>(s)]; }

  // Throws std::invalid_argument on inconsistent shapes or nonfinite entries.
  void validate() const;
};

/// Number of study-shared factors q and study-specific factors q_s.
struct FactorCounts {
  int q = 0;
  std::vector<int> q_s;

  int num_studies() const { return static_cast<int>(q_s.size()); }
  int total_specific() const;

  // Checks the dimensionality constraint p - 1 > q + sum(q_s) and that
  // at least one factor acts per study (q + q_s >= 1).
  void validate(Index p) const;
};

/// Model parameters theta = (mu_s, A, B_s, Lambda_s, nu).
struct ModelParameters {
  std::vector<Vector> mu;      // S vectors of length p
  Matrix A;                    // p x q, shared loadings
  std::vector<Matrix> B;       // p x q_s, study-specific loadings
  std::vector<Vector> lambda;  // S positive vectors of length p (diag of Lambda_s)
  double nu = 3.0;             // degrees of freedom, > 2 for a proper model

  int num_studies() const { return static_cast<int>(mu.size()); }
  Index p() const { return A.rows(); }
  Index q() const { return A.cols(); }
  Index q_specific(int s) const { return B[static_cast<std::size_t>(s)].cols(); }
  FactorCounts counts() const;

  void validate(const MultiStudyDataset& data) const;
};

/// Per-study variational posterior summaries. Row i of m_f / m_h is the
/// posterior mean for observation i; S_f[i] / S_h[i] are its covariances.
/// phi caches the robust weights frozen for the current sweep.
struct StudyVariational {
  Matrix m_f;                // n_s x q
  std::vector<Matrix> S_f;   // n_s matrices, q x q
  Matrix m_h;                // n_s x q_s
  std::vector<Matrix> S_h;   // n_s matrices, q_s x q_s
  Vector phi;                // n_s, each >= 1
};

struct VariationalState {
  std::vector<StudyVariational> studies;

  int num_studies() const { return static_cast<int>(studies.size()); }
  StudyVariational& study(int s) { return studies[static_cast<std::size_t>(s)]; }
  const StudyVariational& study(int s) const { return studies[static_cast<std::size_t>(s)]; }
};

std::vector<double> default_nu_grid();

struct FitConfig {
  int max_iter = 500;
  double eps = 1e-6;                      // relative ELBO tolerance
  std::vector<double> nu_grid = default_nu_grid();
  std::optional<double> nu_fixed;         // disables the nu grid search
  std::uint64_t seed = 0;                 // reserved for stochastic initialization
  double lambda_floor = 1e-8;

  void validate() const;
};

struct FitResult {
  ModelParameters params;
  VariationalState state;
  std::vector<double> elbo_trace;  // initial bound, then one entry per iteration
  bool converged = false;
  int iterations = 0;
  // Iterations where the ELBO decreased; the fixed-point sweep is a
  // heuristic ascent, so decreases are monitored rather than asserted.
  int monotonicity_warnings = 0;
  std::vector<Matrix> factor_scores_shared;    // F_hat_s = stacked m_f
  std::vector<Matrix> factor_scores_specific;  // H_hat_s = stacked m_h
};

}  // namespace multirfm
