#pragma once

#include "multirfm/types.hpp"

namespace multirfm {

/// log C_p(nu) for the multivariate-t normalizing constant
/// C_p(nu) = (pi*nu)^{-p/2} Gamma((nu+p)/2) / Gamma(nu/2),
/// evaluated in log space.
double log_cp(double nu, int p);

/// Robust weight phi_si = 1 + (1/nu) * E_q[Mahalanobis residual] for one
/// observation. Always >= 1; large values flag outlying observations.
double compute_phi(const ModelParameters& params, const Eigen::Ref<const Vector>& x, int study,
                   const Eigen::Ref<const Vector>& m_f, const Eigen::Ref<const Matrix>& S_f,
                   const Eigen::Ref<const Vector>& m_h, const Eigen::Ref<const Matrix>& S_h);

/// Recomputes the cached weights state.phi for every observation from the
/// current (params, state). This is the one place the cache is refreshed;
/// the E/M sweeps consume it frozen.
void update_phi(const ModelParameters& params, VariationalState& state,
                const MultiStudyDataset& data);

/// Variational lower bound l(theta, gamma), up to the parameter-independent
/// additive constant. The weights are evaluated from (params, state), not
/// from the cache, so this is a pure function of its arguments.
double elbo(const ModelParameters& params, const VariationalState& state,
            const MultiStudyDataset& data);

namespace detail {

/// nu * (phi - 1) for every observation of study s: the expected Mahalanobis
/// quadratic, which does not depend on nu. phi(nu) = 1 + u / nu.
Vector expected_quadratic(const ModelParameters& params, const VariationalState& state,
                          const MultiStudyDataset& data, int s);

/// nu-independent pieces of the ELBO, so the nu grid search can rescan
/// without touching the data again.
struct ElboParts {
  std::vector<Vector> u;       // per study, expected quadratic per observation
  double state_terms = 0.0;    // -(1/2) sum(|m|^2 + tr S) + (1/2) sum log|S|
  double lambda_terms = 0.0;   // -(n_s/2) sum_j log lambda_sj, summed over studies
  std::vector<Index> n_s;
};

ElboParts elbo_parts(const ModelParameters& params, const VariationalState& state,
                     const MultiStudyDataset& data);

double elbo_at_nu(const ElboParts& parts, double nu, int p);

}  // namespace detail
}  // namespace multirfm
