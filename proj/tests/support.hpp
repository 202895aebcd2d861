#pragma once

// Shared helpers for the test suites: random small instances and independent
// reference implementations (naive loops, dense solves, textbook formulas)
// that the library outputs are compared against. Nothing here calls back
// into the code paths under test.

#include "multirfm/core.hpp"
#include "multirfm/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace testsupport {

using multirfm::Index;
using multirfm::Matrix;
using multirfm::Vector;

// ---- random instances ------------------------------------------------------

inline Matrix random_matrix(std::mt19937& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * normal(rng);
  return m;
}

// Symmetric positive definite with eigenvalues drawn from [eig_min, eig_max].
inline Matrix random_spd(std::mt19937& rng, Index k, double eig_min, double eig_max) {
  if (k == 0) return Matrix(0, 0);
  const Matrix g = random_matrix(rng, k, k);
  const Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ() * Matrix::Identity(k, k);
  std::uniform_real_distribution<double> eig(eig_min, eig_max);
  Vector d(k);
  for (Index i = 0; i < k; ++i) d(i) = eig(rng);
  return q * d.asDiagonal() * q.transpose();
}

struct Instance {
  multirfm::MultiStudyDataset data;
  multirfm::FactorCounts counts;
  multirfm::ModelParameters params;
  multirfm::VariationalState state;
};

// Dimensionally consistent random data, parameters, and variational state.
// Weights phi are drawn in [1, 3]; scales in [0.5, 2]; covariances have
// eigenvalues in (0, 1) so they are valid e_step-style states.
inline Instance random_instance(std::mt19937& rng, const std::vector<Index>& n, Index p, int q,
                                const std::vector<int>& q_s, double nu = 5.0) {
  Instance inst;
  const int S = static_cast<int>(n.size());
  inst.counts.q = q;
  inst.counts.q_s = q_s;
  inst.params.nu = nu;
  inst.params.A = random_matrix(rng, p, q);
  std::uniform_real_distribution<double> lam(0.5, 2.0);
  std::uniform_real_distribution<double> weight(1.0, 3.0);
  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    const Index ns = n[su];
    const Index qs = q_s[su];
    inst.data.studies.push_back(random_matrix(rng, ns, p, 1.5));
    inst.params.mu.push_back(random_matrix(rng, p, 1).col(0));
    inst.params.B.push_back(random_matrix(rng, p, qs));
    Vector lambda(p);
    for (Index j = 0; j < p; ++j) lambda(j) = lam(rng);
    inst.params.lambda.push_back(lambda);

    multirfm::StudyVariational v;
    v.m_f = random_matrix(rng, ns, q);
    v.m_h = random_matrix(rng, ns, qs);
    v.phi = Vector(ns);
    for (Index i = 0; i < ns; ++i) {
      v.S_f.push_back(random_spd(rng, q, 0.05, 0.95));
      v.S_h.push_back(random_spd(rng, qs, 0.05, 0.95));
      v.phi(i) = weight(rng);
    }
    inst.state.studies.push_back(std::move(v));
  }
  return inst;
}

// ---- scalar reference formulas ----------------------------------------------

inline double naive_log_cp(double nu, int p) {
  return -0.5 * p * std::log(M_PI * nu) + std::lgamma(0.5 * (nu + p)) - std::lgamma(0.5 * nu);
}

// phi = 1 + (1/nu) [ r^T Lambda^{-1} r + tr(A^T Lambda^{-1} A S_f)
//                    + tr(B^T Lambda^{-1} B S_h) ], all by explicit loops.
inline double naive_phi(const multirfm::ModelParameters& params, const Vector& x, int s,
                        const Vector& m_f, const Matrix& S_f, const Vector& m_h,
                        const Matrix& S_h) {
  const auto su = static_cast<std::size_t>(s);
  const Index p = params.p();
  const Index q = params.q();
  const Index qs = params.q_specific(s);
  double quad = 0.0;
  for (Index j = 0; j < p; ++j) {
    double r = x(j) - params.mu[su](j);
    for (Index k = 0; k < q; ++k) r -= params.A(j, k) * m_f(k);
    for (Index k = 0; k < qs; ++k) r -= params.B[su](j, k) * m_h(k);
    quad += r * r / params.lambda[su](j);
  }
  double trace_f = 0.0;
  for (Index a = 0; a < q; ++a)
    for (Index b = 0; b < q; ++b) {
      double gram = 0.0;
      for (Index j = 0; j < p; ++j) gram += params.A(j, a) * params.A(j, b) / params.lambda[su](j);
      trace_f += gram * S_f(b, a);
    }
  double trace_h = 0.0;
  for (Index a = 0; a < qs; ++a)
    for (Index b = 0; b < qs; ++b) {
      double gram = 0.0;
      for (Index j = 0; j < p; ++j)
        gram += params.B[su](j, a) * params.B[su](j, b) / params.lambda[su](j);
      trace_h += gram * S_h(b, a);
    }
  return 1.0 + (quad + trace_f + trace_h) / params.nu;
}

inline double logdet_spd(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  double sum = 0.0;
  for (Index i = 0; i < m.rows(); ++i) {
    if (!(eig.eigenvalues()(i) > 0.0)) throw std::runtime_error("oracle: matrix not PD");
    sum += std::log(eig.eigenvalues()(i));
  }
  return sum;
}

// Term-by-term double-loop evaluation of the variational lower bound, with
// phi recomputed from (params, state):
//   sum_si -(nu+p)/2 log phi_si
//   + sum_s [ n_s log C_p(nu) - (n_s/2) sum_j log lambda_sj ]
//   - (1/2) sum_si [ |m_f|^2 + tr S_f + |m_h|^2 + tr S_h ]
//   + (1/2) sum_si [ log|S_f| + log|S_h| ].
inline double naive_elbo(const multirfm::ModelParameters& params,
                         const multirfm::VariationalState& state,
                         const multirfm::MultiStudyDataset& data) {
  const int p = static_cast<int>(params.p());
  double total = 0.0;
  for (int s = 0; s < data.num_studies(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    const auto& v = state.studies[su];
    const Index ns = data.rows(s);
    total += static_cast<double>(ns) * naive_log_cp(params.nu, p);
    for (Index j = 0; j < params.p(); ++j)
      total -= 0.5 * static_cast<double>(ns) * std::log(params.lambda[su](j));
    for (Index i = 0; i < ns; ++i) {
      const double phi = naive_phi(params, data.x(s).row(i).transpose(), s,
                                   v.m_f.row(i).transpose(), v.S_f[static_cast<std::size_t>(i)],
                                   v.m_h.row(i).transpose(), v.S_h[static_cast<std::size_t>(i)]);
      total -= 0.5 * (params.nu + p) * std::log(phi);
      total -= 0.5 * (v.m_f.row(i).squaredNorm() + v.S_f[static_cast<std::size_t>(i)].trace() +
                      v.m_h.row(i).squaredNorm() + v.S_h[static_cast<std::size_t>(i)].trace());
      total += 0.5 * (logdet_spd(v.S_f[static_cast<std::size_t>(i)]) +
                      logdet_spd(v.S_h[static_cast<std::size_t>(i)]));
    }
  }
  return total;
}

// The frozen-phi surrogate the fixed-point sweep optimizes: log phi is
// linearized at the frozen weights, so phi enters only through
// -(nu+p)/(2 nu phi_frozen) * u(theta, gamma) with u the expected Mahalanobis
// quadratic (u = nu * (phi - 1)). Every E-step and M-step update is an exact
// stationary point of this function in its own block.
inline double frozen_surrogate(const multirfm::ModelParameters& params,
                               const multirfm::VariationalState& state,
                               const multirfm::MultiStudyDataset& data) {
  const int p = static_cast<int>(params.p());
  double total = 0.0;
  for (int s = 0; s < data.num_studies(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    const auto& v = state.studies[su];
    const Index ns = data.rows(s);
    total += static_cast<double>(ns) * naive_log_cp(params.nu, p);
    for (Index j = 0; j < params.p(); ++j)
      total -= 0.5 * static_cast<double>(ns) * std::log(params.lambda[su](j));
    for (Index i = 0; i < ns; ++i) {
      const double phi = naive_phi(params, data.x(s).row(i).transpose(), s,
                                   v.m_f.row(i).transpose(), v.S_f[static_cast<std::size_t>(i)],
                                   v.m_h.row(i).transpose(), v.S_h[static_cast<std::size_t>(i)]);
      const double u = params.nu * (phi - 1.0);
      total -= 0.5 * (params.nu + p) / (params.nu * v.phi(i)) * u;
      total -= 0.5 * (v.m_f.row(i).squaredNorm() + v.S_f[static_cast<std::size_t>(i)].trace() +
                      v.m_h.row(i).squaredNorm() + v.S_h[static_cast<std::size_t>(i)].trace());
      total += 0.5 * (logdet_spd(v.S_f[static_cast<std::size_t>(i)]) +
                      logdet_spd(v.S_h[static_cast<std::size_t>(i)]));
    }
  }
  return total;
}

// ---- dense solve oracles -----------------------------------------------------

// The shared-loading update written as one (pq) x (pq) system over
// vec(A) (column-major), exactly as the Kronecker form prints it:
//   [ sum_si (m m^T + S_f) (x) Lambda_s^{-1} / phi_si ] vec(A)
//     = vec( sum_si Lambda_s^{-1} x~_si m^T / phi_si ).
inline Matrix kron_solve_A(const multirfm::VariationalState& state,
                           const multirfm::MultiStudyDataset& data,
                           const multirfm::ModelParameters& params) {
  const Index p = params.p();
  const Index q = params.q();
  Matrix system = Matrix::Zero(p * q, p * q);
  Vector rhs = Vector::Zero(p * q);
  for (int s = 0; s < data.num_studies(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    const auto& v = state.studies[su];
    for (Index i = 0; i < data.rows(s); ++i) {
      const Matrix moment = v.m_f.row(i).transpose() * v.m_f.row(i) +
                            v.S_f[static_cast<std::size_t>(i)];
      const Vector resid = data.x(s).row(i).transpose() - params.mu[su] -
                           params.B[su] * v.m_h.row(i).transpose();
      const double w = 1.0 / v.phi(i);
      for (Index k = 0; k < q; ++k)
        for (Index l = 0; l < q; ++l)
          for (Index j = 0; j < p; ++j)
            system(k * p + j, l * p + j) += w * moment(k, l) / params.lambda[su](j);
      for (Index k = 0; k < q; ++k)
        for (Index j = 0; j < p; ++j)
          rhs(k * p + j) += w * resid(j) * v.m_f(i, k) / params.lambda[su](j);
    }
  }
  const Vector solution = system.ldlt().solve(rhs);
  Matrix a(p, q);
  for (Index k = 0; k < q; ++k) a.col(k) = solution.segment(k * p, p);
  return a;
}

// The study-loading update as printed: B_s = C G^{-1} with
// C = sum_i x(breve)_si m_h^T / phi_si, G = sum_i (m m^T + S_h) / phi_si.
inline Matrix normal_equations_B(const multirfm::VariationalState& state,
                                 const multirfm::MultiStudyDataset& data,
                                 const multirfm::ModelParameters& params, int s) {
  const auto su = static_cast<std::size_t>(s);
  const auto& v = state.studies[su];
  const Index p = params.p();
  const Index qs = params.q_specific(s);
  Matrix cross = Matrix::Zero(p, qs);
  Matrix gram = Matrix::Zero(qs, qs);
  for (Index i = 0; i < data.rows(s); ++i) {
    const Vector resid = data.x(s).row(i).transpose() - params.mu[su] -
                         params.A * v.m_f.row(i).transpose();
    const double w = 1.0 / v.phi(i);
    cross += w * resid * v.m_h.row(i);
    gram += w * (v.m_h.row(i).transpose() * v.m_h.row(i) + v.S_h[static_cast<std::size_t>(i)]);
  }
  return gram.transpose().fullPivLu().solve(cross.transpose()).transpose();
}

// ---- generic numeric tools ---------------------------------------------------

// Golden-section maximization of a unimodal slice.
template <typename F>
double golden_max(F&& value, double lo, double hi, int iterations = 120) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = value(c), fd = value(d);
  for (int it = 0; it < iterations; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = value(d);
    }
  }
  return 0.5 * (a + b);
}

// Coordinate-ascent maximization over the given scalar slots; `value` reads
// the current slot contents. Derivative-free, so it shares no machinery with
// the closed-form updates it audits.
template <typename F>
void coordinate_ascent(F&& value, const std::vector<double*>& slots, int sweeps = 60,
                       double radius = 10.0) {
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (double* slot : slots) {
      const double center = *slot;
      *slot = golden_max(
          [&](double x) {
            *slot = x;
            const double v = value();
            *slot = center;
            return v;
          },
          center - radius, center + radius);
    }
  }
}

// Central-difference stationarity measure: the directional derivative of
// `value` in coordinate `slot`, made dimensionless against the objective
// scale. Near machine-zero at a stationary point, O(1) away from one.
template <typename F>
double fd_stationarity(F&& value, double* slot, double objective_scale) {
  const double x0 = *slot;
  const double h = 1e-5 * std::max(1.0, std::abs(x0));
  *slot = x0 + h;
  const double up = value();
  *slot = x0 - h;
  const double down = value();
  *slot = x0;
  const double gradient = (up - down) / (2.0 * h);
  return std::abs(gradient) * std::max(1.0, std::abs(x0)) / std::max(1.0, std::abs(objective_scale));
}

}  // namespace testsupport
