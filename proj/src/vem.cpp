#include "multirfm/vem.hpp"

#include "multirfm/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace multirfm {

namespace {

Vector checked_inverse_scale(const Vector& lambda) {
  if (!(lambda.array() > 0.0).all() || !lambda.allFinite())
    throw std::invalid_argument("invalid scale");
  return lambda.cwiseInverse();
}

// Rank-k truncated SVD split x ~ scores * loadings^T with scores^T scores /
// denom = I: loadings = V_k diag(d_k) / sqrt(denom), scores = sqrt(denom) U_k.
struct SvdSplit {
  Matrix loadings;
  Matrix scores;
};

SvdSplit svd_split(const Matrix& x, Index k, double denom) {
  SvdSplit out;
  out.loadings.setZero(x.cols(), k);
  out.scores.setZero(x.rows(), k);
  if (k == 0) return out;
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double root = std::sqrt(denom);
  out.loadings = svd.matrixV().leftCols(k) * (svd.singularValues().head(k) / root).asDiagonal();
  out.scores = root * svd.matrixU().leftCols(k);
  // A (near-)zero singular value leaves its singular vectors arbitrary up to
  // roundoff. Zero those columns outright: an exactly-zero loading/score pair
  // is a fixed point of the EM updates, so rank-deficient inputs keep their
  // spare factor columns at zero instead of letting roundoff junk regrow.
  const double tiny = 1e-12 * svd.singularValues()(0);
  for (Index j = 0; j < k; ++j) {
    if (svd.singularValues()(j) <= tiny) {
      out.scores.col(j).setZero();
      out.loadings.col(j).setZero();
    }
  }
  return out;
}

std::vector<Matrix> identity_blocks(Index n, Index k) {
  return std::vector<Matrix>(static_cast<std::size_t>(n), Matrix::Identity(k, k));
}

double grid_search_nu(const detail::ElboParts& parts, const std::vector<double>& grid, int p) {
  double best = grid.front();
  double best_value = detail::elbo_at_nu(parts, best, p);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double value = detail::elbo_at_nu(parts, grid[k], p);
    if (value > best_value) {
      best = grid[k];
      best_value = value;
    }
  }
  return best;
}

}  // namespace

std::pair<ModelParameters, VariationalState> initialize(const MultiStudyDataset& data,
                                                        const FactorCounts& counts,
                                                        const FitConfig& config) {
  data.validate();
  config.validate();
  const Index p = data.num_variables();
  counts.validate(p);
  const int S = data.num_studies();
  if (counts.num_studies() != S)
    throw std::invalid_argument("factor counts do not match the number of studies");
  for (int s = 0; s < S; ++s) {
    if (data.rows(s) <= counts.q + counts.q_s[static_cast<std::size_t>(s)])
      throw std::invalid_argument("insufficient observations");
  }

  const Index q = counts.q;
  const Index total = data.total_rows();

  ModelParameters params;
  params.mu.resize(static_cast<std::size_t>(S));
  params.B.resize(static_cast<std::size_t>(S));
  params.lambda.resize(static_cast<std::size_t>(S));
  params.nu = config.nu_fixed ? *config.nu_fixed
                              : config.nu_grid[(config.nu_grid.size() - 1) / 2];

  Matrix stacked(total, p);
  Index offset = 0;
  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    const Matrix& x = data.x(s);
    params.mu[su] = x.colwise().mean().transpose();
    stacked.middleRows(offset, x.rows()) = x.rowwise() - params.mu[su].transpose();
    offset += x.rows();
  }

  // Shared-direction initialization. With a single study this is the plain
  // top-q SVD of the centered data. With several studies, a genuinely shared
  // direction lies in every study's leading right-singular subspace, so the
  // shared basis is taken from the near-intersection of those subspaces:
  // stacking the per-study orthonormal bases W = [V_1 ... V_S], a left
  // singular vector of W carried by all studies has squared singular value
  // close to S, while study-specific and noise directions stay near 1. This
  // keeps specific directions out of A even when the shared block is
  // overparameterized (the factor-count selection stage fits at upper
  // bounds), and it removes the shared signal from each study's residual to
  // subspace accuracy before B_s is initialized, so no strong shared remnant
  // survives in the specific blocks. Leftover shared columns, if any, are
  // filled from the data with the span of every per-study leading subspace
  // projected out, so spare shared capacity starts on noise-level directions
  // and never on a strong specific component.
  constexpr double kIntersectionGate = 0.5;  // sigma^2 >= S - this
  const double root = std::sqrt(static_cast<double>(total));

  Matrix shared_scores = Matrix::Zero(total, q);
  params.A = Matrix::Zero(p, q);

  if (q > 0 && S == 1) {
    SvdSplit shared = svd_split(stacked, q, static_cast<double>(total));
    params.A = std::move(shared.loadings);
    shared_scores = std::move(shared.scores);
  } else if (q > 0) {
    Index r_total = 0;
    Index row = 0;
    std::vector<Matrix> bases(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) {
      const auto su = static_cast<std::size_t>(s);
      const Index n = data.rows(s);
      Index r = std::min({q + static_cast<Index>(counts.q_s[su]), n, p});
      Eigen::BDCSVD<Matrix> study_svd(stacked.middleRows(row, n), Eigen::ComputeThinV);
      // Keep only the numerically nonzero directions: past the rank the
      // singular vectors are arbitrary and would fake agreements between
      // studies' subspaces.
      const auto& study_sv = study_svd.singularValues();
      while (r > 0 && study_sv(r - 1) <= 1e-10 * study_sv(0)) --r;
      bases[su] = study_svd.matrixV().leftCols(r);
      r_total += r;
      row += n;
    }
    Matrix joined(p, r_total);
    Index col = 0;
    for (const Matrix& v : bases) {
      joined.middleCols(col, v.cols()) = v;
      col += v.cols();
    }
    Index n_shared = 0;  // columns of A filled so far
    Matrix union_basis(p, 0);
    if (r_total > 0) {
      Eigen::BDCSVD<Matrix> inter(joined, Eigen::ComputeThinU);
      for (Index k = 0; k < inter.singularValues().size() && n_shared < q; ++k) {
        const double s2 = inter.singularValues()(k) * inter.singularValues()(k);
        if (s2 < static_cast<double>(S) - kIntersectionGate) break;
        const Vector scores = stacked * inter.matrixU().col(k);
        const double norm = scores.norm();
        if (norm <= 0.0) continue;
        params.A.col(n_shared) = inter.matrixU().col(k) * (norm / root);
        shared_scores.col(n_shared) = scores * (root / norm);
        ++n_shared;
      }
      const auto& sv = inter.singularValues();
      Index rank = 0;
      while (rank < sv.size() && sv(rank) > 1e-12 * sv(0)) ++rank;
      union_basis = inter.matrixU().leftCols(rank);
    }
    if (q > n_shared) {
      // Spare shared columns: remove the union of the per-study leading
      // subspaces from the data and keep the strongest leftover directions.
      // A numerically zero leftover keeps the spare columns at exactly zero
      // (an EM fixed point) so roundoff junk cannot regrow during the fit.
      Matrix resid = stacked;
      if (union_basis.cols() > 0)
        resid.noalias() -= (stacked * union_basis) * union_basis.transpose();
      if (resid.norm() > 1e-10 * stacked.norm()) {
        SvdSplit spare = svd_split(resid, q - n_shared, static_cast<double>(total));
        params.A.rightCols(q - n_shared) = spare.loadings;
        shared_scores.rightCols(q - n_shared) = spare.scores;
      }
    }
  }

  // Orthonormal basis of the shared column space, used to sweep the shared
  // signal out of each study's residual before initializing B_s.
  Eigen::ColPivHouseholderQR<Matrix> shared_qr(params.A);
  const Index shared_rank = shared_qr.rank();
  Matrix shared_basis;
  if (shared_rank > 0)
    shared_basis = shared_qr.householderQ() * Matrix::Identity(p, shared_rank);

  VariationalState state;
  state.studies.resize(static_cast<std::size_t>(S));
  offset = 0;
  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    const Index n = data.rows(s);
    const Index qs = counts.q_s[su];
    StudyVariational& v = state.studies[su];

    v.m_f = shared_scores.middleRows(offset, n);
    const double study_scale = stacked.middleRows(offset, n).norm();
    Matrix resid = stacked.middleRows(offset, n);
    if (shared_rank > 0) resid.noalias() -= (resid * shared_basis) * shared_basis.transpose();
    offset += n;

    SvdSplit specific;
    if (resid.norm() > 1e-10 * study_scale) {
      specific = svd_split(resid, qs, static_cast<double>(n));
    } else {
      specific.loadings.setZero(p, qs);
      specific.scores.setZero(n, qs);
    }
    params.B[su] = std::move(specific.loadings);
    v.m_h = std::move(specific.scores);
    if (qs > 0) resid.noalias() -= v.m_h * params.B[su].transpose();

    params.lambda[su] =
        resid.array().square().colwise().mean().transpose().max(config.lambda_floor).matrix();

    v.S_f = identity_blocks(n, q);
    v.S_h = identity_blocks(n, qs);
    v.phi = Vector::Ones(n);
  }

  update_phi(params, state, data);
  return {std::move(params), std::move(state)};
}

VariationalState e_step(const ModelParameters& params, const VariationalState& state,
                        const MultiStudyDataset& data) {
  const int S = data.num_studies();
  const auto p = static_cast<double>(data.num_variables());
  const double nu = params.nu;
  VariationalState next = state;

  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    const Matrix& x = data.x(s);
    const Matrix& A = params.A;
    const Matrix& B = params.B[su];
    const Index n = x.rows();
    const Index q = A.cols();
    const Index qs = B.cols();
    const Vector inv_lambda = checked_inverse_scale(params.lambda[su]);
    StudyVariational& v = next.studies[su];

    // c_si = (nu + p) / (nu phi_si), with phi frozen from the previous sweep.
    const Vector c = ((nu + p) / nu) * state.studies[su].phi.cwiseInverse();
    const Matrix xc = x.rowwise() - params.mu[su].transpose();

    if (q > 0) {
      const Matrix la = inv_lambda.asDiagonal() * A;  // Lambda^{-1} A
      const Matrix gram = A.transpose() * la;
      Matrix resid_f = xc;
      if (qs > 0) resid_f.noalias() -= state.studies[su].m_h * B.transpose();
      const Matrix rhs = resid_f * la;  // row i = (A^T Lambda^{-1} resid_i)^T
      const Matrix eye = Matrix::Identity(q, q);
      for (Index i = 0; i < n; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        Eigen::LLT<Matrix> llt(c[i] * gram + eye);
        if (llt.info() != Eigen::Success)
          throw std::runtime_error("degenerate variational covariance");
        Matrix cov = llt.solve(eye);
        v.S_f[iu] = 0.5 * (cov + cov.transpose());
        v.m_f.row(i) = llt.solve((c[i] * rhs.row(i)).transpose()).transpose();
      }
    }

    if (qs > 0) {
      const Matrix lb = inv_lambda.asDiagonal() * B;
      const Matrix gram = B.transpose() * lb;
      Matrix resid_h = xc;
      if (q > 0) resid_h.noalias() -= v.m_f * A.transpose();  // just-updated m_f
      const Matrix rhs = resid_h * lb;
      const Matrix eye = Matrix::Identity(qs, qs);
      for (Index i = 0; i < n; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        Eigen::LLT<Matrix> llt(c[i] * gram + eye);
        if (llt.info() != Eigen::Success)
          throw std::runtime_error("degenerate variational covariance");
        Matrix cov = llt.solve(eye);
        v.S_h[iu] = 0.5 * (cov + cov.transpose());
        v.m_h.row(i) = llt.solve((c[i] * rhs.row(i)).transpose()).transpose();
      }
    }
  }
  return next;
}

Vector m_step_mu(const VariationalState& state, const MultiStudyDataset& data,
                 const ModelParameters& params, int s) {
  const auto su = static_cast<std::size_t>(s);
  const StudyVariational& v = state.studies[su];
  const Vector w = v.phi.cwiseInverse();
  Matrix resid = data.x(s);
  if (params.A.cols() > 0) resid.noalias() -= v.m_f * params.A.transpose();
  if (params.B[su].cols() > 0) resid.noalias() -= v.m_h * params.B[su].transpose();
  return (resid.transpose() * w) / w.sum();
}

Matrix m_step_A(const VariationalState& state, const MultiStudyDataset& data,
                const ModelParameters& params) {
  const Index p = data.num_variables();
  const Index q = params.A.cols();
  if (q == 0) return Matrix(p, 0);
  const int S = data.num_studies();

  // Per study: gram_s = sum_i w_i (m_f m_f^T + S_f), cross_s = M_f^T W X-tilde;
  // the row-j system then mixes studies through 1/lambda_sj only.
  std::vector<Matrix> gram(static_cast<std::size_t>(S));
  std::vector<Matrix> cross(static_cast<std::size_t>(S));
  std::vector<Vector> inv_lambda(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    const StudyVariational& v = state.studies[su];
    const Vector w = v.phi.cwiseInverse();
    Matrix xt = data.x(s).rowwise() - params.mu[su].transpose();
    if (params.B[su].cols() > 0) xt.noalias() -= v.m_h * params.B[su].transpose();
    const Matrix wm = v.m_f.array().colwise() * w.array();
    cross[su].noalias() = wm.transpose() * xt;
    gram[su].noalias() = wm.transpose() * v.m_f;
    for (Index i = 0; i < data.rows(s); ++i)
      gram[su].noalias() += w[i] * v.S_f[static_cast<std::size_t>(i)];
    inv_lambda[su] = checked_inverse_scale(params.lambda[su]);
  }

  Matrix a(p, q);
  Matrix lhs(q, q);
  Vector rhs(q);
  for (Index j = 0; j < p; ++j) {
    lhs.setZero();
    rhs.setZero();
    for (int s = 0; s < S; ++s) {
      const auto su = static_cast<std::size_t>(s);
      lhs.noalias() += inv_lambda[su][j] * gram[su];
      rhs.noalias() += inv_lambda[su][j] * cross[su].col(j);
    }
    Eigen::LLT<Matrix> llt(lhs);
    if (llt.info() != Eigen::Success) throw std::runtime_error("unidentified shared loadings");
    a.row(j) = llt.solve(rhs).transpose();
  }
  return a;
}

Matrix m_step_B(const VariationalState& state, const MultiStudyDataset& data,
                const ModelParameters& params, int s) {
  const auto su = static_cast<std::size_t>(s);
  const Index p = data.num_variables();
  const Index qs = params.B[su].cols();
  if (qs == 0) return Matrix(p, 0);
  const StudyVariational& v = state.studies[su];
  const Vector w = v.phi.cwiseInverse();

  Matrix xb = data.x(s).rowwise() - params.mu[su].transpose();
  if (params.A.cols() > 0) xb.noalias() -= v.m_f * params.A.transpose();
  const Matrix wm = v.m_h.array().colwise() * w.array();
  Matrix gram = wm.transpose() * v.m_h;
  for (Index i = 0; i < data.rows(s); ++i)
    gram.noalias() += w[i] * v.S_h[static_cast<std::size_t>(i)];

  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw std::runtime_error("unidentified study loadings");
  return llt.solve(wm.transpose() * xb).transpose();
}

Vector m_step_lambda(const VariationalState& state, const MultiStudyDataset& data,
                     const ModelParameters& params, int s, double lambda_floor) {
  const auto su = static_cast<std::size_t>(s);
  const StudyVariational& v = state.studies[su];
  const auto p = static_cast<double>(data.num_variables());
  const Index n = data.rows(s);
  const Vector c = ((params.nu + p) / params.nu) * v.phi.cwiseInverse();

  Matrix y = data.x(s).rowwise() - params.mu[su].transpose();
  if (params.A.cols() > 0) y.noalias() -= v.m_f * params.A.transpose();
  if (params.B[su].cols() > 0) y.noalias() -= v.m_h * params.B[su].transpose();

  Vector lambda = y.array().square().matrix().transpose() * c;
  if (params.A.cols() > 0) {
    Matrix sf = Matrix::Zero(params.A.cols(), params.A.cols());
    for (Index i = 0; i < n; ++i) sf.noalias() += c[i] * v.S_f[static_cast<std::size_t>(i)];
    lambda += (params.A * sf).cwiseProduct(params.A).rowwise().sum();
  }
  if (params.B[su].cols() > 0) {
    Matrix sh = Matrix::Zero(params.B[su].cols(), params.B[su].cols());
    for (Index i = 0; i < n; ++i) sh.noalias() += c[i] * v.S_h[static_cast<std::size_t>(i)];
    lambda += (params.B[su] * sh).cwiseProduct(params.B[su]).rowwise().sum();
  }
  return (lambda / static_cast<double>(n)).cwiseMax(lambda_floor);
}

double m_step_nu(const ModelParameters& params, const VariationalState& state,
                 const MultiStudyDataset& data, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("empty nu grid");
  double prev = 2.0;
  for (double value : grid) {
    if (!(value > prev))
      throw std::invalid_argument("nu grid must be strictly increasing with minimum above 2");
    prev = value;
  }
  const detail::ElboParts parts = detail::elbo_parts(params, state, data);
  return grid_search_nu(parts, grid, static_cast<int>(data.num_variables()));
}

FitResult fit(const MultiStudyDataset& data, const FactorCounts& counts, const FitConfig& config) {
  auto [params, state] = initialize(data, counts, config);
  const int S = data.num_studies();
  const int p = static_cast<int>(data.num_variables());

  FitResult result;
  double prev = elbo(params, state, data);
  result.elbo_trace.push_back(prev);

  for (int t = 1; t <= config.max_iter; ++t) {
    state = e_step(params, state, data);
    for (int s = 0; s < S; ++s)
      params.mu[static_cast<std::size_t>(s)] = m_step_mu(state, data, params, s);
    params.A = m_step_A(state, data, params);
    for (int s = 0; s < S; ++s)
      params.B[static_cast<std::size_t>(s)] = m_step_B(state, data, params, s);
    for (int s = 0; s < S; ++s)
      params.lambda[static_cast<std::size_t>(s)] =
          m_step_lambda(state, data, params, s, config.lambda_floor);

    // One data pass serves the nu search, the phi refresh, and the ELBO:
    // the expected quadratic u is nu-free and phi(nu) = 1 + u/nu.
    const detail::ElboParts parts = detail::elbo_parts(params, state, data);
    if (!config.nu_fixed) params.nu = grid_search_nu(parts, config.nu_grid, p);
    for (int s = 0; s < S; ++s) {
      const auto su = static_cast<std::size_t>(s);
      state.studies[su].phi = (parts.u[su].array() / params.nu + 1.0).matrix();
    }
    const double current = detail::elbo_at_nu(parts, params.nu, p);

    result.elbo_trace.push_back(current);
    result.iterations = t;
    if (current < prev) ++result.monotonicity_warnings;
    const double change = std::abs(current - prev) / std::abs(prev);
    prev = current;
    if (change < config.eps) {
      result.converged = true;
      break;
    }
  }

  result.params = std::move(params);
  result.state = std::move(state);
  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    result.factor_scores_shared.push_back(result.state.studies[su].m_f);
    result.factor_scores_specific.push_back(result.state.studies[su].m_h);
  }
  return result;
}

}  // namespace multirfm
