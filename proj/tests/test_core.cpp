#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "multirfm/core.hpp"
#include "multirfm/types.hpp"
#include "support.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

using namespace multirfm;
using testsupport::Instance;
using testsupport::random_instance;

namespace {

// Scalar-friendly parameter block: one study, explicit entries.
ModelParameters scalar_params(double mu, double a, double b, double lambda, double nu) {
  ModelParameters params;
  params.mu = {Vector::Constant(1, mu)};
  params.A = Matrix::Constant(1, 1, a);
  params.B = {Matrix::Constant(1, 1, b)};
  params.lambda = {Vector::Constant(1, lambda)};
  params.nu = nu;
  return params;
}

}  // namespace

TEST_CASE("log_cp is zero for p = 0") {
  for (double nu : {0.5, 2.0, 37.0, 1e6}) CHECK(log_cp(nu, 0) == 0.0);
}

TEST_CASE("log_cp matches closed-form values") {
  // C_2(2) = (2 pi)^{-1} Gamma(2)/Gamma(1) = 1/(2 pi).
  CHECK(log_cp(2.0, 2) == doctest::Approx(-1.8378770664093455).epsilon(1e-12));
  // C_1(1) = pi^{-1/2} Gamma(1)/Gamma(1/2) = 1/pi.
  CHECK(log_cp(1.0, 1) == doctest::Approx(-1.1447298858494002).epsilon(1e-12));
}

TEST_CASE("log_cp agrees with direct log-gamma arithmetic") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> draw(0.3, 80.0);
  for (int rep = 0; rep < 50; ++rep) {
    const double nu = draw(rng);
    const int p = 1 + rep % 9;
    CHECK(log_cp(nu, p) == doctest::Approx(testsupport::naive_log_cp(nu, p)).epsilon(1e-13));
  }
}

TEST_CASE("log_cp recurrence in the dimension") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> draw(0.5, 50.0);
  for (int rep = 0; rep < 30; ++rep) {
    const double nu = draw(rng);
    const int p = 1 + rep % 8;
    const double step = -0.5 * std::log(M_PI * nu) + std::lgamma(0.5 * (nu + p)) -
                        std::lgamma(0.5 * (nu + p - 1));
    CHECK(log_cp(nu, p) - log_cp(nu, p - 1) == doctest::Approx(step).epsilon(1e-11));
  }
}

TEST_CASE("log_cp rejects invalid degrees of freedom") {
  CHECK_THROWS_WITH_AS(log_cp(0.0, 3), "invalid degrees of freedom", std::invalid_argument);
  CHECK_THROWS_WITH_AS(log_cp(-1.5, 3), "invalid degrees of freedom", std::invalid_argument);
}

TEST_CASE("compute_phi is exactly one with zero residual and zero covariances") {
  const ModelParameters params = scalar_params(1.5, 2.0, -1.0, 0.7, 4.0);
  const Vector x = Vector::Constant(1, 1.5);  // equals mu, factors at zero
  const Vector zero = Vector::Zero(1);
  const Matrix zero_cov = Matrix::Zero(1, 1);
  CHECK(compute_phi(params, x, 0, zero, zero_cov, zero, zero_cov) == 1.0);
}

TEST_CASE("compute_phi matches the hand-evaluated scalar case") {
  // p=1, q=1, q_s=1, nu=4, Lambda=(2), residual=2, A=(1), S_f=(1), B=(0),
  // S_h=(1): phi = 1 + (1/4)*2*(1/2)*2 + (1/4)*(1*(1/2)*1*1 + 0) = 1.625.
  const ModelParameters params = scalar_params(0.0, 1.0, 0.0, 2.0, 4.0);
  const Vector x = Vector::Constant(1, 2.0);
  const Vector zero = Vector::Zero(1);
  const Matrix one = Matrix::Constant(1, 1, 1.0);
  CHECK(compute_phi(params, x, 0, zero, one, zero, one) == doctest::Approx(1.625).epsilon(1e-14));
}

TEST_CASE("compute_phi collapses to one as nu grows") {
  const ModelParameters params = scalar_params(0.0, 1.0, 0.5, 2.0, 1e9);
  const Vector x = Vector::Constant(1, 2.0);
  const Vector m = Vector::Constant(1, 0.3);
  const Matrix cov = Matrix::Constant(1, 1, 0.8);
  CHECK(compute_phi(params, x, 0, m, cov, m, cov) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("compute_phi stays at least one and matches the naive formula") {
  std::mt19937 rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    const Instance inst = random_instance(rng, {3, 4}, 5, 2, {1, 2});
    for (int s = 0; s < 2; ++s) {
      const auto& v = inst.state.study(s);
      for (Index i = 0; i < inst.data.rows(s); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        const double phi =
            compute_phi(inst.params, inst.data.x(s).row(i).transpose(), s,
                        v.m_f.row(i).transpose(), v.S_f[iu], v.m_h.row(i).transpose(), v.S_h[iu]);
        CHECK(phi >= 1.0);
        const double reference =
            testsupport::naive_phi(inst.params, inst.data.x(s).row(i).transpose(), s,
                                   v.m_f.row(i).transpose(), v.S_f[iu],
                                   v.m_h.row(i).transpose(), v.S_h[iu]);
        CHECK(phi == doctest::Approx(reference).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("compute_phi error contracts") {
  const ModelParameters good = scalar_params(0.0, 1.0, 0.0, 2.0, 4.0);
  const Vector zero = Vector::Zero(1);
  const Matrix zero_cov = Matrix::Zero(1, 1);

  Vector bad_x = Vector::Constant(1, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_WITH_AS(compute_phi(good, bad_x, 0, zero, zero_cov, zero, zero_cov),
                       "nonfinite input", std::invalid_argument);

  ModelParameters bad_scale = good;
  bad_scale.lambda[0](0) = 0.0;
  CHECK_THROWS_WITH_AS(compute_phi(bad_scale, zero, 0, zero, zero_cov, zero, zero_cov),
                       "invalid scale", std::invalid_argument);
  bad_scale.lambda[0](0) = -1.0;
  CHECK_THROWS_WITH_AS(compute_phi(bad_scale, zero, 0, zero, zero_cov, zero, zero_cov),
                       "invalid scale", std::invalid_argument);
}

TEST_CASE("update_phi fills the cache with compute_phi values") {
  std::mt19937 rng(31);
  Instance inst = random_instance(rng, {4, 3}, 6, 2, {2, 1});
  update_phi(inst.params, inst.state, inst.data);
  for (int s = 0; s < 2; ++s) {
    const auto& v = inst.state.study(s);
    for (Index i = 0; i < inst.data.rows(s); ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const double direct =
          compute_phi(inst.params, inst.data.x(s).row(i).transpose(), s,
                      v.m_f.row(i).transpose(), v.S_f[iu], v.m_h.row(i).transpose(), v.S_h[iu]);
      CHECK(v.phi(i) == doctest::Approx(direct).epsilon(1e-14));
    }
  }
}

TEST_CASE("elbo matches the closed form on the all-zero single observation") {
  const int q = 2, qs = 3, p = 4;
  const double nu = 5.0;
  ModelParameters params;
  params.mu = {Vector::Zero(p)};
  params.A = Matrix::Zero(p, q);
  params.B = {Matrix::Zero(p, qs)};
  params.lambda = {Vector::Ones(p)};
  params.nu = nu;

  VariationalState state;
  StudyVariational v;
  v.m_f = Matrix::Zero(1, q);
  v.m_h = Matrix::Zero(1, qs);
  v.S_f = {Matrix::Identity(q, q)};
  v.S_h = {Matrix::Identity(qs, qs)};
  v.phi = Vector::Ones(1);
  state.studies = {v};

  MultiStudyDataset data;
  data.studies = {Matrix::Zero(1, p)};

  const double expected = log_cp(nu, p) - 0.5 * (q + qs);
  CHECK(elbo(params, state, data) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("elbo equals the naive double-loop reference") {
  std::mt19937 rng(41);
  for (int rep = 0; rep < 10; ++rep) {
    const Instance inst = random_instance(rng, {3, 4}, 4, 2, {1, 2}, 3.0 + rep);
    const double fast = elbo(inst.params, inst.state, inst.data);
    const double naive = testsupport::naive_elbo(inst.params, inst.state, inst.data);
    CHECK(fast == doctest::Approx(naive).epsilon(1e-10));
  }
}

TEST_CASE("elbo strictly decreases when every residual is inflated") {
  std::mt19937 rng(43);
  const Instance inst = random_instance(rng, {5, 4}, 6, 2, {2, 1});
  MultiStudyDataset inflated = inst.data;
  for (int s = 0; s < inflated.num_studies(); ++s) {
    Matrix& x = inflated.studies[static_cast<std::size_t>(s)];
    // x' = mu + 3 (x - mu): residuals exactly tripled, parameters untouched.
    x.rowwise() -= inst.params.mu[static_cast<std::size_t>(s)].transpose();
    x *= 3.0;
    x.rowwise() += inst.params.mu[static_cast<std::size_t>(s)].transpose();
  }
  CHECK(elbo(inst.params, inst.state, inflated) < elbo(inst.params, inst.state, inst.data));
}

TEST_CASE("elbo rejects non-positive-definite variational covariances") {
  std::mt19937 rng(47);
  Instance inst = random_instance(rng, {3}, 4, 2, {1});
  inst.state.study(0).S_f[0] = (Vector(2) << 1.0, -0.5).finished().asDiagonal();
  CHECK_THROWS_WITH_AS(elbo(inst.params, inst.state, inst.data),
                       "degenerate variational covariance", std::runtime_error);
}

TEST_CASE("elbo evaluation is pure across nu changes") {
  std::mt19937 rng(53);
  Instance inst = random_instance(rng, {4, 3}, 5, 1, {2, 1});
  inst.params.nu = 3.0;
  const double first = elbo(inst.params, inst.state, inst.data);
  inst.params.nu = 5.0;
  (void)elbo(inst.params, inst.state, inst.data);
  inst.params.nu = 3.0;
  const double again = elbo(inst.params, inst.state, inst.data);
  CHECK(first == again);  // bit-identical
}
