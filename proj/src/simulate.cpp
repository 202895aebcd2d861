#include "multirfm/simulate.hpp"

#include "multirfm/align.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <stdexcept>

namespace multirfm {

namespace {

constexpr std::uint64_t kBlockMu = 1;
constexpr std::uint64_t kBlockLoadings = 2;
constexpr std::uint64_t kBlockSharedFactors = 3;
constexpr std::uint64_t kBlockSpecificFactors = 4;
constexpr std::uint64_t kBlockErrors = 5;

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix standard_normal(Index n, Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) m(i, j) = normal(rng);
  return m;
}

// rho * U * L of a standard-normal p x k matrix, U sign-fixed.
Matrix scaled_svd_loadings(Index p, Index k, double rho, std::uint64_t seed) {
  if (k == 0) return Matrix(p, 0);
  const Matrix raw = standard_normal(p, k, seed);
  Eigen::BDCSVD<Matrix> svd(raw, Eigen::ComputeThinU);
  Matrix u = svd.matrixU();
  fix_column_signs(u);
  return rho * u * svd.singularValues().asDiagonal();
}

}  // namespace

ErrorLaw ErrorLaw::student_t(double nu) { return {Kind::student_t, nu, 2.0}; }
ErrorLaw ErrorLaw::gaussian() { return {Kind::gaussian, 3.0, 2.0}; }
ErrorLaw ErrorLaw::centered_exponential() { return {Kind::centered_exponential, 3.0, 2.0}; }
ErrorLaw ErrorLaw::centered_pareto(double alpha) { return {Kind::centered_pareto, 3.0, alpha}; }

void ErrorLaw::validate() const {
  if (kind == Kind::student_t && !(nu > 0.0))
    throw std::invalid_argument("invalid degrees of freedom");
  if (kind == Kind::centered_pareto && !(alpha > 1.0))
    throw std::invalid_argument("pareto shape must exceed 1");
}

std::string ErrorLaw::name() const {
  switch (kind) {
    case Kind::student_t: return "student_t";
    case Kind::gaussian: return "gaussian";
    case Kind::centered_exponential: return "centered_exponential";
    case Kind::centered_pareto: return "centered_pareto";
  }
  return "unknown";
}

void SimulationSpec::validate() const {
  if (S < 1) throw std::invalid_argument("simulation needs at least one study");
  if (static_cast<int>(n_s.size()) != S || static_cast<int>(q_s.size()) != S)
    throw std::invalid_argument("simulation spec study lists disagree with S");
  for (Index n : n_s)
    if (n < 1) throw std::invalid_argument("empty study matrix");
  counts().validate(p);
  if (!(rho_A >= 0.0) || !(rho_B >= 0.0))
    throw std::invalid_argument("signal strengths must be nonnegative");
  error_law.validate();
}

std::uint64_t substream_seed(std::uint64_t master, std::uint64_t replicate, std::uint64_t study,
                             std::uint64_t block) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ replicate);
  h = mix64(h ^ study);
  h = mix64(h ^ block);
  return h;
}

std::pair<Matrix, std::vector<Matrix>> gen_loadings(const SimulationSpec& spec) {
  spec.validate();
  const Index q = spec.q;
  const Index q1 = spec.q_s[0];

  const Matrix joint = scaled_svd_loadings(
      spec.p, q + q1, spec.rho_A, substream_seed(spec.seed, 0, 0, kBlockLoadings));
  Matrix a = joint.leftCols(q);
  std::vector<Matrix> b;
  b.push_back(joint.rightCols(q1));
  for (int s = 1; s < spec.S; ++s)
    b.push_back(scaled_svd_loadings(
        spec.p, spec.q_s[static_cast<std::size_t>(s)], spec.rho_B,
        substream_seed(spec.seed, 0, static_cast<std::uint64_t>(s), kBlockLoadings)));
  return {std::move(a), std::move(b)};
}

Matrix gen_errors(const ErrorLaw& law, Index n, Index p, std::uint64_t seed) {
  law.validate();
  std::mt19937_64 rng(seed);
  Matrix e(n, p);
  switch (law.kind) {
    case ErrorLaw::Kind::gaussian: {
      std::normal_distribution<double> normal;
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) e(i, j) = normal(rng);
      break;
    }
    case ErrorLaw::Kind::student_t: {
      std::normal_distribution<double> normal;
      std::chi_squared_distribution<double> chi2(law.nu);
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) e(i, j) = normal(rng);
        const double u = std::max(chi2(rng), 1e-300);
        e.row(i) *= std::sqrt(law.nu / u);
      }
      break;
    }
    case ErrorLaw::Kind::centered_exponential: {
      std::exponential_distribution<double> exponential(1.0);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) e(i, j) = exponential(rng) - 1.0;
      break;
    }
    case ErrorLaw::Kind::centered_pareto: {
      std::uniform_real_distribution<double> uniform(0.0, 1.0);
      const double mean = law.alpha / (law.alpha - 1.0);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j)
          e(i, j) = std::pow(1.0 - uniform(rng), -1.0 / law.alpha) - mean;
      break;
    }
  }
  return e;
}

std::pair<MultiStudyDataset, GroundTruth> simulate_dataset(const SimulationSpec& spec,
                                                           std::uint64_t replicate) {
  spec.validate();
  auto [a, b] = gen_loadings(spec);

  GroundTruth truth;
  truth.params0.A = std::move(a);
  truth.params0.B = std::move(b);
  switch (spec.error_law.kind) {
    case ErrorLaw::Kind::student_t:
      truth.params0.nu = spec.error_law.nu;
      truth.covariance_defined = spec.error_law.nu > 2.0;
      break;
    case ErrorLaw::Kind::centered_pareto:
      truth.params0.nu = std::numeric_limits<double>::infinity();
      truth.covariance_defined = spec.error_law.alpha > 2.0;
      break;
    default:
      truth.params0.nu = std::numeric_limits<double>::infinity();
      truth.covariance_defined = true;
  }

  MultiStudyDataset data;
  for (int s = 0; s < spec.S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    const auto study = static_cast<std::uint64_t>(s);
    const Index n = spec.n_s[su];

    truth.params0.mu.push_back(
        standard_normal(spec.p, 1, substream_seed(spec.seed, 0, study, kBlockMu)).col(0));
    truth.params0.lambda.push_back(Vector::Ones(spec.p));
    truth.F0.push_back(standard_normal(
        n, spec.q, substream_seed(spec.seed, replicate, study, kBlockSharedFactors)));
    truth.H0.push_back(standard_normal(
        n, spec.q_s[su], substream_seed(spec.seed, replicate, study, kBlockSpecificFactors)));

    Matrix x = gen_errors(spec.error_law, n, spec.p,
                          substream_seed(spec.seed, replicate, study, kBlockErrors));
    x.rowwise() += truth.params0.mu[su].transpose();
    if (spec.q > 0) x.noalias() += truth.F0[su] * truth.params0.A.transpose();
    if (spec.q_s[su] > 0) x.noalias() += truth.H0[su] * truth.params0.B[su].transpose();
    data.studies.push_back(std::move(x));
  }
  return {std::move(data), std::move(truth)};
}

SimulationSpec scenario_preset(const std::string& name) {
  SimulationSpec spec;
  spec.S = 2;
  spec.n_s = {150, 200};
  spec.p = 500;
  spec.q = 3;
  spec.q_s = {2, 2};
  spec.rho_A = 5.0;
  spec.rho_B = 5.0;

  if (name == "s1-nu2") {
    spec.error_law = ErrorLaw::student_t(2.0);
  } else if (name == "s1-nu3") {
    spec.error_law = ErrorLaw::student_t(3.0);
  } else if (name == "s1-nu20") {
    spec.error_law = ErrorLaw::student_t(20.0);
  } else if (name == "s2-gauss") {
    spec.error_law = ErrorLaw::gaussian();
  } else if (name == "s2-exp") {
    spec.error_law = ErrorLaw::centered_exponential();
  } else if (name == "s2-pareto") {
    spec.error_law = ErrorLaw::centered_pareto(2.0);
  } else if (name == "s3-(2,3)") {
    spec.error_law = ErrorLaw::student_t(3.0);
    spec.rho_A = 2.0;
    spec.rho_B = 3.0;
  } else if (name == "s3-(3,3)") {
    spec.error_law = ErrorLaw::student_t(3.0);
    spec.rho_A = 3.0;
    spec.rho_B = 3.0;
  } else if (name == "s3-(3,5)") {
    spec.error_law = ErrorLaw::student_t(3.0);
    spec.rho_A = 3.0;
    spec.rho_B = 5.0;
  } else if (name == "s4") {
    spec.error_law = ErrorLaw::student_t(20.0);
    spec.rho_A = 6.0;
    spec.rho_B = 6.0;
  } else {
    throw std::invalid_argument("unknown scenario");
  }
  return spec;
}

std::vector<std::string> scenario_names() {
  return {"s1-nu2",  "s1-nu3",   "s1-nu20",  "s2-gauss", "s2-exp",
          "s2-pareto", "s3-(2,3)", "s3-(3,3)", "s3-(3,5)", "s4"};
}

ErrorLaw parse_error_law(const std::string& name, double nu, double alpha) {
  if (name == "student_t" || name == "t") return ErrorLaw::student_t(nu);
  if (name == "gaussian" || name == "normal") return ErrorLaw::gaussian();
  if (name == "exp" || name == "centered_exponential") return ErrorLaw::centered_exponential();
  if (name == "pareto" || name == "centered_pareto") return ErrorLaw::centered_pareto(alpha);
  throw std::invalid_argument("unknown error law: " + name);
}

}  // namespace multirfm
