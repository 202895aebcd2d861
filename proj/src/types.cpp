#include "multirfm/types.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace multirfm {

Index MultiStudyDataset::total_rows() const {
  Index n = 0;
  for (const auto& x : studies) n += x.rows();
  return n;
}

void MultiStudyDataset::validate() const {
  if (studies.empty()) throw std::invalid_argument("dataset has no studies");
  const Index p = studies.front().cols();
  if (p < 1) throw std::invalid_argument("dataset needs at least one variable");
  for (const auto& x : studies) {
    if (x.cols() != p) throw std::invalid_argument("studies disagree on variable count");
    if (x.rows() < 1) throw std::invalid_argument("empty study matrix");
    if (!x.allFinite()) throw std::invalid_argument("nonfinite input");
  }
  if (!variable_names.empty() && static_cast<Index>(variable_names.size()) != p)
    throw std::invalid_argument("variable_names length differs from p");
  if (!study_ids.empty() && study_ids.size() != studies.size())
    throw std::invalid_argument("study_ids length differs from number of studies");
}

int FactorCounts::total_specific() const {
  return std::accumulate(q_s.begin(), q_s.end(), 0);
}

void FactorCounts::validate(Index p) const {
  if (q < 0) throw std::invalid_argument("negative shared factor count");
  for (int qs : q_s) {
    if (qs < 0) throw std::invalid_argument("negative specific factor count");
    if (q + qs < 1) throw std::invalid_argument("study without any factor");
  }
  if (p - 1 <= q + total_specific())
    throw std::invalid_argument("dimensionality constraint violated: p - 1 must exceed q + sum(q_s)");
}

FactorCounts ModelParameters::counts() const {
  FactorCounts c;
  c.q = static_cast<int>(A.cols());
  for (const auto& b : B) c.q_s.push_back(static_cast<int>(b.cols()));
  return c;
}

void ModelParameters::validate(const MultiStudyDataset& data) const {
  const int S = data.num_studies();
  const Index pp = data.num_variables();
  if (num_studies() != S || static_cast<int>(B.size()) != S || static_cast<int>(lambda.size()) != S)
    throw std::invalid_argument("parameter study count differs from dataset");
  if (A.rows() != pp) throw std::invalid_argument("loading matrix A has wrong row count");
  for (int s = 0; s < S; ++s) {
    if (mu[s].size() != pp) throw std::invalid_argument("mean vector has wrong length");
    if (B[s].rows() != pp) throw std::invalid_argument("loading matrix B_s has wrong row count");
    if (lambda[s].size() != pp) throw std::invalid_argument("scale vector has wrong length");
    if (!(lambda[s].array() > 0.0).all() || !lambda[s].allFinite())
      throw std::invalid_argument("invalid scale");
  }
  if (!(nu > 2.0)) throw std::invalid_argument("invalid degrees of freedom");
}

std::vector<double> default_nu_grid() {
  return {2.1, 2.5, 3.0, 4.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0, 100.0};
}

void FitConfig::validate() const {
  if (max_iter < 0) throw std::invalid_argument("negative max_iter");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(lambda_floor > 0.0)) throw std::invalid_argument("lambda_floor must be positive");
  if (nu_grid.empty()) throw std::invalid_argument("empty nu grid");
  double prev = 2.0;
  for (double v : nu_grid) {
    if (!(v > prev)) throw std::invalid_argument("nu grid must be strictly increasing with minimum above 2");
    prev = v;
  }
  if (nu_fixed && !(*nu_fixed > 2.0)) throw std::invalid_argument("invalid degrees of freedom");
}

}  // namespace multirfm
