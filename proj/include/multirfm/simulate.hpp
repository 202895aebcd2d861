#pragma once

#include "multirfm/types.hpp"

#include <cstdint>
#include <string>
#include <utility>

namespace multirfm {

/// Error distribution of the simulated noise. student_t draws whole rows
/// from MVT_p(nu, 0, I); the others fill entries i.i.d. with mean zero.
struct ErrorLaw {
  enum class Kind { student_t, gaussian, centered_exponential, centered_pareto };

  Kind kind = Kind::gaussian;
  double nu = 3.0;     // student_t tail parameter, > 0
  double alpha = 2.0;  // pareto shape, > 1 so the centering mean exists

  static ErrorLaw student_t(double nu);
  static ErrorLaw gaussian();
  static ErrorLaw centered_exponential();
  static ErrorLaw centered_pareto(double alpha);

  void validate() const;
  std::string name() const;
};

struct SimulationSpec {
  int S = 0;
  std::vector<Index> n_s;
  Index p = 0;
  int q = 0;
  std::vector<int> q_s;
  double rho_A = 1.0;  // shared-signal strength (also scales B_1)
  double rho_B = 1.0;  // specific-signal strength for studies s >= 2
  ErrorLaw error_law;
  std::uint64_t seed = 0;

  FactorCounts counts() const { return {q, q_s}; }
  void validate() const;
};

/// True generating model plus the factor draws behind one dataset.
/// covariance_defined is false when the error law has no finite second
/// moment (t with nu <= 2, pareto with alpha <= 2); subspace metrics remain
/// valid regardless.
struct GroundTruth {
  ModelParameters params0;  // mu_s0, A_0, B_s0, Lambda_s0 = I, nu (inf if not t)
  std::vector<Matrix> F0;
  std::vector<Matrix> H0;
  bool covariance_defined = true;
};

/// Deterministic substream seed for (replicate, study, block), so any
/// replicate can be regenerated alone. Structure blocks (means, loadings)
/// pass replicate = 0 and are fixed across replicates.
std::uint64_t substream_seed(std::uint64_t master, std::uint64_t replicate, std::uint64_t study,
                             std::uint64_t block);

/// Loadings built from sign-fixed SVDs of standard-normal matrices:
/// (A_0 | B_10) = rho_A U_1 L_1 split after column q; B_s0 = rho_B U_s L_s.
std::pair<Matrix, std::vector<Matrix>> gen_loadings(const SimulationSpec& spec);

/// n x p error draw under the law.
Matrix gen_errors(const ErrorLaw& law, Index n, Index p, std::uint64_t seed);

/// One replicate of the generating model: means and loadings depend only on
/// spec.seed; factors and errors are fresh per replicate index.
std::pair<MultiStudyDataset, GroundTruth> simulate_dataset(const SimulationSpec& spec,
                                                           std::uint64_t replicate = 0);

/// Named study designs: s1-nu{2,3,20}, s2-{gauss,exp,pareto}, s3-(2,3),
/// s3-(3,3), s3-(3,5), s4.
SimulationSpec scenario_preset(const std::string& name);

std::vector<std::string> scenario_names();

/// "student_t"/"t", "gaussian"/"normal", "exp"/"centered_exponential",
/// "pareto"/"centered_pareto"; nu and alpha apply where relevant.
ErrorLaw parse_error_law(const std::string& name, double nu, double alpha);

}  // namespace multirfm
