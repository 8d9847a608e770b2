#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mpstomo/exactsim.hpp"
#include "mpstomo/localtomo.hpp"
#include "mpstomo/measure.hpp"
#include "mpstomo/mps.hpp"

namespace mpstomo {

/// Per-site probability (1 + <Z_i>)/2 of finding the spin up.
std::vector<double> magnetization_profile(const StateVector& state);
std::vector<double> magnetization_profile(const Mps& mps);
/// Pools every record that measured site i along Z. Throws CoverageError
/// when some site was never measured along Z.
std::vector<double> magnetization_profile(const std::vector<ShotRecord>& records);

/// (||rho^{T_A}||_1 - 1)/2 with A the listed qubits of rho (at most 6 qubits).
double negativity(const DensityMatrix& rho, const std::vector<int>& subsystem);

/// Geometric mean of the three single-site splittings of a 3-qubit state.
double tripartite_negativity(const DensityMatrix& rho);

struct NegativityEstimate {
  double value = 0.0;
  double stderr = 0.0;
};

/// N2 (k = 2) or N3 (k = 3) of a window estimate, with a parametric
/// bootstrap over its Pauli means.
NegativityEstimate window_negativity(const WindowEstimate& est, int n_boot, std::uint64_t seed);

struct CorrelationMatrix {
  char a = 'Z';
  char b = 'Z';
  RMatrix values;  // <A_i B_j> - <A_i><B_j>
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // true where unmeasured
};

CorrelationMatrix correlation_matrix(const StateVector& state, char a, char b);
CorrelationMatrix correlation_matrix(const Mps& mps, char a, char b);
CorrelationMatrix correlation_matrix(const std::vector<ShotRecord>& records, char a, char b);

/// 2 e max_j sum_{i != j} |J_ij|, in sites per unit time.
double light_cone_velocity(const RMatrix& couplings);

struct LightConePoint {
  double t = 0.0;
  double t_jbar = 0.0;
  double offset = 0.0;  // sites reached from the origin
};

std::vector<LightConePoint> light_cone_overlay(const RMatrix& couplings, const std::vector<double>& times);

struct DfePlan {
  std::vector<std::string> pauli_strings;
  std::vector<double> weights;  // chi_psi^2
  std::vector<double> chi_psi;  // <Psi|P|Psi> / sqrt(2^N)
  int n_samples = 0;
  std::uint64_t seed = 0;
};

/// Draws Pauli strings P with probability <Psi|P|Psi>^2 / 2^N by site-wise
/// conditional sampling on transfer-matrix marginals.
DfePlan dfe_plan(const Mps& mps, int n_samples, std::uint64_t seed);

struct DfeResult {
  double fidelity = 0.0;
  double stderr = 0.0;  // spread over the drawn strings
  int n_samples = 0;
};

/// Exact tr(rho P) of the (optionally locally depolarized) lab state.
DfeResult dfe_estimate(const DfePlan& plan, const StateVector& lab, double noise_p = 0.0);
/// tr(rho P) from records whose axes match P on its support. Throws
/// CoverageError listing the strings no record covers.
DfeResult dfe_estimate(const DfePlan& plan, const std::vector<ShotRecord>& records);

std::string magnetization_csv(const std::vector<double>& times, const std::vector<std::vector<double>>& profiles);
std::string correlation_csv(const CorrelationMatrix& c);
std::string negativity_csv(const std::vector<std::pair<int, NegativityEstimate>>& rows);

nlohmann::json dfe_to_json(const DfePlan& plan, const DfeResult* result = nullptr);
DfePlan dfe_plan_from_json(const nlohmann::json& j);

}  // namespace mpstomo
