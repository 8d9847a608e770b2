#pragma once

#include <optional>
#include <vector>

#include "json.hpp"

#include "mpstomo/common.hpp"

namespace mpstomo {

// Units: hbar = 1; couplings and fields in rad/s, times in s.
// Sites are 0-based; site 0 is the leftmost spin and the most significant
// qubit of every dense basis index.

/// Chain geometry and XY-model parameters.
struct ChainSpec {
  int n_sites = 2;
  double alpha = 1.0;
  double j0 = 1.0;
  double b_field = 0.0;
  /// Explicit J_ij; overrides the power law when present.
  std::optional<RMatrix> couplings;

  /// Throws ConfigError if any invariant is violated.
  void validate() const;
  /// Explicit matrix if present, otherwise the power law.
  RMatrix coupling_matrix() const;
};

/// J_ij = j0 / |i-j|^alpha, zero diagonal.
RMatrix build_couplings(int n_sites, double alpha, double j0);

/// Mean of J_{i,i+1}; time axes are reported in units of 1/J-bar.
double mean_nn_coupling(const RMatrix& couplings);

struct HopTerm {
  int i;
  int j;
  double coupling;
};

struct FieldTerm {
  int site;
  double b;
};

/// H = sum_{i<j} J_ij (s+_i s-_j + s-_i s+_j) + B sum_j Z_j.
struct HamiltonianTerms {
  int n_sites = 0;
  std::vector<HopTerm> hop_terms;
  std::vector<FieldTerm> field_terms;
};

HamiltonianTerms build_hamiltonian_terms(const ChainSpec& spec);

/// Dense 2^N matrix of the terms; intended for N <= 12 oracles.
CMatrix assemble_dense(const HamiltonianTerms& terms);

enum class Spin { up, down };

struct ProductState {
  std::vector<Spin> pattern;
  int size() const { return static_cast<int>(pattern.size()); }
};

/// |up, down, up, down, ...> starting with up on site 0.
ProductState neel_state(int n_sites);

void to_json(nlohmann::json& j, const ChainSpec& spec);
void from_json(const nlohmann::json& j, ChainSpec& spec);

}  // namespace mpstomo
