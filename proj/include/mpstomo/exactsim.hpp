#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Sparse>

#include "json.hpp"
#include "mpstomo/common.hpp"
#include "mpstomo/spinmodel.hpp"

namespace mpstomo {

/// Configurations of N spins with exactly m up-spins, in increasing
/// full-space index order. A configuration index has bit (N-1-site) set
/// when that site is down.
class SectorBasis {
 public:
  SectorBasis(int n_sites, int m_up);

  int n_sites() const { return n_sites_; }
  int m() const { return m_; }
  std::size_t size() const { return states_.size(); }
  std::uint32_t state(std::size_t pos) const { return states_[pos]; }
  const std::vector<std::uint32_t>& states() const { return states_; }
  /// Position of a configuration, or npos when it lies outside the sector.
  std::size_t index_of(std::uint32_t config) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  int n_sites_;
  int m_;
  std::vector<std::uint32_t> states_;
};

/// Pure state of N spins. Amplitudes are always stored in the full 2^N
/// space; `basis` records whether the support is confined to one sector.
struct StateVector {
  int n_sites = 0;
  CVector amplitudes;
  std::string basis = "full";  // "full" or "sector(m)"

  std::size_t dim() const { return static_cast<std::size_t>(amplitudes.size()); }
};

/// Reduced (or full) density matrix over an ordered set of sites.
struct DensityMatrix {
  CMatrix rho;

  int dim() const { return static_cast<int>(rho.rows()); }
  /// Number of qubits (dim must be a power of two).
  int n_qubits() const;
  /// Hermiticity, unit trace and eigenvalues >= -tol.
  bool is_physical(double tol = 1e-10) const;
};

StateVector product_state_vector(const ProductState& s);

struct EvolveOptions {
  int max_sites = kMaxExactSites;
  double krylov_tol = 1e-10;
  int max_krylov = 40;
};

/// Sparse Hamiltonian restricted to one excitation sector.
Eigen::SparseMatrix<cplx, Eigen::RowMajor> sector_hamiltonian(const ChainSpec& spec,
                                                              const SectorBasis& basis);

/// exp(-i H t)|initial>, computed in the initial state's excitation sector
/// with a Krylov exponential.
StateVector evolve_exact(const ChainSpec& spec, const ProductState& initial, double t,
                         const EvolveOptions& opts = {});

/// Same evolution via dense eigendecomposition of the full 2^N Hamiltonian
/// (N <= 10). Cross-check path.
StateVector evolve_dense(const ChainSpec& spec, const StateVector& initial, double t);

/// Partial trace onto `sites` (0-based, distinct, at most 8). Output ordering
/// follows the order of `sites`, first listed site most significant.
DensityMatrix reduced_density_matrix(const StateVector& state, const std::vector<int>& sites);

/// Windows [i, i+k-1] for i = 0..N-k.
std::vector<DensityMatrix> exact_local_reductions(const StateVector& state, int k);

/// <state|P|state> for a length-N word over IXYZ.
double pauli_expectation_exact(const StateVector& state, std::string_view pauli);

/// Applies the word's Pauli operators to a state vector.
CVector apply_pauli(const CVector& amplitudes, int n_sites, std::string_view pauli);

/// rho -> (1-p) rho + p tr_site(rho) x I/2 on every qubit of rho.
DensityMatrix depolarize(const DensityMatrix& rho, double p);

/// Full dense |psi><psi| with local depolarizing noise on every site (N <= 10).
DensityMatrix noisy_density_matrix(const StateVector& state, double p);

/// Interleaved [re, im, re, im, ...] JSON export; N <= 10.
nlohmann::json state_to_json(const StateVector& state);
StateVector state_from_json(const nlohmann::json& j);

}  // namespace mpstomo
