#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mpstomo/common.hpp"
#include "mpstomo/exactsim.hpp"

namespace mpstomo {

/// One site of an MPS: a (D_left x D_right) matrix per physical index,
/// index 0 = up, 1 = down.
using SiteTensor = std::array<CMatrix, 2>;

/// Open-boundary matrix product state. Immutable after construction; every
/// operation returns a new value.
///
///   |Psi> = sum_s A_0^{s_0} A_1^{s_1} ... A_{N-1}^{s_{N-1}} |s_0 ... s_{N-1}>
///
/// with D_0 = D_N = 1. When canonical_center() == c, sites left of c are
/// left isometries (sum_s A^s† A^s = 1) and sites right of c are right
/// isometries (sum_s A^s A^s† = 1).
class Mps {
 public:
  Mps() = default;
  explicit Mps(std::vector<SiteTensor> tensors, std::optional<int> center = std::nullopt);

  int size() const { return static_cast<int>(tensors_.size()); }
  const SiteTensor& operator[](int i) const { return tensors_[static_cast<std::size_t>(i)]; }
  const std::vector<SiteTensor>& tensors() const { return tensors_; }
  std::optional<int> canonical_center() const { return center_; }

  /// D_1 .. D_{N-1}; bond b sits between sites b-1 and b.
  std::vector<int> bond_dims() const;
  int max_bond() const;

  static Mps product(const std::vector<Eigen::Vector2cd>& local_states);
  static Mps from_product_state(const ProductState& s);
  /// Normalized random MPS with bonds min(bond, 2^b, 2^(N-b)).
  static Mps random(int n_sites, int bond, std::uint64_t seed);

 private:
  std::vector<SiteTensor> tensors_;
  std::optional<int> center_;
};

double norm_squared(const Mps& mps);
Mps normalize(const Mps& mps);

/// Mixed-canonical form with the given center. Every bond is left in its
/// Schmidt basis with a fixed phase convention, so the tensors depend only
/// on the state and the center (for non-degenerate Schmidt spectra).
Mps canonicalize(const Mps& mps, int center);

struct CompressResult {
  Mps mps;
  /// Sum over cuts of the discarded squared Schmidt weight.
  double truncation_error = 0.0;
};

/// SVD truncation sweep. At each cut, discards the smallest Schmidt values
/// while their cumulative relative weight stays <= tol, then caps at
/// max_bond. Output is normalized.
CompressResult compress(const Mps& mps, int max_bond, double tol);

/// As compress, with a separate cap per bond (max_bonds[b-1] for bond b).
CompressResult compress_to_profile(const Mps& mps, const std::vector<int>& max_bonds, double tol);

/// Exact-to-tol MPS of a state vector: overlap^2 >= 1 - tol. max_bond = 0
/// means unbounded.
Mps mps_from_statevector(const StateVector& v, double tol, int max_bond = 0);

/// Dense contraction (N <= 16). The result is normalized.
StateVector to_statevector(const Mps& mps);

/// Left environments L_0..L_N (L_0 = [1]) and right environments R_0..R_N
/// (R_N = [1]); <Psi|Psi> = tr(L_b R_b) for every b.
std::vector<CMatrix> left_environments(const Mps& mps);
std::vector<CMatrix> right_environments(const Mps& mps);

/// Products A_first^{s_0} ... A_{first+k-1}^{s_{k-1}} for all 2^k strings,
/// string index with the first site most significant.
std::vector<CMatrix> window_strings(const Mps& mps, int first, int k);

/// Normalized reduced density matrix of sites [first, first+k).
DensityMatrix window_reduction(const Mps& mps, int first, int k);
DensityMatrix window_reduction(const Mps& mps, int first, int k, const std::vector<CMatrix>& left,
                               const std::vector<CMatrix>& right);

/// All N-k+1 window reductions in site order (k <= 8).
std::vector<DensityMatrix> local_reductions_mps(const Mps& mps, int k);

/// <a|b> without normalization.
cplx overlap(const Mps& a, const Mps& b);

/// <Psi|P|Psi> / <Psi|Psi>.
double expectation_pauli_mps(const Mps& mps, std::string_view pauli);

struct SchmidtSpectrum {
  int cut = 0;
  std::vector<double> values;  // non-increasing, squares sum to 1
};

/// Schmidt values across bond `cut` (1 <= cut <= N-1).
SchmidtSpectrum schmidt_spectrum(const Mps& mps, int cut);

/// -sum lambda^2 log2 lambda^2.
double entropy_bits(const SchmidtSpectrum& s);

/// Von Neumann entropy in bits at the cut floor(N/2).
double half_chain_entropy(const Mps& mps);

nlohmann::json mps_to_json(const Mps& mps);
Mps mps_from_json(const nlohmann::json& j);

}  // namespace mpstomo
