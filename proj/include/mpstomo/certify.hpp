#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpstomo/krylov.hpp"
#include "mpstomo/localtomo.hpp"
#include "mpstomo/measure.hpp"
#include "mpstomo/mps.hpp"
#include "mpstomo/spinmodel.hpp"

namespace mpstomo {

/// h = 1 - (projector onto the support of the MPS's reduction on `window`).
struct WindowProjectorTerm {
  Window window;
  CMatrix h;
  int support_rank = 0;
  bool support_warning = false;  // an eigenvalue sits within 10x of support_tol

  bool trivial() const { return support_rank == h.rows(); }
};

std::vector<WindowProjectorTerm> parent_hamiltonian(const Mps& mps, int k, double support_tol = 1e-7);

/// y = (sum_i h_i) x on the full 2^N space.
void apply_parent_hamiltonian(const std::vector<WindowProjectorTerm>& terms, int n_sites, const CVector& x,
                              CVector& y);

struct GapInfo {
  double ground_energy = 0.0;  // <Psi|H|Psi> when a ground vector is supplied
  double gap = 0.0;            // lower bound on the first excitation above the ground vector
  int degeneracy = 0;
  double residual = 0.0;       // eigensolver residual already subtracted from gap
  double leak = 0.0;           // ||H Psi||
  std::string method;          // "dense" or "lanczos"
};

struct GapOptions {
  int dense_max_sites = 8;
  double degeneracy_tol = 1e-6;
  LanczosOptions lanczos{80, 2000, 1e-9, 0x6761700000000001ULL};
};

/// Low spectrum of H = sum_i h_i. With a ground vector the gap is the lowest
/// eigenvalue of H compressed to its orthogonal complement, minus the
/// eigensolver residual; without one, the two lowest levels of H are
/// computed directly.
GapInfo spectral_gap(const std::vector<WindowProjectorTerm>& terms, int n_sites, const CVector* ground = nullptr,
                     const GapOptions& opts = {});

struct Certificate {
  bool valid = false;
  std::string reason;  // why the certificate is invalid, empty otherwise
  double f_c = 0.0;
  double gap = 0.0;
  double energy = 0.0;
  std::vector<double> per_window_energy;
  int clipped_windows = 0;  // windows whose energy estimate was negative
  double leak = 0.0;
  double ground_energy = 0.0;
  double bootstrap_stderr = 0.0;
  int n_boot = 0;
  int k = 0;      // width of the data windows
  int width = 0;  // width of the parent-Hamiltonian terms
  std::vector<int> bond_dims;
  int source_index = 0;
  int candidates_tried = 0;
  Mps mps;
};

/// f_c = max(0, 1 - (energy + leak) / gap). The leak term only matters when
/// the MPS is not an exact zero mode of its parent Hamiltonian. `estimates`
/// must cover the term windows one-to-one. Window energies are evaluated on
/// the linear-inversion estimate from the Pauli means (unbiased under shot
/// noise) and clipped at 0; bootstrap replicates use the same estimator.
Certificate certificate(const Mps& mps, const std::vector<WindowProjectorTerm>& terms,
                        const std::vector<WindowEstimate>& estimates, const GapInfo& gap, int n_boot,
                        std::uint64_t seed);

struct CertifyOptions {
  double support_tol = 1e-7;
  int n_boot = 200;
  std::uint64_t seed = 1;
  bool search_profiles = true;  // also try compressed bond profiles
  GapOptions gap;
};

/// Bond profiles tried when certifying with width-w terms: uniform and
/// period-2 patterns whose windows are not all full rank.
std::vector<std::vector<int>> candidate_profiles(int n_sites, int w);

/// Best certificate over source MPSs, term widths 1..k and candidate
/// profiles. `estimates` are the width-k data; narrower terms use their
/// marginals.
Certificate certify_best(const std::vector<Mps>& sources, const std::vector<WindowEstimate>& estimates,
                         const CertifyOptions& opts = {});

/// <Psi|rho|Psi> for the exactly evolved state, locally depolarized when
/// noise.p_local > 0 (density-matrix path, N <= 10).
double true_fidelity_oracle(const Mps& mps, const ChainSpec& spec, double t, const NoiseModel& noise = {});
double true_fidelity(const Mps& mps, const StateVector& state, double noise_p = 0.0);

nlohmann::json certificate_to_json(const Certificate& c);
Certificate certificate_from_json(const nlohmann::json& j);

}  // namespace mpstomo
