#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpstomo/common.hpp"
#include "mpstomo/exactsim.hpp"
#include "mpstomo/measure.hpp"

namespace mpstomo {

/// Sites [first, first + k).
struct Window {
  int first = 0;
  int k = 1;

  bool operator==(const Window&) const = default;
};

struct PauliStats {
  std::map<std::string, double> means;
  std::map<std::string, double> stderrs;
  std::map<std::string, std::uint64_t> shots_used;
};

struct WindowEstimate {
  Window window;
  DensityMatrix rho;
  std::map<std::string, double> pauli_means;
  std::map<std::string, double> pauli_stderr;
  std::map<std::string, std::uint64_t> shots_used;
};

/// Pools every setting whose axes agree with a word's non-identity letters.
/// Throws CoverageError naming the first unmeasurable word.
PauliStats pauli_estimates(const std::vector<ShotRecord>& records, Window w);

/// (1/2^k) sum_w mean(w) sigma_w. Missing words count as 0, "I..I" as 1.
CMatrix linear_inversion(const std::map<std::string, double>& means, int k);

/// Closest density matrix in Frobenius norm: the spectrum is projected onto
/// the probability simplex, eigenvectors kept.
DensityMatrix project_to_physical(const CMatrix& h);

/// tr(rho sigma_w) for every word over the window.
std::map<std::string, double> pauli_means_of(const DensityMatrix& rho);

std::vector<WindowEstimate> estimate_all_reductions(const std::vector<ShotRecord>& records, int k);

/// Estimates carrying exact means (stderr 0), e.g. from exact reductions.
WindowEstimate exact_window_estimate(const DensityMatrix& rho, Window w);
std::vector<WindowEstimate> exact_estimates(const std::vector<DensityMatrix>& reductions);

/// Width-w estimate of sites [first, first + w) taken from a wider estimate
/// that contains them: rho is the partial trace, statistics are those of the
/// embedded words.
WindowEstimate marginal_estimate(const WindowEstimate& wide, Window w);

/// The N-w+1 width-w estimates implied by a full set of wider ones.
std::vector<WindowEstimate> marginal_estimates(const std::vector<WindowEstimate>& wide, int w);

/// Partial trace of a k-qubit matrix onto qubits [first, first + len).
CMatrix partial_trace_range(const CMatrix& rho, int k, int first, int len);

/// Frobenius distance between neighbouring estimates on their k-1 shared
/// sites. Reported only; nothing is adjusted.
std::vector<double> overlap_inconsistency(const std::vector<WindowEstimate>& estimates);

nlohmann::json estimates_to_json(const std::vector<WindowEstimate>& estimates);
std::vector<WindowEstimate> estimates_from_json(const nlohmann::json& j);

}  // namespace mpstomo
