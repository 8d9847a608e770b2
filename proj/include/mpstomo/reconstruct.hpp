#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"
#include "mpstomo/localtomo.hpp"
#include "mpstomo/measure.hpp"
#include "mpstomo/mps.hpp"
#include "mpstomo/spinmodel.hpp"

namespace mpstomo {

struct ReconstructionOptions {
  int bond_dim = 0;  // 0 selects 2^(k-1)
  int max_sweeps = 200;
  double cost_tol = 1e-9;    // stop when a sweep lowers the cost by less than this fraction
  double cost_floor = 1e-13; // stop once the cost is this small
  int restarts = 5;
  int inner_iters = 10;      // local optimizer iterations per site visit
  std::uint64_t seed = 1;
  bool stage2_enabled = false;
  int stage2_max_iters = 20;  // likelihood sweeps

  void validate() const;
  int resolved_bond(int k) const { return bond_dim > 0 ? bond_dim : 1 << (k - 1); }
};

struct ReconstructionReport {
  Mps mps;
  double final_cost = 0.0;
  std::vector<double> per_window_residuals;  // Frobenius distances
  int sweeps_used = 0;
  std::vector<double> restart_costs;
  int best_restart = 0;
  std::vector<double> sweep_costs;  // cost after each sweep of the chosen restart
  std::optional<double> stage2_loglik;
  std::optional<double> stage2_initial_loglik;
  int stage2_floored = 0;
  int stage2_iters = 0;
};

/// sum_i ||rho_i(Psi) - rho_hat_i||_F^2.
double reduction_cost(const Mps& mps, const std::vector<WindowEstimate>& estimates);

/// Cost and its gradient with respect to the tensor at `center`, treating
/// the real and imaginary parts as independent real coordinates. Exposed for
/// derivative checks.
double reduction_cost_gradient(const Mps& mps, int center, const std::vector<CMatrix>& targets,
                               SiteTensor* gradient);

ReconstructionReport reconstruct_variational(const std::vector<WindowEstimate>& estimates,
                                             const ReconstructionOptions& opts);

/// sum over records and outcomes of count * log p_Psi(outcome | setting).
/// Probabilities below 1e-12 are floored; `floored` receives their count.
double log_likelihood(const Mps& mps, const std::vector<ShotRecord>& records, int* floored = nullptr);

/// Single-site likelihood ascent; only improving steps are accepted.
ReconstructionReport refine_likelihood(const Mps& mps, const std::vector<ShotRecord>& records,
                                       const ReconstructionOptions& opts);

/// Exact evolution, exact k-window reductions (optionally depolarized) and
/// stage-1 reconstruction, with no sampling.
ReconstructionReport idealized_pipeline(const ChainSpec& spec, double t, int k,
                                        const ReconstructionOptions& opts, double noise_p = 0.0);

nlohmann::json report_to_json(const ReconstructionReport& r);
ReconstructionReport report_from_json(const nlohmann::json& j);

}  // namespace mpstomo
