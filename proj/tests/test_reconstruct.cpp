#include <cmath>

#include "doctest.h"
#include "mpstomo/reconstruct.hpp"
#include "oracles.hpp"

using namespace mpstomo;

namespace {

ChainSpec chain8() {
  ChainSpec s;
  s.n_sites = 8;
  s.alpha = 1.6;
  return s;
}

double tbar(const ChainSpec& s) { return 1.0 / mean_nn_coupling(s.coupling_matrix()); }

double overlap2(const Mps& m, const StateVector& v) {
  return std::norm(to_statevector(m).amplitudes.dot(v.amplitudes));
}

std::vector<CMatrix> targets_of(const std::vector<DensityMatrix>& r) {
  std::vector<CMatrix> t;
  for (const auto& x : r) t.push_back(x.rho);
  return t;
}

}  // namespace

TEST_CASE("reduction_cost fixtures") {
  const Mps neel = Mps::from_product_state(neel_state(6));
  CHECK(reduction_cost(neel, exact_estimates(local_reductions_mps(neel, 2))) < 1e-12);
  ProductState anti = neel_state(6);
  for (auto& s : anti.pattern) s = s == Spin::up ? Spin::down : Spin::up;
  const auto est = exact_estimates(local_reductions_mps(Mps::from_product_state(anti), 1));
  CHECK(reduction_cost(neel, est) == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("cost gradient matches finite differences") {
  const Mps m = canonicalize(Mps::random(6, 3, 5), 2);
  const auto truth = local_reductions_mps(Mps::random(6, 2, 6), 3);
  const auto targets = targets_of(truth);
  for (int c : {0, 2, 3, 5}) {
    SiteTensor g;
    const double f0 = reduction_cost_gradient(m, c, targets, &g);
    CHECK(f0 > 0.0);
    const double h = 1e-6;
    Rng rng(c + 100);
    for (int trial = 0; trial < 6; ++trial) {
      const int s = static_cast<int>(rng.bits() % 2);
      const auto rows = m[c][0].rows(), cols = m[c][0].cols();
      const auto r = static_cast<Eigen::Index>(rng.bits() % static_cast<std::uint64_t>(rows));
      const auto q = static_cast<Eigen::Index>(rng.bits() % static_cast<std::uint64_t>(cols));
      for (cplx dir : {cplx(1, 0), cplx(0, 1)}) {
        auto tp = m.tensors(), tm = m.tensors();
        tp[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)](r, q) += h * dir;
        tm[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)](r, q) -= h * dir;
        const double fd = (reduction_cost_gradient(Mps(tp), c, targets, nullptr) -
                           reduction_cost_gradient(Mps(tm), c, targets, nullptr)) / (2 * h);
        const cplx gv = g[static_cast<std::size_t>(s)](r, q);
        const double analytic = dir == cplx(1, 0) ? gv.real() : gv.imag();
        CHECK(std::abs(fd - analytic) < 1e-6 * std::max(1.0, std::abs(analytic)));
      }
    }
  }
}

TEST_CASE("k = 1 reconstruction of the Neel state") {
  const auto red = exact_local_reductions(product_state_vector(neel_state(6)), 1);
  ReconstructionOptions o;
  o.restarts = 2;
  const auto rep = reconstruct_variational(exact_estimates(red), o);
  CHECK(rep.mps.max_bond() == 1);
  CHECK(overlap2(rep.mps, product_state_vector(neel_state(6))) >= 1.0 - 1e-8);
}

TEST_CASE("t = 0 reductions give the product state") {
  const ChainSpec s = chain8();
  ReconstructionOptions o;
  o.restarts = 1;
  const auto rep = idealized_pipeline(s, 0.0, 3, o);
  CHECK(rep.final_cost < 1e-10);
  CHECK(overlap2(rep.mps, product_state_vector(neel_state(8))) > 1.0 - 1e-6);
}

TEST_CASE("quench reconstruction at t = 0.27/J with D = 8") {
  const ChainSpec s = chain8();
  const double t = 0.27 * tbar(s);
  ReconstructionOptions o;
  o.bond_dim = 8;
  o.restarts = 1;
  const auto rep = idealized_pipeline(s, t, 3, o);
  const auto truth = evolve_exact(s, neel_state(8), t);
  CHECK(overlap2(rep.mps, truth) >= 0.99);
  double sum = 0.0;
  for (double r : rep.per_window_residuals) sum += r * r;
  CHECK(std::abs(sum - rep.final_cost) < 1e-10);
}

TEST_CASE("cost is non-increasing across sweeps and restarts are deterministic") {
  const ChainSpec s = chain8();
  ReconstructionOptions o;
  o.restarts = 2;
  o.max_sweeps = 15;
  const auto a = idealized_pipeline(s, 0.5 * tbar(s), 3, o);
  for (std::size_t i = 1; i < a.sweep_costs.size(); ++i) CHECK(a.sweep_costs[i] <= a.sweep_costs[i - 1] + 1e-12);
  const auto b = idealized_pipeline(s, 0.5 * tbar(s), 3, o);
  CHECK(a.final_cost == b.final_cost);
  CHECK(report_to_json(a).dump() == report_to_json(b).dump());
}

TEST_CASE("faithful at zero noise for low-bond states") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Mps truth = Mps::random(6, 2, seed);
    const auto est = exact_estimates(local_reductions_mps(truth, 3));
    ReconstructionOptions o;
    o.bond_dim = 2;
    o.seed = seed;
    const auto rep = reconstruct_variational(est, o);
    CHECK(std::norm(overlap(rep.mps, truth)) >= 1.0 - 1e-4);
  }
}

TEST_CASE("degenerate estimates are rejected") {
  auto est = exact_estimates(local_reductions_mps(Mps::random(4, 2, 1), 2));
  est[1].rho.rho(0, 0) += 0.5;
  CHECK_THROWS_AS(reconstruct_variational(est, ReconstructionOptions{}), std::invalid_argument);
}

TEST_CASE("stage 2 likelihood") {
  // Records from a product state; start from a guess with one site flipped.
  const auto truth = product_state_vector(neel_state(4));
  std::vector<ShotRecord> recs = run_campaign(truth, schedule_settings(4, 1), 2000, 17, NoiseModel{});
  std::vector<Eigen::Vector2cd> guess;
  for (int i = 0; i < 4; ++i) guess.push_back(i % 2 == 0 ? Eigen::Vector2cd(1, 0) : Eigen::Vector2cd(0, 1));
  guess[2] = Eigen::Vector2cd(0.2, 1.0);
  const Mps start = Mps::product(guess);
  ReconstructionOptions o;
  o.bond_dim = 1;
  o.stage2_max_iters = 30;
  const auto rep = refine_likelihood(start, recs, o);
  REQUIRE(rep.stage2_loglik.has_value());
  CHECK(*rep.stage2_loglik >= *rep.stage2_initial_loglik);
  CHECK(overlap2(rep.mps, truth) > 0.99);
  CHECK(rep.mps.max_bond() <= 1);
}

TEST_CASE("stage 2 at the optimum barely moves") {
  const Mps m = Mps::random(5, 2, 42);
  const auto v = to_statevector(m);
  const auto recs = run_campaign(v, schedule_settings(5, 2), 100000 / 9, 3, NoiseModel{});
  ReconstructionOptions o;
  o.bond_dim = 2;
  o.stage2_max_iters = 5;
  const auto rep = refine_likelihood(m, recs, o);
  CHECK(*rep.stage2_loglik >= *rep.stage2_initial_loglik);
  CHECK(std::abs(std::norm(overlap(rep.mps, m)) - 1.0) < 1e-3);
}

TEST_CASE("recon json round trip") {
  ReconstructionOptions o;
  o.restarts = 1;
  o.max_sweeps = 3;
  const auto rep = idealized_pipeline(chain8(), 0.1, 2, o);
  const auto back = report_from_json(report_to_json(rep));
  CHECK(back.final_cost == rep.final_cost);
  CHECK(back.mps.bond_dims() == rep.mps.bond_dims());
  CHECK(report_to_json(back).dump() == report_to_json(rep).dump());
}
