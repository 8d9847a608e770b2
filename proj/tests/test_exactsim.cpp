#include <cmath>

#include "doctest.h"
#include "mpstomo/exactsim.hpp"
#include "oracles.hpp"

using namespace mpstomo;

namespace {

ChainSpec chain(int n, double alpha = 1.6) {
  ChainSpec s;
  s.n_sites = n;
  s.alpha = alpha;
  return s;
}

double tbar(const ChainSpec& s) { return 1.0 / mean_nn_coupling(s.coupling_matrix()); }

}  // namespace

TEST_CASE("sector basis") {
  SectorBasis b(6, 3);
  CHECK(b.size() == 20);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(b.index_of(b.state(i)) == i);
    if (i > 0) CHECK(b.state(i - 1) < b.state(i));
  }
  CHECK(b.index_of(0u) == SectorBasis::npos);
}

TEST_CASE("evolve_exact at t = 0 is the initial state") {
  const auto v = evolve_exact(chain(6), neel_state(6), 0.0);
  const auto p = product_state_vector(neel_state(6));
  CHECK((v.amplitudes - p.amplitudes).norm() == 0.0);
}

TEST_CASE("two-site analytic evolution") {
  for (double t : {0.1, 0.5, 1.3, 2.9}) {
    const auto v = evolve_exact(chain(2), neel_state(2), t);
    CHECK(std::abs(v.amplitudes(1) - cplx(std::cos(t), 0)) < 1e-10);
    CHECK(std::abs(v.amplitudes(2) - cplx(0, -std::sin(t))) < 1e-10);
    CHECK(std::abs(v.amplitudes(0)) == 0.0);
    CHECK(std::abs(v.amplitudes(3)) == 0.0);
  }
}

TEST_CASE("sector Krylov evolution matches dense eigendecomposition") {
  for (int n : {4, 6, 8}) {
    ChainSpec s = chain(n);
    s.b_field = 0.3;
    const CMatrix h = assemble_dense(build_hamiltonian_terms(s));
    const auto init = product_state_vector(neel_state(n));
    for (double tt : {0.1, 0.27, 0.8}) {
      const double t = tt * tbar(s);
      const auto v = evolve_exact(s, neel_state(n), t);
      const CVector ref = oracle::evolve_dense(h, init.amplitudes, t);
      CHECK((v.amplitudes - ref).norm() < 1e-8);
      CHECK(std::abs(v.amplitudes.norm() - 1.0) < 1e-10);
      const auto d = evolve_dense(s, init, t);
      CHECK((d.amplitudes - ref).norm() < 1e-8);
    }
  }
}

TEST_CASE("site-0 up probability at t = 0.27/J for N = 8") {
  const ChainSpec s = chain(8);
  const double t = 0.27 * tbar(s);
  const auto v = evolve_exact(s, neel_state(8), t);
  const CVector ref = oracle::evolve_dense(assemble_dense(build_hamiltonian_terms(s)),
                                           product_state_vector(neel_state(8)).amplitudes, t);
  double p = 0.0, pref = 0.0;
  for (Eigen::Index x = 0; x < 256; ++x)
    if (oracle::bit_of(static_cast<std::size_t>(x), 8, 0) == 0) {
      p += std::norm(v.amplitudes(x));
      pref += std::norm(ref(x));
    }
  CHECK(std::abs(p - pref) < 1e-8);
}

TEST_CASE("excitation conservation and time additivity") {
  const ChainSpec s = chain(8);
  const double t1 = 0.3 * tbar(s), t2 = 0.45 * tbar(s);
  const auto a = evolve_exact(s, neel_state(8), t1 + t2);
  for (Eigen::Index x = 0; x < 256; ++x) {
    int ups = 0;
    for (int q = 0; q < 8; ++q) ups += oracle::bit_of(static_cast<std::size_t>(x), 8, q) == 0;
    if (ups != 4) CHECK(a.amplitudes(x) == cplx(0.0));
  }
  const auto half = evolve_exact(s, neel_state(8), t1);
  const CMatrix h = assemble_dense(build_hamiltonian_terms(s));
  const CVector two_step = oracle::evolve_dense(h, half.amplitudes, t2);
  CHECK((a.amplitudes - two_step).norm() < 1e-8);
}

TEST_CASE("evolve_exact size limit and bad time") {
  EvolveOptions small;
  small.max_sites = 6;
  CHECK_THROWS_AS(evolve_exact(chain(8), neel_state(8), 0.1, small), SizeLimitError);
  CHECK_THROWS_AS(evolve_exact(chain(4), neel_state(4), -1.0), std::invalid_argument);
}

TEST_CASE("reduced density matrices") {
  const auto neel = product_state_vector(neel_state(4));
  const auto r = reduced_density_matrix(neel, {0});
  CHECK(std::abs(r.rho(0, 0) - 1.0) < 1e-15);
  CHECK(std::abs(r.rho(1, 1)) < 1e-15);

  CVector singlet = CVector::Zero(4);
  singlet(1) = 1.0 / std::sqrt(2.0);
  singlet(2) = -1.0 / std::sqrt(2.0);
  const auto half = reduced_density_matrix(oracle::as_state(singlet, 2), {0});
  CHECK((half.rho - 0.5 * CMatrix::Identity(2, 2)).norm() < 1e-15);

  const ChainSpec s = chain(8);
  const auto v = evolve_exact(s, neel_state(8), 0.27 * tbar(s));
  for (const std::vector<int>& sites : {std::vector<int>{2, 3}, {0, 5, 7}, {6, 1}}) {
    const auto got = reduced_density_matrix(v, sites);
    CHECK((got.rho - oracle::partial_trace(v.amplitudes, 8, sites)).norm() < 1e-8);
    CHECK(got.is_physical());
  }
  CHECK_THROWS_AS(reduced_density_matrix(v, {0, 8}), std::invalid_argument);
  CHECK_THROWS_AS(reduced_density_matrix(v, {1, 1}), std::invalid_argument);
}

TEST_CASE("exact local reductions") {
  const ChainSpec s = chain(8);
  const auto v = evolve_exact(s, neel_state(8), 0.4 * tbar(s));
  const auto r3 = exact_local_reductions(v, 3);
  CHECK(r3.size() == 6);
  for (const auto& r : r3) CHECK(r.dim() == 8);
  const auto r2 = exact_local_reductions(v, 2);
  // Tracing a 3-window down to its first two sites equals the 2-window.
  for (std::size_t i = 0; i < r3.size(); ++i) {
    CMatrix down = CMatrix::Zero(4, 4);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        down(a, b) = r3[i].rho(2 * a, 2 * b) + r3[i].rho(2 * a + 1, 2 * b + 1);
    CHECK((down - r2[i].rho).norm() < 1e-10);
  }
  const auto neel = product_state_vector(neel_state(4));
  const auto r1 = exact_local_reductions(neel, 1);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(r1[static_cast<std::size_t>(i)].rho(i % 2, i % 2) - 1.0) < 1e-15);
  const auto bell = exact_local_reductions(oracle::as_state(oracle::ghz(2), 2), 2);
  REQUIRE(bell.size() == 1);
  CHECK((bell[0].rho - oracle::ghz(2) * oracle::ghz(2).adjoint()).norm() < 1e-15);
}

TEST_CASE("pauli expectations") {
  const auto neel = product_state_vector(neel_state(4));
  CHECK(pauli_expectation_exact(neel, "IIII") == doctest::Approx(1.0));
  CHECK(pauli_expectation_exact(neel, "ZIII") == doctest::Approx(1.0));
  CVector singlet = CVector::Zero(4);
  singlet(1) = 1.0 / std::sqrt(2.0);
  singlet(2) = -1.0 / std::sqrt(2.0);
  CHECK(pauli_expectation_exact(oracle::as_state(singlet, 2), "ZZ") == doctest::Approx(-1.0));
  const auto psi = oracle::random_state(5, 11);
  for (const char* w : {"XYZIX", "YYIZZ", "IXIYI", "ZZZZZ"})
    CHECK(std::abs(pauli_expectation_exact(oracle::as_state(psi, 5), w) - oracle::pauli_expectation(psi, w)) <
          1e-12);
  CHECK_THROWS_AS(pauli_expectation_exact(neel, "ZQII"), std::invalid_argument);
  CHECK_THROWS_AS(pauli_expectation_exact(neel, "ZII"), std::invalid_argument);
}

TEST_CASE("depolarizing channel") {
  DensityMatrix up{CMatrix::Zero(2, 2)};
  up.rho(0, 0) = 1.0;
  const auto d = depolarize(up, 0.2);
  CHECK(d.rho(0, 0).real() == doctest::Approx(0.9));
  CHECK(d.rho(1, 1).real() == doctest::Approx(0.1));
  // Depolarizing commutes with partial trace.
  const auto psi = oracle::random_state(4, 3);
  const auto full = noisy_density_matrix(oracle::as_state(psi, 4), 0.15);
  const auto direct = depolarize(reduced_density_matrix(oracle::as_state(psi, 4), {1, 2}), 0.15);
  CHECK((oracle::partial_trace_dm(full.rho, 4, {1, 2}) - direct.rho).norm() < 1e-12);
}

TEST_CASE("state json round trip") {
  const auto psi = oracle::as_state(oracle::random_state(4, 5), 4);
  const auto back = state_from_json(state_to_json(psi));
  CHECK((back.amplitudes - psi.amplitudes).norm() == 0.0);
  CHECK_THROWS_AS(state_from_json(nlohmann::json{{"format", "state-v0"}}), FormatError);
}
