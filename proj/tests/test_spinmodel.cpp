#include <cmath>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "mpstomo/spinmodel.hpp"
#include "oracles.hpp"

using namespace mpstomo;

TEST_CASE("build_couplings power law") {
  CHECK(build_couplings(2, 1.6, 1.0)(0, 1) == 1.0);
  CHECK(build_couplings(3, 1.0, 1.0)(0, 2) == 0.5);
  CHECK(build_couplings(8, 1.6, 1.0)(0, 2) == doctest::Approx(std::pow(2.0, -1.6)).epsilon(1e-14));
  CHECK(build_couplings(8, 1.6, 1.0)(0, 2) == doctest::Approx(0.32988).epsilon(1e-5));
}

TEST_CASE("build_couplings symmetric with zero diagonal") {
  for (int n : {2, 3, 5, 8, 14})
    for (double alpha : {0.5, 1.0, 1.3, 1.6, 3.0})
      for (double j0 : {0.1, 1.0, 7.5}) {
        const RMatrix j = build_couplings(n, alpha, j0);
        for (int a = 0; a < n; ++a) {
          CHECK(j(a, a) == 0.0);
          for (int b = 0; b < n; ++b) CHECK(j(a, b) == j(b, a));
        }
      }
}

TEST_CASE("build_couplings rejects bad input") {
  CHECK_THROWS_AS(build_couplings(1, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_couplings(4, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_couplings(4, 1.0, -1.0), std::invalid_argument);
}

TEST_CASE("mean_nn_coupling") {
  CHECK(mean_nn_coupling(build_couplings(2, 1.0, 1.0)) == 1.0);
  RMatrix nn = RMatrix::Zero(8, 8);
  for (int i = 0; i + 1 < 8; ++i) nn(i, i + 1) = nn(i + 1, i) = 0.5;
  CHECK(mean_nn_coupling(nn) == doctest::Approx(0.5));
  CHECK(mean_nn_coupling(build_couplings(3, 1.0, 1.0)) == doctest::Approx(1.0));
}

TEST_CASE("hamiltonian term counts") {
  ChainSpec two;
  two.n_sites = 2;
  auto t2 = build_hamiltonian_terms(two);
  CHECK(t2.hop_terms.size() == 1);
  CHECK(t2.field_terms.size() == 2);
  ChainSpec eight;
  eight.n_sites = 8;
  eight.alpha = 1.6;
  CHECK(build_hamiltonian_terms(eight).hop_terms.size() == 28);
}

TEST_CASE("two-site flip-flop spectrum") {
  ChainSpec s;
  s.n_sites = 2;
  const CMatrix h = assemble_dense(build_hamiltonian_terms(s));
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  const auto& ev = es.eigenvalues();
  CHECK(ev(0) == doctest::Approx(-1.0));
  CHECK(std::abs(ev(1)) < 1e-14);
  CHECK(std::abs(ev(2)) < 1e-14);
  CHECK(ev(3) == doctest::Approx(1.0));
  // Flip-flop only couples |up,down> (index 1) and |down,up> (index 2).
  CHECK(h(1, 2) == cplx(1.0));
  CHECK(h(2, 1) == cplx(1.0));
}

TEST_CASE("field term sign: Z = +1 on up") {
  ChainSpec s;
  s.n_sites = 2;
  s.b_field = 0.7;
  const CMatrix h = assemble_dense(build_hamiltonian_terms(s));
  CHECK(h(0, 0).real() == doctest::Approx(1.4));
  CHECK(h(3, 3).real() == doctest::Approx(-1.4));
}

TEST_CASE("hamiltonian is hermitian and conserves excitations") {
  for (int n = 2; n <= 6; ++n) {
    ChainSpec s;
    s.n_sites = n;
    s.alpha = 1.3;
    s.b_field = 0.4;
    const CMatrix h = assemble_dense(build_hamiltonian_terms(s));
    CHECK((h - h.adjoint()).norm() <= 1e-12 * h.norm());
    CMatrix num = CMatrix::Zero(h.rows(), h.cols());
    for (Eigen::Index x = 0; x < h.rows(); ++x) {
      int ups = 0;
      for (int q = 0; q < n; ++q) ups += oracle::bit_of(static_cast<std::size_t>(x), n, q) == 0;
      num(x, x) = ups;
    }
    CHECK((h * num - num * h).norm() < 1e-10);
  }
}

TEST_CASE("neel_state") {
  CHECK(neel_state(2).pattern == std::vector<Spin>{Spin::up, Spin::down});
  CHECK(neel_state(4).pattern == std::vector<Spin>{Spin::up, Spin::down, Spin::up, Spin::down});
  CHECK(neel_state(1).pattern == std::vector<Spin>{Spin::up});
}

TEST_CASE("chain spec json round trip and validation") {
  ChainSpec s;
  s.n_sites = 3;
  s.alpha = 1.2;
  s.j0 = 2.0;
  RMatrix j = build_couplings(3, 1.0, 1.0);
  j(0, 2) = j(2, 0) = 0.25;
  s.couplings = j;
  nlohmann::json js = s;
  ChainSpec back = js.get<ChainSpec>();
  CHECK(back.n_sites == 3);
  REQUIRE(back.couplings.has_value());
  CHECK(back.couplings->isApprox(j));
  CHECK(back.coupling_matrix()(0, 2) == 0.25);

  ChainSpec bad = s;
  RMatrix asym = j;
  asym(0, 1) = 3.0;
  bad.couplings = asym;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
