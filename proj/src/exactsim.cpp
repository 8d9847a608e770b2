#include "mpstomo/exactsim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "mpstomo/krylov.hpp"

namespace mpstomo {
namespace {

std::uint32_t site_bit(int n_sites, int site) {
  return std::uint32_t{1} << (n_sites - 1 - site);
}

std::uint32_t config_of(const ProductState& s) {
  std::uint32_t c = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s.pattern[static_cast<std::size_t>(i)] == Spin::down) c |= site_bit(s.size(), i);
  return c;
}

int count_up(const ProductState& s) {
  return static_cast<int>(std::count(s.pattern.begin(), s.pattern.end(), Spin::up));
}

}  // namespace

SectorBasis::SectorBasis(int n_sites, int m_up) : n_sites_(n_sites), m_(m_up) {
  if (n_sites < 1 || n_sites > 30) throw std::invalid_argument("SectorBasis: bad n_sites");
  if (m_up < 0 || m_up > n_sites) throw std::invalid_argument("SectorBasis: bad excitation count");
  const std::uint32_t dim = std::uint32_t{1} << n_sites;
  const int downs = n_sites - m_up;
  for (std::uint32_t c = 0; c < dim; ++c)
    if (std::popcount(c) == downs) states_.push_back(c);
}

std::size_t SectorBasis::index_of(std::uint32_t config) const {
  auto it = std::lower_bound(states_.begin(), states_.end(), config);
  if (it == states_.end() || *it != config) return npos;
  return static_cast<std::size_t>(it - states_.begin());
}

int DensityMatrix::n_qubits() const {
  int d = dim();
  if (d <= 0 || (d & (d - 1)) != 0) throw std::logic_error("DensityMatrix: dim not a power of 2");
  return std::countr_zero(static_cast<unsigned>(d));
}

bool DensityMatrix::is_physical(double tol) const {
  if (rho.rows() != rho.cols()) return false;
  if ((rho - rho.adjoint()).norm() > tol) return false;
  if (std::abs(rho.trace() - cplx(1.0, 0.0)) > tol) return false;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

StateVector product_state_vector(const ProductState& s) {
  if (s.size() < 1 || s.size() > 30) throw std::invalid_argument("product_state_vector: bad size");
  StateVector v;
  v.n_sites = s.size();
  v.amplitudes = CVector::Zero(Eigen::Index{1} << s.size());
  v.amplitudes(config_of(s)) = 1.0;
  v.basis = "sector(" + std::to_string(count_up(s)) + ")";
  return v;
}

Eigen::SparseMatrix<cplx, Eigen::RowMajor> sector_hamiltonian(const ChainSpec& spec,
                                                              const SectorBasis& basis) {
  HamiltonianTerms terms = build_hamiltonian_terms(spec);
  const int n = spec.n_sites;
  std::vector<Eigen::Triplet<cplx>> trips;
  for (std::size_t col = 0; col < basis.size(); ++col) {
    const std::uint32_t c = basis.state(col);
    double diag = 0.0;
    for (const auto& f : terms.field_terms) diag += f.b * ((c & site_bit(n, f.site)) ? -1.0 : 1.0);
    if (diag != 0.0) trips.emplace_back(col, col, diag);
    for (const auto& hop : terms.hop_terms) {
      const std::uint32_t bi = site_bit(n, hop.i), bj = site_bit(n, hop.j);
      if (static_cast<bool>(c & bi) != static_cast<bool>(c & bj)) {
        std::size_t row = basis.index_of(c ^ bi ^ bj);
        trips.emplace_back(row, col, hop.coupling);
      }
    }
  }
  const auto dim = static_cast<Eigen::Index>(basis.size());
  Eigen::SparseMatrix<cplx, Eigen::RowMajor> h(dim, dim);
  h.setFromTriplets(trips.begin(), trips.end());
  return h;
}

StateVector evolve_exact(const ChainSpec& spec, const ProductState& initial, double t,
                         const EvolveOptions& opts) {
  spec.validate();
  if (spec.n_sites > opts.max_sites) {
    throw SizeLimitError("evolve_exact: N=" + std::to_string(spec.n_sites) +
                         " exceeds the exact-simulation limit " + std::to_string(opts.max_sites));
  }
  if (initial.size() != spec.n_sites) throw std::invalid_argument("evolve_exact: size mismatch");
  if (!(t >= 0.0)) throw std::invalid_argument("evolve_exact: t must be >= 0");

  StateVector out = product_state_vector(initial);
  if (t == 0.0) return out;

  SectorBasis basis(spec.n_sites, count_up(initial));
  auto h = sector_hamiltonian(spec, basis);
  CVector v = CVector::Zero(static_cast<Eigen::Index>(basis.size()));
  v(static_cast<Eigen::Index>(basis.index_of(config_of(initial)))) = 1.0;

  ExpmOptions eo;
  eo.tol = opts.krylov_tol;
  eo.max_krylov = opts.max_krylov;
  MatVec mv = [&h](const CVector& x, CVector& y) { y.noalias() = h * x; };
  CVector w = expm_krylov(mv, v, t, eo);

  out.amplitudes.setZero();
  for (std::size_t i = 0; i < basis.size(); ++i)
    out.amplitudes(basis.state(i)) = w(static_cast<Eigen::Index>(i));
  return out;
}

StateVector evolve_dense(const ChainSpec& spec, const StateVector& initial, double t) {
  if (spec.n_sites > 10) throw SizeLimitError("evolve_dense: N > 10");
  if (initial.n_sites != spec.n_sites) throw std::invalid_argument("evolve_dense: size mismatch");
  CMatrix h = assemble_dense(build_hamiltonian_terms(spec));
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  const CMatrix& u = es.eigenvectors();
  CVector coeff = u.adjoint() * initial.amplitudes;
  for (Eigen::Index i = 0; i < coeff.size(); ++i)
    coeff(i) *= std::exp(cplx(0.0, -t * es.eigenvalues()(i)));
  StateVector out;
  out.n_sites = spec.n_sites;
  out.amplitudes = u * coeff;
  out.basis = "full";
  return out;
}

DensityMatrix reduced_density_matrix(const StateVector& state, const std::vector<int>& sites) {
  const int n = state.n_sites;
  const int k = static_cast<int>(sites.size());
  if (k < 1 || k > 8 || k > n) throw std::invalid_argument("reduced_density_matrix: need 1..8 sites");
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (int s : sites) {
    if (s < 0 || s >= n) throw std::invalid_argument("reduced_density_matrix: invalid site " + std::to_string(s));
    if (used[static_cast<std::size_t>(s)]) throw std::invalid_argument("reduced_density_matrix: repeated site");
    used[static_cast<std::size_t>(s)] = true;
  }
  std::vector<int> rest;
  for (int s = 0; s < n; ++s)
    if (!used[static_cast<std::size_t>(s)]) rest.push_back(s);

  const Eigen::Index dk = Eigen::Index{1} << k;
  const Eigen::Index dr = Eigen::Index{1} << (n - k);
  CMatrix m = CMatrix::Zero(dk, dr);
  const std::size_t full = std::size_t{1} << n;
  for (std::size_t c = 0; c < full; ++c) {
    const cplx amp = state.amplitudes(static_cast<Eigen::Index>(c));
    if (amp == cplx(0.0)) continue;
    Eigen::Index a = 0, r = 0;
    for (int s : sites) a = (a << 1) | ((c >> (n - 1 - s)) & 1u);
    for (int s : rest) r = (r << 1) | ((c >> (n - 1 - s)) & 1u);
    m(a, r) = amp;
  }
  DensityMatrix out;
  out.rho = m * m.adjoint();
  return out;
}

std::vector<DensityMatrix> exact_local_reductions(const StateVector& state, int k) {
  if (k < 1 || k > std::min(state.n_sites, 8))
    throw std::invalid_argument("exact_local_reductions: k out of range");
  std::vector<DensityMatrix> out;
  for (int i = 0; i + k <= state.n_sites; ++i) {
    std::vector<int> sites;
    for (int s = i; s < i + k; ++s) sites.push_back(s);
    out.push_back(reduced_density_matrix(state, sites));
  }
  return out;
}

CVector apply_pauli(const CVector& amplitudes, int n_sites, std::string_view pauli) {
  check_pauli_string(pauli, static_cast<std::size_t>(n_sites));
  std::uint32_t flip = 0;
  for (int s = 0; s < n_sites; ++s) {
    char p = pauli[static_cast<std::size_t>(s)];
    if (p == 'X' || p == 'Y') flip |= site_bit(n_sites, s);
  }
  CVector out = CVector::Zero(amplitudes.size());
  const std::uint32_t full = std::uint32_t{1} << n_sites;
  for (std::uint32_t c = 0; c < full; ++c) {
    const cplx amp = amplitudes(c);
    if (amp == cplx(0.0)) continue;
    cplx phase(1.0, 0.0);
    for (int s = 0; s < n_sites; ++s) {
      bool down = c & site_bit(n_sites, s);
      switch (pauli[static_cast<std::size_t>(s)]) {
        case 'Y': phase *= down ? cplx(0.0, -1.0) : cplx(0.0, 1.0); break;
        case 'Z': if (down) phase = -phase; break;
        default: break;
      }
    }
    out(c ^ flip) += phase * amp;
  }
  return out;
}

double pauli_expectation_exact(const StateVector& state, std::string_view pauli) {
  CVector pv = apply_pauli(state.amplitudes, state.n_sites, pauli);
  return state.amplitudes.dot(pv).real();
}

DensityMatrix depolarize(const DensityMatrix& rho, double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("depolarize: p must lie in [0, 1]");
  if (p == 0.0) return rho;
  const int k = rho.n_qubits();
  const Eigen::Index d = rho.dim();
  CMatrix cur = rho.rho;
  for (int q = 0; q < k; ++q) {
    const Eigen::Index bit = Eigen::Index{1} << (k - 1 - q);
    CMatrix next = (1.0 - p) * cur;
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) {
        if ((a & bit) != (b & bit)) continue;
        const Eigen::Index a0 = a & ~bit, b0 = b & ~bit;
        next(a, b) += 0.5 * p * (cur(a0, b0) + cur(a0 | bit, b0 | bit));
      }
    }
    cur = std::move(next);
  }
  return DensityMatrix{cur};
}

DensityMatrix noisy_density_matrix(const StateVector& state, double p) {
  if (state.n_sites > 10) throw SizeLimitError("noisy_density_matrix: N > 10");
  DensityMatrix pure{state.amplitudes * state.amplitudes.adjoint()};
  return depolarize(pure, p);
}

nlohmann::json state_to_json(const StateVector& state) {
  if (state.n_sites > 10) throw SizeLimitError("state_to_json: export limited to N <= 10");
  std::vector<double> flat;
  flat.reserve(2 * state.dim());
  for (Eigen::Index i = 0; i < state.amplitudes.size(); ++i) {
    flat.push_back(state.amplitudes(i).real());
    flat.push_back(state.amplitudes(i).imag());
  }
  return {{"format", "state-v1"},
          {"n_sites", state.n_sites},
          {"basis", state.basis},
          {"amplitudes", flat}};
}

StateVector state_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "state-v1")
      throw FormatError("state: unsupported format " + j.at("format").dump());
    StateVector s;
    s.n_sites = j.at("n_sites").get<int>();
    s.basis = j.at("basis").get<std::string>();
    auto flat = j.at("amplitudes").get<std::vector<double>>();
    if (s.n_sites < 1 || s.n_sites > 10 || flat.size() != (std::size_t{2} << s.n_sites))
      throw FormatError("state: amplitude array has wrong length");
    s.amplitudes.resize(Eigen::Index{1} << s.n_sites);
    for (Eigen::Index i = 0; i < s.amplitudes.size(); ++i)
      s.amplitudes(i) = cplx(flat[static_cast<std::size_t>(2 * i)],
                             flat[static_cast<std::size_t>(2 * i + 1)]);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("state: ") + e.what());
  }
}

}  // namespace mpstomo
