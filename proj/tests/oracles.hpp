#pragma once
// Brute-force reference implementations used only by the tests. They share
// conventions with the library (site 0 most significant, index 0 = up) but
// none of its code paths beyond the plain Pauli matrices.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "mpstomo/common.hpp"
#include "mpstomo/exactsim.hpp"

namespace oracle {

using mpstomo::CMatrix;
using mpstomo::CVector;
using mpstomo::cplx;

inline int bit_of(std::size_t idx, int n, int site) { return static_cast<int>((idx >> (n - 1 - site)) & 1u); }

/// rho[a, b] = sum over the complement of psi(a, rest) conj(psi(b, rest)),
/// by looping over all pairs of basis states.
inline CMatrix partial_trace(const CVector& psi, int n, const std::vector<int>& keep) {
  const std::size_t dim = std::size_t{1} << n;
  const Eigen::Index kd = Eigen::Index{1} << keep.size();
  CMatrix rho = CMatrix::Zero(kd, kd);
  for (std::size_t x = 0; x < dim; ++x) {
    for (std::size_t y = 0; y < dim; ++y) {
      bool same_rest = true;
      for (int s = 0; s < n && same_rest; ++s) {
        bool kept = false;
        for (int q : keep) kept |= q == s;
        if (!kept && bit_of(x, n, s) != bit_of(y, n, s)) same_rest = false;
      }
      if (!same_rest) continue;
      Eigen::Index a = 0, b = 0;
      for (int q : keep) {
        a = 2 * a + bit_of(x, n, q);
        b = 2 * b + bit_of(y, n, q);
      }
      rho(a, b) += psi(static_cast<Eigen::Index>(x)) * std::conj(psi(static_cast<Eigen::Index>(y)));
    }
  }
  return rho;
}

/// Partial trace of a dense density matrix over everything outside `keep`.
inline CMatrix partial_trace_dm(const CMatrix& full, int n, const std::vector<int>& keep) {
  const std::size_t dim = std::size_t{1} << n;
  const Eigen::Index kd = Eigen::Index{1} << keep.size();
  CMatrix rho = CMatrix::Zero(kd, kd);
  for (std::size_t x = 0; x < dim; ++x)
    for (std::size_t y = 0; y < dim; ++y) {
      bool same_rest = true;
      for (int s = 0; s < n && same_rest; ++s) {
        bool kept = false;
        for (int q : keep) kept |= q == s;
        if (!kept && bit_of(x, n, s) != bit_of(y, n, s)) same_rest = false;
      }
      if (!same_rest) continue;
      Eigen::Index a = 0, b = 0;
      for (int q : keep) {
        a = 2 * a + bit_of(x, n, q);
        b = 2 * b + bit_of(y, n, q);
      }
      rho(a, b) += full(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    }
  return rho;
}

/// <psi| P |psi> with P built as an explicit Kronecker product.
inline double pauli_expectation(const CVector& psi, const std::string& word) {
  CMatrix p = CMatrix::Ones(1, 1);
  for (char c : word) p = mpstomo::kron(p, mpstomo::pauli_matrix(c));
  return psi.dot(p * psi).real();
}

inline CVector random_state(int n, std::uint64_t seed) {
  mpstomo::Rng rng(seed);
  CVector v(Eigen::Index{1} << n);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = cplx(rng.normal(), rng.normal());
  return v.normalized();
}

inline CVector ghz(int n) {
  CVector v = CVector::Zero(Eigen::Index{1} << n);
  v(0) = v(v.size() - 1) = 1.0 / std::sqrt(2.0);
  return v;
}

/// Schmidt values across the cut after `left` sites, from an SVD of the
/// reshaped amplitude matrix.
inline std::vector<double> schmidt(const CVector& psi, int n, int left) {
  const Eigen::Index rows = Eigen::Index{1} << left, cols = Eigen::Index{1} << (n - left);
  CMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = psi(r * cols + c);
  Eigen::JacobiSVD<CMatrix> svd(m);
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

/// Exponential of -i H t through a dense eigendecomposition.
inline CVector evolve_dense(const CMatrix& h, const CVector& psi, double t) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  CVector phase(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < phase.size(); ++i) phase(i) = std::exp(cplx(0, -t * es.eigenvalues()(i)));
  return es.eigenvectors() * phase.asDiagonal() * (es.eigenvectors().adjoint() * psi);
}

inline mpstomo::StateVector as_state(const CVector& v, int n) {
  mpstomo::StateVector s;
  s.n_sites = n;
  s.amplitudes = v;
  return s;
}


/// Partial transpose over `sub`, element by element from the bit tuples.
inline CMatrix partial_transpose(const CMatrix& rho, int n, const std::vector<int>& sub) {
  const std::size_t dim = std::size_t{1} << n;
  CMatrix out(rho.rows(), rho.cols());
  for (std::size_t x = 0; x < dim; ++x)
    for (std::size_t y = 0; y < dim; ++y) {
      std::vector<int> bx(static_cast<std::size_t>(n)), by(static_cast<std::size_t>(n));
      for (int s = 0; s < n; ++s) {
        bx[static_cast<std::size_t>(s)] = bit_of(x, n, s);
        by[static_cast<std::size_t>(s)] = bit_of(y, n, s);
      }
      for (int q : sub) std::swap(bx[static_cast<std::size_t>(q)], by[static_cast<std::size_t>(q)]);
      std::size_t x2 = 0, y2 = 0;
      for (int s = 0; s < n; ++s) {
        x2 = 2 * x2 + static_cast<std::size_t>(bx[static_cast<std::size_t>(s)]);
        y2 = 2 * y2 + static_cast<std::size_t>(by[static_cast<std::size_t>(s)]);
      }
      out(static_cast<Eigen::Index>(x2), static_cast<Eigen::Index>(y2)) = rho(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    }
  return out;
}

/// (sum of |eigenvalues| of the partial transpose - 1) / 2.
inline double negativity(const CMatrix& rho, int n, const std::vector<int>& sub) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(partial_transpose(rho, n, sub));
  return 0.5 * (es.eigenvalues().cwiseAbs().sum() - 1.0);
}

}  // namespace oracle
