#pragma once

#include <functional>
#include <vector>

#include "mpstomo/common.hpp"

namespace mpstomo {

/// y = H x for a Hermitian operator given matrix-free.
using MatVec = std::function<void(const CVector& x, CVector& y)>;

struct ExpmOptions {
  double tol = 1e-10;     // per-substep error estimate bound
  int max_krylov = 40;
  int max_substeps = 1 << 16;
};

struct ExpmStats {
  int substeps = 0;
  double max_error = 0.0;
};

/// exp(-i t H) v by Lanczos with adaptive substep splitting. Throws
/// ConvergenceError if the step size collapses without meeting tol.
CVector expm_krylov(const MatVec& h, const CVector& v, double t, const ExpmOptions& opts = {},
                    ExpmStats* stats = nullptr);

struct LanczosOptions {
  int krylov_dim = 80;
  int max_restarts = 400;
  double tol = 1e-10;  // residual norm ||H v - theta v||
  std::uint64_t seed = 0x5eed;
};

struct EigenPair {
  double value = 0.0;
  CVector vector;
  double residual = 0.0;
};

/// Lowest eigenpair of H restricted to the orthogonal complement of `deflate`
/// (which must be orthonormal). Restarted Lanczos, full reorthogonalization.
EigenPair lowest_eigenpair(const MatVec& h, Eigen::Index dim, const std::vector<CVector>& deflate,
                           const LanczosOptions& opts = {});

}  // namespace mpstomo
