#include "mpstomo/krylov.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace mpstomo {
namespace {

struct LanczosBasis {
  std::vector<CVector> q;
  std::vector<double> alpha;
  std::vector<double> beta;  // beta[j] couples q[j] and q[j+1]
  double next_beta = 0.0;    // norm of the residual after the last step
  bool invariant = false;
};

void orthogonalize(CVector& w, const std::vector<CVector>& against) {
  // Two passes of classical Gram-Schmidt.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& u : against) w -= u * u.dot(w);
  }
}

LanczosBasis run_lanczos(const MatVec& h, const CVector& start, int m,
                         const std::vector<CVector>& deflate) {
  LanczosBasis b;
  CVector q = start;
  orthogonalize(q, deflate);
  double nrm = q.norm();
  if (nrm == 0.0) {
    b.invariant = true;
    return b;
  }
  q /= nrm;
  CVector w(start.size());
  const double breakdown = 1e-12;
  for (int j = 0; j < m; ++j) {
    b.q.push_back(q);
    h(q, w);
    double a = q.dot(w).real();
    b.alpha.push_back(a);
    const double scale = std::max(w.norm(), 1.0);
    orthogonalize(w, deflate);
    orthogonalize(w, b.q);
    double beta = w.norm();
    if (beta < breakdown * scale) {
      b.invariant = true;
      b.next_beta = 0.0;
      return b;
    }
    if (j + 1 < m) b.beta.push_back(beta);
    b.next_beta = beta;
    // A small beta amplifies rounding left along the deflated directions;
    // clean the normalized vector once more.
    q = w / beta;
    orthogonalize(q, deflate);
    orthogonalize(q, b.q);
    q.normalize();
  }
  return b;
}

Eigen::SelfAdjointEigenSolver<RMatrix> tridiag_eigen(const LanczosBasis& b) {
  const auto m = static_cast<Eigen::Index>(b.alpha.size());
  RMatrix t = RMatrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    t(i, i) = b.alpha[static_cast<std::size_t>(i)];
    if (i + 1 < m) {
      t(i, i + 1) = b.beta[static_cast<std::size_t>(i)];
      t(i + 1, i) = b.beta[static_cast<std::size_t>(i)];
    }
  }
  return Eigen::SelfAdjointEigenSolver<RMatrix>(t);
}

}  // namespace

CVector expm_krylov(const MatVec& h, const CVector& v, double t, const ExpmOptions& opts,
                    ExpmStats* stats) {
  CVector state = v;
  double remaining = t;
  double tau = t;
  int substeps = 0;
  double max_err = 0.0;
  const double min_tau = std::abs(t) * 1e-12;
  while (remaining > 0.0) {
    tau = std::min(tau, remaining);
    double norm0 = state.norm();
    if (norm0 == 0.0) break;
    LanczosBasis b = run_lanczos(h, state, opts.max_krylov, {});
    auto eig = tridiag_eigen(b);
    const auto m = static_cast<Eigen::Index>(b.alpha.size());
    bool accepted = false;
    while (!accepted) {
      // c = exp(-i tau T) e1 in the Lanczos basis.
      CVector phase(m);
      for (Eigen::Index i = 0; i < m; ++i)
        phase(i) = std::exp(cplx(0.0, -tau * eig.eigenvalues()(i)));
      CVector c = eig.eigenvectors().cast<cplx>() *
                  (phase.asDiagonal() * eig.eigenvectors().row(0).transpose().cast<cplx>());
      double err = b.invariant ? 0.0 : b.next_beta * std::abs(c(m - 1));
      if (err <= opts.tol) {
        CVector next = CVector::Zero(state.size());
        for (Eigen::Index i = 0; i < m; ++i) next += c(i) * b.q[static_cast<std::size_t>(i)];
        state = norm0 * next;
        remaining -= tau;
        max_err = std::max(max_err, err);
        ++substeps;
        accepted = true;
        if (err < opts.tol * 1e-3) tau *= 2.0;
      } else {
        tau *= 0.5;
        if (tau < min_tau || substeps >= opts.max_substeps) {
          throw ConvergenceError("expm_krylov: step size collapsed", err);
        }
      }
    }
  }
  if (stats) {
    stats->substeps = substeps;
    stats->max_error = max_err;
  }
  return state;
}

EigenPair lowest_eigenpair(const MatVec& h, Eigen::Index dim, const std::vector<CVector>& deflate,
                           const LanczosOptions& opts) {
  if (static_cast<Eigen::Index>(deflate.size()) >= dim) {
    throw std::invalid_argument("lowest_eigenpair: deflation space fills the whole space");
  }
  Rng rng(opts.seed);
  CVector start(dim);
  for (Eigen::Index i = 0; i < dim; ++i) start(i) = cplx(rng.normal(), rng.normal());
  const int m = static_cast<int>(
      std::min<Eigen::Index>(opts.krylov_dim, dim - static_cast<Eigen::Index>(deflate.size())));
  EigenPair best;
  CVector hv(dim);
  for (int restart = 0; restart <= opts.max_restarts; ++restart) {
    LanczosBasis b = run_lanczos(h, start, m, deflate);
    auto eig = tridiag_eigen(b);
    const auto mm = static_cast<Eigen::Index>(b.alpha.size());
    RVector y = eig.eigenvectors().col(0);
    CVector ritz = CVector::Zero(dim);
    for (Eigen::Index i = 0; i < mm; ++i) ritz += y(i) * b.q[static_cast<std::size_t>(i)];
    orthogonalize(ritz, deflate);
    ritz.normalize();
    // Explicit residual; the Lanczos estimate drifts once the basis loses orthogonality.
    h(ritz, hv);
    double theta = ritz.dot(hv).real();
    CVector r = hv - theta * ritz;
    orthogonalize(r, deflate);
    best.value = theta;
    best.vector = ritz;
    best.residual = r.norm();
    if (best.residual <= opts.tol || b.invariant) return best;
    start = ritz;
  }
  throw ConvergenceError("lowest_eigenpair: Lanczos did not converge", best.residual);
}

}  // namespace mpstomo
