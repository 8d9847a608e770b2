#include "mpstomo/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace mpstomo {
namespace {

using Tensors = std::vector<SiteTensor>;

CVector flatten(const SiteTensor& a) {
  const Eigen::Index sz = a[0].size();
  CVector v(2 * sz);
  v.head(sz) = Eigen::Map<const CVector>(a[0].data(), sz);
  v.tail(sz) = Eigen::Map<const CVector>(a[1].data(), sz);
  return v;
}

SiteTensor unflatten(const CVector& v, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index sz = rows * cols;
  SiteTensor a{CMatrix(rows, cols), CMatrix(rows, cols)};
  a[0] = Eigen::Map<const CMatrix>(v.data(), rows, cols);
  a[1] = Eigen::Map<const CMatrix>(v.data() + sz, rows, cols);
  return a;
}

double rdot(const CVector& a, const CVector& b) { return a.dot(b).real(); }

// Moves the orthogonality center one site with a QR step; the state is unchanged.
void shift_right(Tensors& t, int c) {
  const auto& a = t[static_cast<std::size_t>(c)];
  const Eigen::Index dl = a[0].rows();
  CMatrix m(2 * dl, a[0].cols());
  m.topRows(dl) = a[0];
  m.bottomRows(dl) = a[1];
  Eigen::HouseholderQR<CMatrix> qr(m);
  const Eigen::Index r = std::min(m.rows(), m.cols());
  CMatrix q = qr.householderQ() * CMatrix::Identity(m.rows(), r);
  CMatrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  t[static_cast<std::size_t>(c)] = {q.topRows(dl), q.bottomRows(dl)};
  for (auto& x : t[static_cast<std::size_t>(c + 1)]) x = rr * x;
}

void shift_left(Tensors& t, int c) {
  const auto& a = t[static_cast<std::size_t>(c)];
  const Eigen::Index dr = a[0].cols();
  CMatrix m(a[0].rows(), 2 * dr);
  m.leftCols(dr) = a[0];
  m.rightCols(dr) = a[1];
  CMatrix ma = m.adjoint();
  Eigen::HouseholderQR<CMatrix> qr(ma);
  const Eigen::Index r = std::min(ma.rows(), ma.cols());
  CMatrix q = qr.householderQ() * CMatrix::Identity(ma.rows(), r);
  CMatrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  CMatrix qa = q.adjoint();
  t[static_cast<std::size_t>(c)] = {qa.leftCols(dr), qa.rightCols(dr)};
  CMatrix carry = rr.adjoint();
  for (auto& x : t[static_cast<std::size_t>(c - 1)]) x = x * carry;
}

std::vector<CMatrix> left_envs(const Tensors& t) {
  std::vector<CMatrix> env{CMatrix::Ones(1, 1)};
  for (const auto& a : t) env.push_back(a[0].adjoint() * env.back() * a[0] + a[1].adjoint() * env.back() * a[1]);
  return env;
}

std::vector<CMatrix> right_envs(const Tensors& t) {
  std::vector<CMatrix> env(t.size() + 1);
  env.back() = CMatrix::Ones(1, 1);
  for (std::size_t i = t.size(); i-- > 0;) {
    const auto& a = t[i];
    env[i] = a[0] * env[i + 1] * a[0].adjoint() + a[1] * env[i + 1] * a[1].adjoint();
  }
  return env;
}

std::vector<CMatrix> strings(const Tensors& t, int first, int k) {
  const auto d = t[static_cast<std::size_t>(first)][0].rows();
  std::vector<CMatrix> w{CMatrix::Identity(d, d)};
  for (int j = first; j < first + k; ++j) {
    std::vector<CMatrix> next;
    next.reserve(w.size() * 2);
    for (const auto& m : w) {
      next.push_back(m * t[static_cast<std::size_t>(j)][0]);
      next.push_back(m * t[static_cast<std::size_t>(j)][1]);
    }
    w = std::move(next);
  }
  return w;
}

// Cost sum_i ||rho_i / n - T_i||^2 and, optionally, its real-coordinate
// gradient with respect to site c. No gauge condition is assumed.
double cost_impl(const Tensors& t, int c, const std::vector<CMatrix>& targets, int k, SiteTensor* grad) {
  const int n_sites = static_cast<int>(t.size());
  const auto left = left_envs(t);
  const auto right = right_envs(t);
  const double norm = left.back()(0, 0).real();
  const int n_win = n_sites - k + 1;
  const auto dim = static_cast<Eigen::Index>(1) << k;

  double cost = 0.0;
  double dot = 0.0;
  SiteTensor g;
  const auto& ac = t[static_cast<std::size_t>(c)];
  if (grad) g = {CMatrix::Zero(ac[0].rows(), ac[0].cols()), CMatrix::Zero(ac[0].rows(), ac[0].cols())};
  // Operator environments accumulated per bond, before propagation.
  std::vector<CMatrix> lo_at(static_cast<std::size_t>(n_sites + 1));
  std::vector<CMatrix> ro_at(static_cast<std::size_t>(n_sites + 1));

  for (int i = 0; i < n_win; ++i) {
    const auto w = strings(t, i, k);
    const CMatrix& l = left[static_cast<std::size_t>(i)];
    const CMatrix& r = right[static_cast<std::size_t>(i + k)];
    const Eigen::Index dl = l.rows(), dr = r.rows();
    CMatrix wm(dl * dr, dim), xm(dl * dr, dim);
    for (Eigen::Index s = 0; s < dim; ++s) {
      const CMatrix& ws = w[static_cast<std::size_t>(s)];
      CMatrix x = l * ws * r;
      wm.col(s) = Eigen::Map<const CVector>(ws.data(), dl * dr);
      xm.col(s) = Eigen::Map<const CVector>(x.data(), dl * dr);
    }
    CMatrix rho = (wm.adjoint() * xm).transpose() / norm;
    CMatrix delta = rho - targets[static_cast<std::size_t>(i)];
    cost += delta.squaredNorm();
    if (!grad) continue;
    dot += (delta * rho).trace().real();
    CMatrix xs = wm * delta.transpose();  // column s' = vec(sum_s delta[s', s] W_s)
    auto x_of = [&](Eigen::Index sp) { return Eigen::Map<const CMatrix>(xs.col(sp).data(), dl, dr); };
    if (i + k <= c) {
      CMatrix lo = CMatrix::Zero(dr, dr);
      for (Eigen::Index sp = 0; sp < dim; ++sp) lo += w[static_cast<std::size_t>(sp)].adjoint() * l * x_of(sp);
      auto& slot = lo_at[static_cast<std::size_t>(i + k)];
      slot = slot.size() ? CMatrix(slot + lo) : lo;
    } else if (i > c) {
      CMatrix ro = CMatrix::Zero(dl, dl);
      for (Eigen::Index sp = 0; sp < dim; ++sp) ro += x_of(sp) * r * w[static_cast<std::size_t>(sp)].adjoint();
      auto& slot = ro_at[static_cast<std::size_t>(i)];
      slot = slot.size() ? CMatrix(slot + ro) : ro;
    } else {
      const int p = c - i;
      const int q = k - p - 1;
      // Prefix products over sites i..c-1 and suffix products over c+1..i+k-1.
      std::vector<CMatrix> pre{CMatrix::Identity(dl, dl)};
      for (int j = i; j < c; ++j) {
        std::vector<CMatrix> next;
        for (const auto& m : pre) {
          next.push_back(m * t[static_cast<std::size_t>(j)][0]);
          next.push_back(m * t[static_cast<std::size_t>(j)][1]);
        }
        pre = std::move(next);
      }
      std::vector<CMatrix> suf{CMatrix::Identity(dr, dr)};
      for (int j = i + k - 1; j > c; --j) {
        std::vector<CMatrix> next(suf.size() * 2);
        const std::size_t half = suf.size();
        for (std::size_t b = 0; b < half; ++b) {
          // New leading bit belongs to site j.
          next[b] = t[static_cast<std::size_t>(j)][0] * suf[b];
          next[half + b] = t[static_cast<std::size_t>(j)][1] * suf[b];
        }
        suf = std::move(next);
      }
      for (std::size_t a = 0; a < pre.size(); ++a) {
        CMatrix pl = pre[a].adjoint() * l;
        for (int sigma = 0; sigma < 2; ++sigma) {
          for (std::size_t b = 0; b < suf.size(); ++b) {
            const auto sp = static_cast<Eigen::Index>((a << (q + 1)) | (static_cast<std::size_t>(sigma) << q) | b);
            g[static_cast<std::size_t>(sigma)] += pl * x_of(sp) * r * suf[b].adjoint();
          }
        }
      }
    }
  }
  if (!grad) return cost;

  CMatrix lo_sum = CMatrix::Zero(1, 1);
  for (int b = 1; b <= c; ++b) {
    const auto& a = t[static_cast<std::size_t>(b - 1)];
    lo_sum = a[0].adjoint() * lo_sum * a[0] + a[1].adjoint() * lo_sum * a[1];
    if (lo_at[static_cast<std::size_t>(b)].size()) lo_sum += lo_at[static_cast<std::size_t>(b)];
  }
  CMatrix ro_sum = CMatrix::Zero(1, 1);
  for (int b = n_sites - 1; b >= c + 1; --b) {
    const auto& a = t[static_cast<std::size_t>(b)];
    ro_sum = a[0] * ro_sum * a[0].adjoint() + a[1] * ro_sum * a[1].adjoint();
    if (ro_at[static_cast<std::size_t>(b)].size()) ro_sum += ro_at[static_cast<std::size_t>(b)];
  }
  const CMatrix& lc = left[static_cast<std::size_t>(c)];
  const CMatrix& rc = right[static_cast<std::size_t>(c + 1)];
  for (int s = 0; s < 2; ++s) {
    auto& gs = g[static_cast<std::size_t>(s)];
    if (c > 0) gs += lo_sum * ac[static_cast<std::size_t>(s)] * rc;
    if (c < n_sites - 1) gs += lc * ac[static_cast<std::size_t>(s)] * ro_sum;
    gs = (4.0 / norm) * (gs - dot * (lc * ac[static_cast<std::size_t>(s)] * rc));
  }
  *grad = std::move(g);
  return cost;
}

// Limited-memory BFGS over one site tensor with Armijo backtracking.
// Only decreasing steps are taken.
double optimize_site(Tensors& t, int c, const std::vector<CMatrix>& targets, int k, int iters) {
  auto& site = t[static_cast<std::size_t>(c)];
  const Eigen::Index rows = site[0].rows(), cols = site[0].cols();
  SiteTensor gt;
  double f = cost_impl(t, c, targets, k, &gt);
  CVector x = flatten(site);
  CVector g = flatten(gt);
  std::deque<CVector> s_hist, y_hist;
  std::deque<double> rho_hist;
  const int memory = 6;
  for (int it = 0; it < iters; ++it) {
    const double gnorm = g.norm();
    if (gnorm < 1e-15 || f < 1e-300) break;
    // Two-loop recursion.
    CVector d = -g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t j = s_hist.size(); j-- > 0;) {
      alpha[j] = rho_hist[j] * rdot(s_hist[j], d);
      d -= alpha[j] * y_hist[j];
    }
    if (!s_hist.empty()) d *= rdot(s_hist.back(), y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t j = 0; j < s_hist.size(); ++j) {
      const double beta = rho_hist[j] * rdot(y_hist[j], d);
      d += (alpha[j] - beta) * s_hist[j];
    }
    double slope = rdot(g, d);
    double step = 1.0;
    if (slope >= 0.0 || s_hist.empty()) {
      d = -g;
      slope = -gnorm * gnorm;
      step = std::min(1.0, x.norm() / gnorm);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    bool accepted = false;
    CVector x_new;
    double f_new = f;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * d;
      site = unflatten(x_new, rows, cols);
      f_new = cost_impl(t, c, targets, k, nullptr);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !(f_new < f)) {
      site = unflatten(x, rows, cols);
      break;
    }
    SiteTensor gnew_t;
    f_new = cost_impl(t, c, targets, k, &gnew_t);
    CVector g_new = flatten(gnew_t);
    CVector sv = x_new - x, yv = g_new - g;
    const double sy = rdot(sv, yv);
    if (sy > 1e-14 * sv.norm() * yv.norm()) {
      s_hist.push_back(sv);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double gain = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    if (gain <= 1e-15 * f) break;
  }
  // The cost is scale invariant; keep the state normalized at the center.
  const double xn = x.norm();
  site = unflatten(x / xn, rows, cols);
  return f;
}

std::vector<int> bond_caps(int n, int d) {
  std::vector<int> caps;
  for (int b = 1; b < n; ++b) {
    const int e = std::min(b, n - b);
    caps.push_back(e >= 30 ? d : std::min(d, 1 << e));
  }
  return caps;
}

Tensors initial_tensors(const std::vector<WindowEstimate>& est, int n, int d, int restart, std::uint64_t seed) {
  const auto caps = bond_caps(n, d);
  auto bond = [&](int b) { return (b == 0 || b == n) ? 1 : caps[static_cast<std::size_t>(b - 1)]; };
  Rng rng(derive_seed(seed, 0x7265636fULL, static_cast<std::uint64_t>(restart)));
  const int k = est.front().window.k;
  Tensors t;
  for (int j = 0; j < n; ++j) {
    const Eigen::Index dl = bond(j), dr = bond(j + 1);
    SiteTensor a{CMatrix::Zero(dl, dr), CMatrix::Zero(dl, dr)};
    if (restart == 0) {
      const int src = std::min(j, n - k);
      const CMatrix m = partial_trace_range(est[static_cast<std::size_t>(src)].rho.rho, k, j - src, 1);
      Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()));
      const CVector v = es.eigenvectors().col(1);
      a[0](0, 0) = v(0);
      a[1](0, 0) = v(1);
      // Small seeded perturbation; the zero-padded product point is a saddle.
      for (auto& x : a)
        for (Eigen::Index r = 0; r < dl; ++r)
          for (Eigen::Index c = 0; c < dr; ++c) x(r, c) += 1e-2 * cplx(rng.normal(), rng.normal());
    } else {
      for (auto& x : a)
        for (Eigen::Index r = 0; r < dl; ++r)
          for (Eigen::Index c = 0; c < dr; ++c) x(r, c) = cplx(rng.normal(), rng.normal());
    }
    t.push_back(std::move(a));
  }
  return t;
}

struct RestartResult {
  Tensors tensors;
  double cost;
  int sweeps;
  std::vector<double> sweep_costs;
};

RestartResult run_restart(Tensors t, const std::vector<CMatrix>& targets, int k,
                          const ReconstructionOptions& opts) {
  const int n = static_cast<int>(t.size());
  t = canonicalize(normalize(Mps(t)), 0).tensors();
  RestartResult out;
  double cost = cost_impl(t, 0, targets, k, nullptr);
  out.sweep_costs.push_back(cost);
  int sweeps = 0;
  while (sweeps < opts.max_sweeps && cost > opts.cost_floor) {
    for (int c = 0; c + 1 < n; ++c) {
      optimize_site(t, c, targets, k, opts.inner_iters);
      shift_right(t, c);
    }
    for (int c = n - 1; c > 0; --c) {
      optimize_site(t, c, targets, k, opts.inner_iters);
      shift_left(t, c);
    }
    ++sweeps;
    const double next = cost_impl(t, 0, targets, k, nullptr);
    out.sweep_costs.push_back(next);
    const double gain = cost - next;
    cost = next;
    if (gain < opts.cost_tol * std::max(cost + gain, 1e-300)) break;
  }
  out.tensors = std::move(t);
  out.cost = cost;
  out.sweeps = sweeps;
  return out;
}

void check_estimates(const std::vector<WindowEstimate>& estimates) {
  if (estimates.empty()) throw std::invalid_argument("reconstruct: no window estimates");
  const int k = estimates.front().window.k;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& e = estimates[i];
    if (e.window.k != k || e.window.first != static_cast<int>(i))
      throw std::invalid_argument("reconstruct: estimates must be consecutive windows of equal width");
    if (e.rho.dim() != (1 << k) || !e.rho.is_physical(1e-8))
      throw std::invalid_argument("reconstruct: degenerate input at window " + std::to_string(i) +
                                  " (not a density matrix)");
  }
}

// Rotated tensors B^t = sum_s U[t, s] A^s for one measurement axis.
SiteTensor rotate(const SiteTensor& a, char axis) {
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Matrix2cd u;
  if (axis == 'X') u << s, s, s, -s;
  else if (axis == 'Y') u << s, cplx(0, -s), s, cplx(0, s);
  else u.setIdentity();
  return {u(0, 0) * a[0] + u(0, 1) * a[1], u(1, 0) * a[0] + u(1, 1) * a[1]};
}

struct ParsedRecord {
  std::string axes;
  std::vector<std::vector<std::uint8_t>> outcomes;  // local index after rotation (0 = +1)
  std::vector<double> counts;
};

std::vector<ParsedRecord> parse_records(const std::vector<ShotRecord>& records, int n) {
  std::vector<ParsedRecord> out;
  for (const auto& r : records) {
    if (static_cast<int>(r.setting.axes.size()) != n)
      throw std::invalid_argument("likelihood: record length does not match the MPS");
    ParsedRecord p;
    p.axes = r.setting.axes;
    for (const auto& [o, cnt] : r.counts) {
      std::vector<std::uint8_t> bits(o.size());
      for (std::size_t j = 0; j < o.size(); ++j) bits[j] = o[j] == '1' ? 0 : 1;
      p.outcomes.push_back(std::move(bits));
      p.counts.push_back(static_cast<double>(cnt));
    }
    out.push_back(std::move(p));
  }
  return out;
}

constexpr double kProbFloor = 1e-12;

// Log-likelihood and optional real-coordinate gradient at site c.
double loglik_impl(const Tensors& t, int c, const std::vector<ParsedRecord>& recs, int* floored,
                   SiteTensor* grad) {
  const int n = static_cast<int>(t.size());
  const double norm = left_envs(t).back()(0, 0).real();
  double ll = 0.0;
  int nfloor = 0;
  const auto& ac = t[static_cast<std::size_t>(c)];
  SiteTensor g;
  double total = 0.0;
  if (grad) g = {CMatrix::Zero(ac[0].rows(), ac[0].cols()), CMatrix::Zero(ac[0].rows(), ac[0].cols())};
  const double s = 1.0 / std::sqrt(2.0);
  for (const auto& rec : recs) {
    std::vector<SiteTensor> b;
    for (int j = 0; j < n; ++j) b.push_back(rotate(t[static_cast<std::size_t>(j)], rec.axes[static_cast<std::size_t>(j)]));
    Eigen::Matrix2cd u;
    const char axis = rec.axes[static_cast<std::size_t>(c)];
    if (axis == 'X') u << s, s, s, -s;
    else if (axis == 'Y') u << s, cplx(0, -s), s, cplx(0, s);
    else u.setIdentity();
    for (std::size_t o = 0; o < rec.outcomes.size(); ++o) {
      const auto& bits = rec.outcomes[o];
      const double cnt = rec.counts[o];
      CMatrix l = CMatrix::Ones(1, 1);
      for (int j = 0; j < c; ++j) l = l * b[static_cast<std::size_t>(j)][bits[static_cast<std::size_t>(j)]];
      CMatrix r = CMatrix::Ones(1, 1);
      for (int j = n - 1; j > c; --j) r = b[static_cast<std::size_t>(j)][bits[static_cast<std::size_t>(j)]] * r;
      const int tc = bits[static_cast<std::size_t>(c)];
      const cplx amp = (l * b[static_cast<std::size_t>(c)][tc] * r)(0, 0);
      const double p = std::norm(amp) / norm;
      if (p < kProbFloor) {
        ll += cnt * std::log(kProbFloor);
        ++nfloor;
        continue;
      }
      ll += cnt * std::log(p);
      total += cnt;
      if (grad) {
        CMatrix outer = l.adjoint() * r.adjoint();
        const double w = cnt / (p * norm);
        for (int sg = 0; sg < 2; ++sg)
          g[static_cast<std::size_t>(sg)] += w * amp * std::conj(u(tc, sg)) * outer;
      }
    }
  }
  if (grad) {
    // d log(1/n): the canonical-gauge normalization derivative, taken generally.
    const auto left = left_envs(t);
    const auto right = right_envs(t);
    for (int sg = 0; sg < 2; ++sg) {
      auto& gs = g[static_cast<std::size_t>(sg)];
      gs -= (total / norm) * (left[static_cast<std::size_t>(c)] * ac[static_cast<std::size_t>(sg)] *
                              right[static_cast<std::size_t>(c + 1)]);
      gs *= 2.0;
    }
    *grad = std::move(g);
  }
  if (floored) *floored = nfloor;
  return ll;
}

}  // namespace

void ReconstructionOptions::validate() const {
  if (bond_dim < 0) throw ConfigError("bond_dim must be >= 1 (or 0 for the default)");
  if (restarts < 1) throw ConfigError("restarts must be >= 1");
  if (max_sweeps < 1) throw ConfigError("max_sweeps must be >= 1");
  if (inner_iters < 1) throw ConfigError("inner_iters must be >= 1");
  if (!(cost_tol >= 0.0)) throw ConfigError("cost_tol must be >= 0");
  if (stage2_max_iters < 0) throw ConfigError("stage2_max_iters must be >= 0");
}

double reduction_cost(const Mps& mps, const std::vector<WindowEstimate>& estimates) {
  if (estimates.empty()) return 0.0;
  const int k = estimates.front().window.k;
  if (static_cast<int>(estimates.size()) != mps.size() - k + 1)
    throw std::invalid_argument("reduction_cost: expected N-k+1 window estimates");
  const auto model = local_reductions_mps(mps, k);
  double c = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (estimates[i].window.k != k || estimates[i].rho.dim() != model[i].dim())
      throw std::invalid_argument("reduction_cost: window shape mismatch");
    c += (model[i].rho - estimates[i].rho.rho).squaredNorm();
  }
  return c;
}

double reduction_cost_gradient(const Mps& mps, int center, const std::vector<CMatrix>& targets,
                               SiteTensor* gradient) {
  if (targets.empty()) throw std::invalid_argument("reduction_cost_gradient: no targets");
  int k = 0;
  while ((Eigen::Index{1} << k) < targets.front().rows()) ++k;
  return cost_impl(mps.tensors(), center, targets, k, gradient);
}

ReconstructionReport reconstruct_variational(const std::vector<WindowEstimate>& estimates,
                                             const ReconstructionOptions& opts) {
  opts.validate();
  check_estimates(estimates);
  const int k = estimates.front().window.k;
  const int n = static_cast<int>(estimates.size()) + k - 1;
  const int d = opts.resolved_bond(k);
  std::vector<CMatrix> targets;
  for (const auto& e : estimates) targets.push_back(e.rho.rho);

  ReconstructionReport rep;
  RestartResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    RestartResult res = run_restart(initial_tensors(estimates, n, d, r, opts.seed), targets, k, opts);
    rep.restart_costs.push_back(res.cost);
    if (res.cost < best.cost) {
      best = std::move(res);
      rep.best_restart = r;
    }
  }
  rep.mps = canonicalize(normalize(Mps(best.tensors)), 0);
  rep.sweeps_used = best.sweeps;
  rep.sweep_costs = best.sweep_costs;
  const auto model = local_reductions_mps(rep.mps, k);
  rep.final_cost = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double res = (model[i].rho - targets[i]).norm();
    rep.per_window_residuals.push_back(res);
    rep.final_cost += res * res;
  }
  return rep;
}

double log_likelihood(const Mps& mps, const std::vector<ShotRecord>& records, int* floored) {
  const auto recs = parse_records(records, mps.size());
  return loglik_impl(mps.tensors(), 0, recs, floored, nullptr);
}

ReconstructionReport refine_likelihood(const Mps& mps, const std::vector<ShotRecord>& records,
                                       const ReconstructionOptions& opts) {
  opts.validate();
  const int n = mps.size();
  const auto recs = parse_records(records, n);
  double total = 0.0;
  for (const auto& r : recs)
    for (double c : r.counts) total += c;
  if (total <= 0.0) throw std::invalid_argument("refine_likelihood: no shots");
  Tensors t = canonicalize(normalize(mps), 0).tensors();
  double ll = loglik_impl(t, 0, recs, nullptr, nullptr);
  ReconstructionReport rep;
  rep.stage2_initial_loglik = ll;
  int iters = 0;
  auto visit = [&](int c) {
    auto& site = t[static_cast<std::size_t>(c)];
    for (int it = 0; it < 3; ++it) {
      SiteTensor g;
      const double cur = loglik_impl(t, c, recs, nullptr, &g);
      CVector gv = flatten(g) / total;
      const double gn = gv.norm();
      if (gn < 1e-12) break;
      const CVector x = flatten(site);
      const Eigen::Index rows = site[0].rows(), cols = site[0].cols();
      double step = std::min(1.0, 0.5 * x.norm() / gn);
      bool accepted = false;
      for (int ls = 0; ls < 30; ++ls) {
        CVector xn = x + step * gv;
        site = unflatten(xn / xn.norm(), rows, cols);
        const double trial = loglik_impl(t, c, recs, nullptr, nullptr);
        if (trial > cur + 1e-4 * step * gn * gn * total) {
          ll = trial;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        site = unflatten(x, rows, cols);
        break;
      }
    }
  };
  for (; iters < opts.stage2_max_iters; ++iters) {
    const double before = ll;
    for (int c = 0; c + 1 < n; ++c) {
      visit(c);
      shift_right(t, c);
    }
    for (int c = n - 1; c > 0; --c) {
      visit(c);
      shift_left(t, c);
    }
    ll = loglik_impl(t, 0, recs, nullptr, nullptr);
    if (ll - before < 1e-9 * std::abs(before)) {
      ++iters;
      break;
    }
  }
  int floored = 0;
  ll = loglik_impl(t, 0, recs, &floored, nullptr);
  rep.mps = canonicalize(normalize(Mps(t)), 0);
  rep.stage2_loglik = ll;
  rep.stage2_floored = floored;
  rep.stage2_iters = iters;
  return rep;
}

ReconstructionReport idealized_pipeline(const ChainSpec& spec, double t, int k,
                                        const ReconstructionOptions& opts, double noise_p) {
  spec.validate();
  if (spec.n_sites > kMaxExactSites) throw SizeLimitError("idealized_pipeline: N > 16");
  const StateVector state = evolve_exact(spec, neel_state(spec.n_sites), t);
  auto reductions = exact_local_reductions(state, k);
  if (noise_p > 0.0)
    for (auto& r : reductions) r = depolarize(r, noise_p);
  return reconstruct_variational(exact_estimates(reductions), opts);
}

nlohmann::json report_to_json(const ReconstructionReport& r) {
  nlohmann::json j{{"format", "recon-v1"},
                   {"mps", mps_to_json(r.mps)},
                   {"final_cost", r.final_cost},
                   {"per_window_residuals", r.per_window_residuals},
                   {"sweeps_used", r.sweeps_used},
                   {"restart_costs", r.restart_costs},
                   {"best_restart", r.best_restart},
                   {"sweep_costs", r.sweep_costs},
                   {"stage2_floored", r.stage2_floored},
                   {"stage2_iters", r.stage2_iters}};
  j["stage2_loglik"] = r.stage2_loglik ? nlohmann::json(*r.stage2_loglik) : nlohmann::json(nullptr);
  j["stage2_initial_loglik"] =
      r.stage2_initial_loglik ? nlohmann::json(*r.stage2_initial_loglik) : nlohmann::json(nullptr);
  return j;
}

ReconstructionReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "recon-v1")
      throw FormatError("unsupported reconstruction format " + j.at("format").dump());
    ReconstructionReport r;
    r.mps = mps_from_json(j.at("mps"));
    r.final_cost = j.at("final_cost").get<double>();
    r.per_window_residuals = j.at("per_window_residuals").get<std::vector<double>>();
    r.sweeps_used = j.at("sweeps_used").get<int>();
    r.restart_costs = j.at("restart_costs").get<std::vector<double>>();
    r.best_restart = j.value("best_restart", 0);
    r.sweep_costs = j.value("sweep_costs", std::vector<double>{});
    r.stage2_floored = j.value("stage2_floored", 0);
    r.stage2_iters = j.value("stage2_iters", 0);
    if (!j.at("stage2_loglik").is_null()) r.stage2_loglik = j["stage2_loglik"].get<double>();
    if (j.contains("stage2_initial_loglik") && !j["stage2_initial_loglik"].is_null())
      r.stage2_initial_loglik = j["stage2_initial_loglik"].get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(e.what());
  }
}

}  // namespace mpstomo
