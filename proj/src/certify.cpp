#include "mpstomo/certify.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "mpstomo/exactsim.hpp"

namespace mpstomo {

namespace {

// Bond b joins sites b and b+1; windows touching the chain ends see bond 1.
int left_bond(const std::vector<int>& bonds, int first) { return first == 0 ? 1 : bonds[static_cast<std::size_t>(first - 1)]; }

int right_bond(const std::vector<int>& bonds, int first, int w) {
  const int last = first + w - 1;
  return last == static_cast<int>(bonds.size()) ? 1 : bonds[static_cast<std::size_t>(last)];
}

bool all_windows_full_rank(const std::vector<int>& bonds, int n, int w) {
  for (int f = 0; f + w <= n; ++f)
    if (static_cast<long>(left_bond(bonds, f)) * right_bond(bonds, f, w) < (1L << w)) return false;
  return true;
}

double window_energy(const CMatrix& rho, const CMatrix& h) { return (rho * h).trace().real(); }

CMatrix dense_parent(const std::vector<WindowProjectorTerm>& terms, int n) {
  const Eigen::Index dim = Eigen::Index{1} << n;
  CMatrix h(dim, dim);
  CVector e = CVector::Zero(dim), col(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    e(j) = 1.0;
    apply_parent_hamiltonian(terms, n, e, col);
    h.col(j) = col;
    e(j) = 0.0;
  }
  return 0.5 * (h + h.adjoint());
}

GapInfo dense_gap(const std::vector<WindowProjectorTerm>& terms, int n, const CVector* ground, double tol) {
  GapInfo g;
  g.method = "dense";
  CMatrix h = dense_parent(terms, n);
  if (ground != nullptr) {
    const CVector& psi = *ground;
    const CVector hp = h * psi;
    g.ground_energy = psi.dot(hp).real();
    g.leak = hp.norm();
    // Compress to the complement of psi and lift psi far above the spectrum.
    const CMatrix p = CMatrix::Identity(h.rows(), h.cols()) - psi * psi.adjoint();
    const double lift = static_cast<double>(terms.size()) + 10.0;
    CMatrix m = p * h * p + lift * psi * psi.adjoint();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    const RVector& ev = es.eigenvalues();
    g.gap = ev(0);
    g.degeneracy = 1;
    for (Eigen::Index i = 0; i < ev.size() && ev(i) < tol; ++i) ++g.degeneracy;
    return g;
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
  const RVector& ev = es.eigenvalues();
  g.ground_energy = ev(0);
  g.degeneracy = 0;
  while (g.degeneracy < ev.size() && ev(g.degeneracy) - ev(0) < tol) ++g.degeneracy;
  g.gap = g.degeneracy < ev.size() ? ev(g.degeneracy) - ev(0) : 0.0;
  return g;
}

GapInfo lanczos_gap(const std::vector<WindowProjectorTerm>& terms, int n, const CVector* ground,
                    const GapOptions& opts) {
  GapInfo g;
  g.method = "lanczos";
  const Eigen::Index dim = Eigen::Index{1} << n;
  const MatVec mv = [&](const CVector& x, CVector& y) { apply_parent_hamiltonian(terms, n, x, y); };
  std::vector<CVector> found;
  double e0 = 0.0;
  if (ground != nullptr) {
    CVector hp(dim);
    mv(*ground, hp);
    g.ground_energy = ground->dot(hp).real();
    g.leak = hp.norm();
    e0 = 0.0;
    found.push_back(*ground);
  } else {
    EigenPair p = lowest_eigenpair(mv, dim, {}, opts.lanczos);
    g.ground_energy = e0 = p.value;
    g.residual = p.residual;
    found.push_back(p.vector);
  }
  g.degeneracy = 1;
  // Count levels that sit on top of the ground level, up to a handful.
  while (static_cast<Eigen::Index>(found.size()) < dim) {
    EigenPair p = lowest_eigenpair(mv, dim, found, opts.lanczos);
    g.residual = std::max(g.residual, p.residual);
    if (p.value - e0 >= opts.degeneracy_tol || g.degeneracy >= 4) {
      g.gap = p.value - e0 - g.residual;
      return g;
    }
    ++g.degeneracy;
    found.push_back(p.vector);
  }
  g.gap = 0.0;
  return g;
}

Certificate invalid_certificate(const Mps& mps, int width, std::string reason) {
  Certificate c;
  c.mps = mps;
  c.width = width;
  c.k = width;
  c.bond_dims = mps.bond_dims();
  c.reason = std::move(reason);
  return c;
}

}  // namespace

std::vector<WindowProjectorTerm> parent_hamiltonian(const Mps& mps, int k, double support_tol) {
  const int n = mps.size();
  if (k < 1 || k > n) throw std::invalid_argument("parent_hamiltonian: window width out of range");
  if (!(support_tol > 0.0)) throw std::invalid_argument("parent_hamiltonian: support_tol must be positive");
  const Mps psi = normalize(mps);
  const auto left = left_environments(psi);
  const auto right = right_environments(psi);
  std::vector<WindowProjectorTerm> terms;
  for (int f = 0; f + k <= n; ++f) {
    const DensityMatrix rho = window_reduction(psi, f, k, left, right);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.rho);
    const RVector& ev = es.eigenvalues();
    WindowProjectorTerm t;
    t.window = {f, k};
    const Eigen::Index d = rho.rho.rows();
    CMatrix proj = CMatrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (ev(i) > support_tol) {
        proj += es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
        ++t.support_rank;
      }
      if (ev(i) > 0.1 * support_tol && ev(i) < 10.0 * support_tol) t.support_warning = true;
    }
    t.h = CMatrix::Identity(d, d) - proj;
    t.h = 0.5 * (t.h + t.h.adjoint());
    terms.push_back(std::move(t));
  }
  return terms;
}

void apply_parent_hamiltonian(const std::vector<WindowProjectorTerm>& terms, int n_sites, const CVector& x,
                              CVector& y) {
  const Eigen::Index dim = Eigen::Index{1} << n_sites;
  if (x.size() != dim) throw std::invalid_argument("apply_parent_hamiltonian: vector size mismatch");
  y.setZero(dim);
  CVector in, out;
  for (const auto& t : terms) {
    if (t.trivial()) continue;
    const int w = t.window.k;
    const int low_bits = n_sites - t.window.first - w;
    const Eigen::Index stride = Eigen::Index{1} << low_bits;
    const Eigen::Index block = Eigen::Index{1} << w;
    const Eigen::Index n_hi = Eigen::Index{1} << t.window.first;
    in.resize(block);
    for (Eigen::Index hi = 0; hi < n_hi; ++hi) {
      const Eigen::Index top = hi << (n_sites - t.window.first);
      for (Eigen::Index lo = 0; lo < stride; ++lo) {
        const Eigen::Index base = top | lo;
        for (Eigen::Index j = 0; j < block; ++j) in(j) = x(base + j * stride);
        out.noalias() = t.h * in;
        for (Eigen::Index j = 0; j < block; ++j) y(base + j * stride) += out(j);
      }
    }
  }
}

GapInfo spectral_gap(const std::vector<WindowProjectorTerm>& terms, int n_sites, const CVector* ground,
                     const GapOptions& opts) {
  if (n_sites > kMaxExactSites)
    throw SizeLimitError("spectral_gap: N = " + std::to_string(n_sites) + " exceeds the 2^N solver limit of " +
                         std::to_string(kMaxExactSites));
  for (const auto& t : terms)
    if (t.window.first < 0 || t.window.first + t.window.k > n_sites)
      throw std::invalid_argument("spectral_gap: term window outside the chain");
  if (ground != nullptr && ground->size() != (Eigen::Index{1} << n_sites))
    throw std::invalid_argument("spectral_gap: ground vector size mismatch");
  CVector psi;
  if (ground != nullptr) psi = ground->normalized();
  const CVector* gp = ground != nullptr ? &psi : nullptr;
  if (n_sites <= opts.dense_max_sites) return dense_gap(terms, n_sites, gp, opts.degeneracy_tol);
  return lanczos_gap(terms, n_sites, gp, opts);
}

namespace {

// Linear-inversion estimate. The physical projection only ever adds weight
// outside the support of a nearly pure reduction, so energies taken from the
// projected estimate are biased upward by shot noise; the raw estimate is
// unbiased, and negative window energies are clipped instead.
CMatrix unprojected(const WindowEstimate& e) {
  const std::size_t words = std::size_t{1} << (2 * e.window.k);
  if (e.pauli_means.size() != words) return e.rho.rho;
  return linear_inversion(e.pauli_means, e.window.k);
}

}  // namespace

Certificate certificate(const Mps& mps, const std::vector<WindowProjectorTerm>& terms,
                        const std::vector<WindowEstimate>& estimates, const GapInfo& gap, int n_boot,
                        std::uint64_t seed) {
  if (terms.size() != estimates.size())
    throw std::invalid_argument("certificate: one estimate per term is required");
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (!(terms[i].window == estimates[i].window))
      throw std::invalid_argument("certificate: estimate windows do not match term windows");
  if (n_boot < 0) throw std::invalid_argument("certificate: n_boot must be >= 0");

  Certificate c;
  c.mps = mps;
  c.bond_dims = mps.bond_dims();
  c.width = terms.empty() ? 0 : terms.front().window.k;
  c.k = c.width;
  c.gap = gap.gap;
  c.leak = gap.leak;
  c.ground_energy = gap.ground_energy;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    double e = window_energy(unprojected(estimates[i]), terms[i].h);
    if (e < 0.0) {
      e = 0.0;
      ++c.clipped_windows;
    }
    c.per_window_energy.push_back(e);
    c.energy += e;
  }
  if (gap.degeneracy != 1) {
    c.reason = "degenerate ground space: window width too small to determine the state";
    return c;
  }
  if (gap.ground_energy > 1e-8) {
    c.reason = "estimate is not a zero-energy state of its parent Hamiltonian";
    return c;
  }
  if (!(gap.gap > 0.0)) {
    c.reason = "no positive gap";
    return c;
  }
  c.valid = true;
  auto bound = [&](double energy) { return std::max(0.0, 1.0 - (energy + c.leak) / c.gap); };
  c.f_c = bound(c.energy);

  bool any_noise = false;
  for (const auto& e : estimates)
    for (const auto& [w, s] : e.pauli_stderr)
      if (s > 0.0) any_noise = true;
  if (!any_noise || n_boot < 2) return c;

  Rng rng(derive_seed(seed, 0x626f6f74));
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(n_boot));
  for (int b = 0; b < n_boot; ++b) {
    double energy = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      std::map<std::string, double> means = estimates[i].pauli_means;
      for (auto& [w, m] : means) {
        auto it = estimates[i].pauli_stderr.find(w);
        if (it != estimates[i].pauli_stderr.end() && it->second > 0.0) m += it->second * rng.normal();
      }
      energy += std::max(0.0, window_energy(linear_inversion(means, terms[i].window.k), terms[i].h));
    }
    samples.push_back(bound(energy));
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  c.bootstrap_stderr = std::sqrt(var / static_cast<double>(samples.size() - 1));
  c.n_boot = n_boot;
  return c;
}

std::vector<std::vector<int>> candidate_profiles(int n_sites, int w) {
  if (n_sites < 2) return {};
  const int top = 1 << (w / 2);
  std::vector<int> caps;
  for (int b = 0; b + 1 < n_sites; ++b) caps.push_back(1 << std::min({b + 1, n_sites - b - 1, 20}));
  auto make = [&](int a, int b) {
    std::vector<int> p(caps.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::min(i % 2 == 0 ? a : b, caps[i]);
    return p;
  };
  std::vector<std::vector<int>> out;
  std::set<std::vector<int>> seen;
  auto add = [&](std::vector<int> p) {
    if (all_windows_full_rank(p, n_sites, w) || !seen.insert(p).second) return;
    out.push_back(std::move(p));
  };
  for (int d = 1; d <= top; ++d) add(make(d, d));
  for (int a = 1; a <= top; ++a)
    for (int b = 1; b <= top; ++b)
      if (a != b) add(make(a, b));
  return out;
}

Certificate certify_best(const std::vector<Mps>& sources, const std::vector<WindowEstimate>& estimates,
                         const CertifyOptions& opts) {
  if (sources.empty()) throw std::invalid_argument("certify_best: no source MPS");
  if (estimates.empty()) throw std::invalid_argument("certify_best: no estimates");
  const int k = estimates.front().window.k;
  const int n = static_cast<int>(estimates.size()) + k - 1;
  for (const auto& s : sources)
    if (s.size() != n) throw std::invalid_argument("certify_best: source size does not match the estimates");

  Certificate best;
  bool have = false;
  int tried = 0;
  std::vector<WindowProjectorTerm> best_terms;
  std::vector<WindowEstimate> best_est;
  for (int w = k; w >= 1; --w) {
    const std::vector<WindowEstimate> est_w = w == k ? estimates : marginal_estimates(estimates, w);
    for (std::size_t si = 0; si < sources.size(); ++si) {
      const Mps src = normalize(sources[si]);
      std::vector<Mps> cands{src};
      if (opts.search_profiles)
        for (const auto& p : candidate_profiles(n, w)) cands.push_back(compress_to_profile(src, p, 0.0).mps);
      std::set<std::vector<int>> seen;
      for (const Mps& cand : cands) {
        const auto bonds = cand.bond_dims();
        if (!seen.insert(bonds).second) continue;
        if (n > 1 && all_windows_full_rank(bonds, n, w)) continue;
        const auto terms = parent_hamiltonian(cand, w, opts.support_tol);
        ++tried;
        Certificate c;
        try {
          const CVector psi = to_statevector(cand).amplitudes;
          const GapInfo g = spectral_gap(terms, n, &psi, opts.gap);
          c = certificate(cand, terms, est_w, g, 0, opts.seed);
        } catch (const ConvergenceError& e) {
          c = invalid_certificate(cand, w, std::string("gap eigensolver: ") + e.what());
        }
        c.source_index = static_cast<int>(si);
        const bool better = !have || c.f_c > best.f_c || (c.f_c == best.f_c && c.valid && !best.valid);
        if (better) {
          best = std::move(c);
          best_terms = terms;
          best_est = est_w;
          have = true;
        }
      }
    }
  }
  if (!have) {
    best = invalid_certificate(sources.front(), k, "no candidate with a nontrivial parent Hamiltonian");
  } else if (best.valid && opts.n_boot > 0) {
    GapInfo g;
    g.gap = best.gap;
    g.leak = best.leak;
    g.ground_energy = best.ground_energy;
    g.degeneracy = 1;
    const int src = best.source_index;
    best = certificate(best.mps, best_terms, best_est, g, opts.n_boot, opts.seed);
    best.source_index = src;
  }
  best.k = k;
  best.candidates_tried = tried;
  return best;
}

double true_fidelity(const Mps& mps, const StateVector& state, double noise_p) {
  if (mps.size() != state.n_sites) throw std::invalid_argument("true_fidelity: size mismatch");
  const CVector psi = to_statevector(normalize(mps)).amplitudes;
  if (noise_p == 0.0) return std::norm(psi.dot(state.amplitudes));
  const DensityMatrix rho = noisy_density_matrix(state, noise_p);
  return psi.dot(rho.rho * psi).real();
}

double true_fidelity_oracle(const Mps& mps, const ChainSpec& spec, double t, const NoiseModel& noise) {
  noise.validate();
  if (noise.p_local > 0.0 && spec.n_sites > 10)
    throw SizeLimitError("true_fidelity_oracle: the noisy path needs N <= 10");
  return true_fidelity(mps, evolve_exact(spec, neel_state(spec.n_sites), t), noise.p_local);
}

nlohmann::json certificate_to_json(const Certificate& c) {
  return nlohmann::json{{"format", "cert-v1"},
                        {"valid", c.valid},
                        {"reason", c.reason},
                        {"f_c", c.f_c},
                        {"gap", c.gap},
                        {"energy", c.energy},
                        {"per_window_energy", c.per_window_energy},
                        {"clipped_windows", c.clipped_windows},
                        {"leak", c.leak},
                        {"ground_energy", c.ground_energy},
                        {"bootstrap_stderr", c.bootstrap_stderr},
                        {"n_boot", c.n_boot},
                        {"k", c.k},
                        {"width", c.width},
                        {"bond_dims", c.bond_dims},
                        {"source_index", c.source_index},
                        {"candidates_tried", c.candidates_tried},
                        {"mps", mps_to_json(c.mps)}};
}

Certificate certificate_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "cert-v1")
      throw FormatError("unsupported certificate format " + j.at("format").dump());
    Certificate c;
    c.valid = j.at("valid").get<bool>();
    c.reason = j.at("reason").get<std::string>();
    c.f_c = j.at("f_c").get<double>();
    c.gap = j.at("gap").get<double>();
    c.energy = j.at("energy").get<double>();
    c.per_window_energy = j.at("per_window_energy").get<std::vector<double>>();
    c.clipped_windows = j.at("clipped_windows").get<int>();
    c.leak = j.at("leak").get<double>();
    c.ground_energy = j.at("ground_energy").get<double>();
    c.bootstrap_stderr = j.at("bootstrap_stderr").get<double>();
    c.n_boot = j.at("n_boot").get<int>();
    c.k = j.at("k").get<int>();
    c.width = j.at("width").get<int>();
    c.bond_dims = j.at("bond_dims").get<std::vector<int>>();
    c.source_index = j.at("source_index").get<int>();
    c.candidates_tried = j.at("candidates_tried").get<int>();
    c.mps = mps_from_json(j.at("mps"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("certificate: ") + e.what());
  }
}

}  // namespace mpstomo
