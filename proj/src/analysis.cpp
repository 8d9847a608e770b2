#include "mpstomo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "mpstomo/spinmodel.hpp"

namespace mpstomo {

namespace {

void check_axis(char c) {
  if (c != 'X' && c != 'Y' && c != 'Z') throw std::invalid_argument(std::string("correlation axis must be X, Y or Z, got ") + c);
}

double sign_of(const std::string& outcome, int site) {
  return outcome[static_cast<std::size_t>(site)] == '1' ? 1.0 : -1.0;
}

// Pooled mean of prod_{sites} (+-1) over records whose axes match on those sites.
struct Pooled {
  double sum = 0.0;
  std::uint64_t shots = 0;
  bool measured() const { return shots > 0; }
  double mean() const { return sum / static_cast<double>(shots); }
};

Pooled pool(const std::vector<ShotRecord>& records, const std::vector<std::pair<int, char>>& support) {
  Pooled p;
  for (const auto& r : records) {
    bool ok = true;
    for (const auto& [site, axis] : support)
      if (site >= static_cast<int>(r.setting.axes.size()) || r.setting.axes[static_cast<std::size_t>(site)] != axis) ok = false;
    if (!ok) continue;
    for (const auto& [o, c] : r.counts) {
      double v = 1.0;
      for (const auto& [site, axis] : support) v *= sign_of(o, site);
      p.sum += v * static_cast<double>(c);
    }
    p.shots += r.shots;
  }
  return p;
}

std::string single_word(int n, int i, char a) {
  std::string w(static_cast<std::size_t>(n), 'I');
  w[static_cast<std::size_t>(i)] = a;
  return w;
}

template <class Expect>
CorrelationMatrix correlations_from(int n, char a, char b, Expect expect) {
  check_axis(a);
  check_axis(b);
  CorrelationMatrix c;
  c.a = a;
  c.b = b;
  c.values = RMatrix::Zero(n, n);
  c.mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  std::vector<double> ma(static_cast<std::size_t>(n)), mb(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ma[static_cast<std::size_t>(i)] = expect(single_word(n, i, a));
    mb[static_cast<std::size_t>(i)] = a == b ? ma[static_cast<std::size_t>(i)] : expect(single_word(n, i, b));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double ab;
      if (i == j) {
        ab = a == b ? 1.0 : 0.0;  // symmetrized product of two different Paulis vanishes
      } else if (a == b && j < i) {
        c.values(i, j) = c.values(j, i);
        continue;
      } else {
        std::string w(static_cast<std::size_t>(n), 'I');
        w[static_cast<std::size_t>(i)] = a;
        w[static_cast<std::size_t>(j)] = b;
        ab = expect(w);
      }
      c.values(i, j) = ab - ma[static_cast<std::size_t>(i)] * mb[static_cast<std::size_t>(j)];
    }
  return c;
}

double trace_norm_hermitian(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double v = std::abs(es.eigenvalues()(i));
    if (v >= 1e-12) s += v;
  }
  return s;
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(12) << v;
  return o.str();
}

}  // namespace

std::vector<double> magnetization_profile(const StateVector& state) {
  const int n = state.n_sites;
  std::vector<double> p(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index x = 0; x < state.amplitudes.size(); ++x) {
    const double w = std::norm(state.amplitudes(x));
    if (w == 0.0) continue;
    for (int i = 0; i < n; ++i)
      if (((static_cast<std::uint64_t>(x) >> (n - 1 - i)) & 1U) == 0) p[static_cast<std::size_t>(i)] += w;
  }
  return p;
}

std::vector<double> magnetization_profile(const Mps& mps) {
  const Mps m = normalize(mps);
  std::vector<double> p;
  for (int i = 0; i < m.size(); ++i)
    p.push_back(std::clamp(0.5 * (1.0 + expectation_pauli_mps(m, single_word(m.size(), i, 'Z'))), 0.0, 1.0));
  return p;
}

std::vector<double> magnetization_profile(const std::vector<ShotRecord>& records) {
  if (records.empty()) throw CoverageError("magnetization_profile: no records");
  const int n = static_cast<int>(records.front().setting.axes.size());
  std::vector<double> p;
  for (int i = 0; i < n; ++i) {
    const Pooled z = pool(records, {{i, 'Z'}});
    if (!z.measured()) throw CoverageError("magnetization_profile: site " + std::to_string(i) + " never measured along Z");
    p.push_back(0.5 * (1.0 + z.mean()));
  }
  return p;
}

double negativity(const DensityMatrix& rho, const std::vector<int>& subsystem) {
  const int n = rho.n_qubits();
  if (n > 6) throw std::invalid_argument("negativity: at most 6 qubits");
  std::uint64_t mask = 0;
  for (int q : subsystem) {
    if (q < 0 || q >= n) throw std::invalid_argument("negativity: qubit index out of range");
    const std::uint64_t bit = std::uint64_t{1} << (n - 1 - q);
    if (mask & bit) throw std::invalid_argument("negativity: repeated qubit in partition");
    mask |= bit;
  }
  if (subsystem.empty() || static_cast<int>(subsystem.size()) == n)
    throw std::invalid_argument("negativity: partition must be a proper nonempty subset");
  const Eigen::Index d = rho.rho.rows();
  CMatrix pt(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto ur = static_cast<std::uint64_t>(r), uc = static_cast<std::uint64_t>(c);
      const auto r2 = static_cast<Eigen::Index>((ur & ~mask) | (uc & mask));
      const auto c2 = static_cast<Eigen::Index>((uc & ~mask) | (ur & mask));
      pt(r2, c2) = rho.rho(r, c);
    }
  return std::max(0.0, 0.5 * (trace_norm_hermitian(pt) - 1.0));
}

double tripartite_negativity(const DensityMatrix& rho) {
  if (rho.dim() != 8) throw std::invalid_argument("tripartite_negativity: need a 3-qubit state");
  return std::cbrt(negativity(rho, {0}) * negativity(rho, {1}) * negativity(rho, {2}));
}

NegativityEstimate window_negativity(const WindowEstimate& est, int n_boot, std::uint64_t seed) {
  const int k = est.window.k;
  if (k != 2 && k != 3) throw std::invalid_argument("window_negativity: window width must be 2 or 3");
  auto eval = [&](const DensityMatrix& r) { return k == 2 ? negativity(r, {0}) : tripartite_negativity(r); };
  NegativityEstimate out;
  out.value = eval(est.rho);
  bool noisy = false;
  for (const auto& [w, s] : est.pauli_stderr) noisy |= s > 0.0;
  if (!noisy || n_boot < 2) return out;
  Rng rng(derive_seed(seed, 0x6e6567, static_cast<std::uint64_t>(est.window.first)));
  std::vector<double> v;
  for (int b = 0; b < n_boot; ++b) {
    auto means = est.pauli_means;
    for (auto& [w, m] : means) {
      auto it = est.pauli_stderr.find(w);
      if (it != est.pauli_stderr.end()) m += it->second * rng.normal();
    }
    v.push_back(eval(project_to_physical(linear_inversion(means, k))));
  }
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  out.stderr = std::sqrt(var / static_cast<double>(v.size() - 1));
  return out;
}

CorrelationMatrix correlation_matrix(const StateVector& state, char a, char b) {
  return correlations_from(state.n_sites, a, b, [&](const std::string& w) { return pauli_expectation_exact(state, w); });
}

CorrelationMatrix correlation_matrix(const Mps& mps, char a, char b) {
  const Mps m = normalize(mps);
  return correlations_from(m.size(), a, b, [&](const std::string& w) { return expectation_pauli_mps(m, w); });
}

CorrelationMatrix correlation_matrix(const std::vector<ShotRecord>& records, char a, char b) {
  check_axis(a);
  check_axis(b);
  if (records.empty()) throw CoverageError("correlation_matrix: no records");
  const int n = static_cast<int>(records.front().setting.axes.size());
  CorrelationMatrix c;
  c.a = a;
  c.b = b;
  c.values = RMatrix::Zero(n, n);
  c.mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  std::vector<Pooled> sa, sb;
  for (int i = 0; i < n; ++i) {
    sa.push_back(pool(records, {{i, a}}));
    sb.push_back(pool(records, {{i, b}}));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Pooled& pa = sa[static_cast<std::size_t>(i)];
      const Pooled& pb = sb[static_cast<std::size_t>(j)];
      if (!pa.measured() || !pb.measured()) {
        c.mask(i, j) = true;
        continue;
      }
      double ab;
      if (i == j) {
        ab = a == b ? 1.0 : 0.0;
      } else {
        const Pooled pab = pool(records, {{i, a}, {j, b}});
        if (!pab.measured()) {
          c.mask(i, j) = true;
          continue;
        }
        ab = pab.mean();
      }
      c.values(i, j) = ab - pa.mean() * pb.mean();
    }
  return c;
}

double light_cone_velocity(const RMatrix& couplings) {
  if (couplings.rows() != couplings.cols()) throw std::invalid_argument("light_cone_velocity: couplings must be square");
  double best = 0.0;
  for (Eigen::Index j = 0; j < couplings.cols(); ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < couplings.rows(); ++i)
      if (i != j) s += std::abs(couplings(i, j));
    best = std::max(best, s);
  }
  return 2.0 * std::numbers::e * best;
}

std::vector<LightConePoint> light_cone_overlay(const RMatrix& couplings, const std::vector<double>& times) {
  const double v = light_cone_velocity(couplings);
  const double jbar = couplings.rows() > 1 ? mean_nn_coupling(couplings) : 0.0;
  std::vector<LightConePoint> out;
  for (double t : times) out.push_back({t, t * jbar, v * t});
  return out;
}

DfePlan dfe_plan(const Mps& mps, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("dfe_plan: n_samples must be >= 1");
  const Mps m = normalize(mps);
  const int n = m.size();
  static constexpr char kLetters[4] = {'I', 'X', 'Y', 'Z'};
  // E[j][P] = sum_{s,s'} P_{s s'} conj(A^s) (x) A^{s'}; <Psi|P|Psi> is the
  // product of these transfer matrices along the chain.
  std::vector<std::array<CMatrix, 4>> e(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    for (int p = 0; p < 4; ++p) {
      const Eigen::Matrix2cd pm = pauli_matrix(kLetters[p]);
      const auto& a = m[j];
      CMatrix acc = CMatrix::Zero(a[0].rows() * a[0].rows(), a[0].cols() * a[0].cols());
      for (int s = 0; s < 2; ++s)
        for (int sp = 0; sp < 2; ++sp)
          if (pm(s, sp) != cplx(0.0)) acc += pm(s, sp) * kron(a[static_cast<std::size_t>(s)].conjugate(), a[static_cast<std::size_t>(sp)]);
      e[static_cast<std::size_t>(j)][static_cast<std::size_t>(p)] = std::move(acc);
    }
  // r[j] = (1/2^(N-j)) sum over suffix strings of (E ... E)(E ... E)^T.
  std::vector<CMatrix> r(static_cast<std::size_t>(n + 1));
  r[static_cast<std::size_t>(n)] = CMatrix::Ones(1, 1);
  for (int j = n - 1; j >= 0; --j) {
    const auto& ej = e[static_cast<std::size_t>(j)];
    CMatrix acc = CMatrix::Zero(ej[0].rows(), ej[0].rows());
    for (int p = 0; p < 4; ++p) acc += ej[static_cast<std::size_t>(p)] * r[static_cast<std::size_t>(j + 1)] * ej[static_cast<std::size_t>(p)].transpose();
    acc *= 0.5;
    const double scale = acc.cwiseAbs().maxCoeff();
    r[static_cast<std::size_t>(j)] = scale > 0.0 ? CMatrix(acc / scale) : acc;
  }

  DfePlan plan;
  plan.n_samples = n_samples;
  plan.seed = seed;
  Rng rng(derive_seed(seed, 0x646665));
  const double root = std::pow(2.0, 0.5 * n);
  for (int sample = 0; sample < n_samples; ++sample) {
    CMatrix left = CMatrix::Ones(1, 1);
    std::string word;
    for (int j = 0; j < n; ++j) {
      std::array<double, 4> w{};
      std::array<CMatrix, 4> next;
      double total = 0.0;
      for (int p = 0; p < 4; ++p) {
        next[static_cast<std::size_t>(p)] = left * e[static_cast<std::size_t>(j)][static_cast<std::size_t>(p)];
        const cplx q = (next[static_cast<std::size_t>(p)] * r[static_cast<std::size_t>(j + 1)] *
                        next[static_cast<std::size_t>(p)].transpose())(0, 0);
        w[static_cast<std::size_t>(p)] = std::max(0.0, q.real());
        total += w[static_cast<std::size_t>(p)];
      }
      double u = rng.uniform() * total;
      int pick = 3;
      for (int p = 0; p < 4; ++p) {
        if (u < w[static_cast<std::size_t>(p)]) {
          pick = p;
          break;
        }
        u -= w[static_cast<std::size_t>(p)];
      }
      while (w[static_cast<std::size_t>(pick)] == 0.0 && pick > 0) --pick;
      word.push_back(kLetters[pick]);
      left = next[static_cast<std::size_t>(pick)];
      const double nl = left.norm();
      if (nl > 0.0) left /= nl;
    }
    const double chi = expectation_pauli_mps(m, word) / root;
    plan.pauli_strings.push_back(word);
    plan.chi_psi.push_back(chi);
    plan.weights.push_back(chi * chi);
  }
  return plan;
}

namespace {

DfeResult summarize(const std::vector<double>& ratios) {
  DfeResult r;
  r.n_samples = static_cast<int>(ratios.size());
  double mean = 0.0;
  for (double x : ratios) mean += x;
  mean /= static_cast<double>(ratios.size());
  r.fidelity = mean;
  if (ratios.size() > 1) {
    double var = 0.0;
    for (double x : ratios) var += (x - mean) * (x - mean);
    r.stderr = std::sqrt(var / static_cast<double>(ratios.size() - 1) / static_cast<double>(ratios.size()));
  }
  return r;
}

}  // namespace

DfeResult dfe_estimate(const DfePlan& plan, const StateVector& lab, double noise_p) {
  if (plan.pauli_strings.empty()) throw std::invalid_argument("dfe_estimate: empty plan");
  if (noise_p < 0.0 || noise_p > 1.0) throw std::invalid_argument("dfe_estimate: noise_p must lie in [0, 1]");
  const double root = std::pow(2.0, 0.5 * lab.n_sites);
  std::vector<double> ratios;
  for (std::size_t i = 0; i < plan.pauli_strings.size(); ++i) {
    const std::string& w = plan.pauli_strings[i];
    const int weight = static_cast<int>(std::count_if(w.begin(), w.end(), [](char c) { return c != 'I'; }));
    const double lab_val = std::pow(1.0 - noise_p, weight) * pauli_expectation_exact(lab, w);
    ratios.push_back(lab_val / (plan.chi_psi[i] * root));
  }
  return summarize(ratios);
}

DfeResult dfe_estimate(const DfePlan& plan, const std::vector<ShotRecord>& records) {
  if (plan.pauli_strings.empty()) throw std::invalid_argument("dfe_estimate: empty plan");
  std::vector<double> ratios;
  std::string missing;
  for (std::size_t i = 0; i < plan.pauli_strings.size(); ++i) {
    const std::string& w = plan.pauli_strings[i];
    std::vector<std::pair<int, char>> support;
    for (std::size_t s = 0; s < w.size(); ++s)
      if (w[s] != 'I') support.emplace_back(static_cast<int>(s), w[s]);
    const Pooled p = pool(records, support);
    if (!p.measured()) {
      if (missing.find(w) == std::string::npos) missing += (missing.empty() ? "" : ", ") + w;
      continue;
    }
    const double root = std::pow(2.0, 0.5 * static_cast<double>(w.size()));
    ratios.push_back(p.mean() / (plan.chi_psi[i] * root));
  }
  if (!missing.empty()) throw CoverageError("dfe_estimate: no records for " + missing);
  return summarize(ratios);
}

std::string magnetization_csv(const std::vector<double>& times, const std::vector<std::vector<double>>& profiles) {
  if (times.size() != profiles.size()) throw std::invalid_argument("magnetization_csv: one profile per time");
  std::string out = "site,time,p_up\n";
  for (std::size_t t = 0; t < times.size(); ++t)
    for (std::size_t i = 0; i < profiles[t].size(); ++i) out += std::to_string(i) + "," + fmt(times[t]) + "," + fmt(profiles[t][i]) + "\n";
  return out;
}

std::string correlation_csv(const CorrelationMatrix& c) {
  std::string out = "i,j,value,masked\n";
  for (Eigen::Index i = 0; i < c.values.rows(); ++i)
    for (Eigen::Index j = 0; j < c.values.cols(); ++j)
      out += std::to_string(i) + "," + std::to_string(j) + "," + fmt(c.values(i, j)) + "," + (c.mask(i, j) ? "1" : "0") + "\n";
  return out;
}

std::string negativity_csv(const std::vector<std::pair<int, NegativityEstimate>>& rows) {
  std::string out = "window,value,stderr\n";
  for (const auto& [w, e] : rows) out += std::to_string(w) + "," + fmt(e.value) + "," + fmt(e.stderr) + "\n";
  return out;
}

nlohmann::json dfe_to_json(const DfePlan& plan, const DfeResult* result) {
  nlohmann::json j{{"format", "dfe-v1"},
                   {"n_samples", plan.n_samples},
                   {"seed", plan.seed},
                   {"pauli_strings", plan.pauli_strings},
                   {"chi_psi", plan.chi_psi},
                   {"weights", plan.weights}};
  if (result != nullptr)
    j["result"] = {{"fidelity", result->fidelity}, {"stderr", result->stderr}, {"n_samples", result->n_samples}};
  return j;
}

DfePlan dfe_plan_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dfe-v1") throw FormatError("unsupported DFE format " + j.at("format").dump());
    DfePlan p;
    p.n_samples = j.at("n_samples").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.pauli_strings = j.at("pauli_strings").get<std::vector<std::string>>();
    p.chi_psi = j.at("chi_psi").get<std::vector<double>>();
    p.weights = j.at("weights").get<std::vector<double>>();
    if (p.chi_psi.size() != p.pauli_strings.size() || p.weights.size() != p.pauli_strings.size())
      throw FormatError("DFE plan: list lengths disagree");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("DFE plan: ") + e.what());
  }
}

}  // namespace mpstomo
