#include "mpstomo/localtomo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace mpstomo {
namespace {

double binomial_stderr(double mean, std::uint64_t n) {
  if (n == 0) return 0.0;
  const double nd = static_cast<double>(n);
  const double var = std::max(0.0, 1.0 - mean * mean) * (n > 1 ? nd / (nd - 1.0) : 1.0);
  return std::sqrt(var / nd);
}

std::string identity_word(int k) { return std::string(static_cast<std::size_t>(k), 'I'); }

nlohmann::json matrix_to_json(const CMatrix& m) {
  std::vector<double> re, im;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      re.push_back(m(r, c).real());
      im.push_back(m(r, c).imag());
    }
  return {{"dim", m.rows()}, {"re", re}, {"im", im}};
}

CMatrix matrix_from_json(const nlohmann::json& j) {
  const auto d = j.at("dim").get<Eigen::Index>();
  const auto re = j.at("re").get<std::vector<double>>();
  const auto im = j.at("im").get<std::vector<double>>();
  if (re.size() != static_cast<std::size_t>(d * d) || im.size() != re.size())
    throw FormatError("matrix payload has the wrong size");
  CMatrix m(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto i = static_cast<std::size_t>(r * d + c);
      m(r, c) = cplx(re[i], im[i]);
    }
  return m;
}

}  // namespace

PauliStats pauli_estimates(const std::vector<ShotRecord>& records, Window w) {
  const int k = w.k;
  if (k < 1 || k > 8 || w.first < 0) throw std::invalid_argument("pauli_estimates: bad window");
  const auto words = all_pauli_words(k);
  std::vector<double> sums(words.size(), 0.0);
  std::vector<std::uint64_t> used(words.size(), 0);
  std::uint64_t total_shots = 0;
  const std::size_t wdim = std::size_t{1} << k;
  for (const auto& r : records) {
    if (static_cast<int>(r.setting.axes.size()) < w.first + k)
      throw std::invalid_argument("pauli_estimates: window exceeds record length");
    std::vector<std::uint64_t> hist(wdim, 0);
    for (const auto& [outcome, count] : r.counts) {
      std::size_t idx = 0;
      for (int q = 0; q < k; ++q)
        if (outcome[static_cast<std::size_t>(w.first + q)] == '0') idx |= std::size_t{1} << (k - 1 - q);
      hist[idx] += count;
    }
    total_shots += r.shots;
    for (std::size_t wi = 1; wi < words.size(); ++wi) {
      const auto& word = words[wi];
      std::size_t mask = 0;
      bool compatible = true;
      for (int q = 0; q < k && compatible; ++q) {
        const char c = word[static_cast<std::size_t>(q)];
        if (c == 'I') continue;
        compatible = r.setting.axes[static_cast<std::size_t>(w.first + q)] == c;
        mask |= std::size_t{1} << (k - 1 - q);
      }
      if (!compatible) continue;
      double s = 0.0;
      for (std::size_t idx = 0; idx < wdim; ++idx) {
        if (hist[idx] == 0) continue;
        const bool odd = std::popcount(idx & mask) & 1;
        s += odd ? -static_cast<double>(hist[idx]) : static_cast<double>(hist[idx]);
      }
      sums[wi] += s;
      used[wi] += r.shots;
    }
  }
  PauliStats out;
  out.means[words[0]] = 1.0;
  out.stderrs[words[0]] = 0.0;
  out.shots_used[words[0]] = total_shots;
  for (std::size_t wi = 1; wi < words.size(); ++wi) {
    if (used[wi] == 0)
      throw CoverageError("no setting measures word " + words[wi] + " on window starting at site " +
                          std::to_string(w.first));
    const double m = sums[wi] / static_cast<double>(used[wi]);
    out.means[words[wi]] = m;
    out.stderrs[words[wi]] = binomial_stderr(m, used[wi]);
    out.shots_used[words[wi]] = used[wi];
  }
  return out;
}

CMatrix linear_inversion(const std::map<std::string, double>& means, int k) {
  const Eigen::Index dim = Eigen::Index{1} << k;
  CMatrix rho = CMatrix::Identity(dim, dim);
  for (const auto& [word, m] : means) {
    if (static_cast<int>(word.size()) != k)
      throw std::invalid_argument("linear_inversion: word '" + word + "' has the wrong length");
    if (word == identity_word(k) || m == 0.0) continue;
    rho += m * pauli_word_matrix(word);
  }
  rho /= static_cast<double>(dim);
  return rho;
}

DensityMatrix project_to_physical(const CMatrix& h) {
  const CMatrix herm = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(herm);
  const RVector& ev = es.eigenvalues();
  const auto n = ev.size();
  std::vector<double> u(ev.data(), ev.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cum += u[static_cast<std::size_t>(j)];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  RVector lam = (ev.array() - theta).cwiseMax(0.0);
  CMatrix rho = es.eigenvectors() * lam.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return DensityMatrix{rho};
}

std::map<std::string, double> pauli_means_of(const DensityMatrix& rho) {
  const int k = rho.n_qubits();
  std::map<std::string, double> out;
  for (const auto& word : all_pauli_words(k))
    out[word] = (rho.rho * pauli_word_matrix(word)).trace().real();
  out[identity_word(k)] = 1.0;
  return out;
}

std::vector<WindowEstimate> estimate_all_reductions(const std::vector<ShotRecord>& records, int k) {
  if (records.empty()) throw CoverageError("no shot records");
  const int n = static_cast<int>(records.front().setting.axes.size());
  if (k < 1 || k > std::min(n, 8)) throw std::invalid_argument("estimate_all_reductions: bad k");
  for (const auto& r : records)
    if (static_cast<int>(r.setting.axes.size()) != n)
      throw FormatError("records disagree on the number of sites");
  std::vector<WindowEstimate> out;
  for (int i = 0; i + k <= n; ++i) {
    WindowEstimate e;
    e.window = {i, k};
    PauliStats s = pauli_estimates(records, e.window);
    e.rho = project_to_physical(linear_inversion(s.means, k));
    e.pauli_means = std::move(s.means);
    e.pauli_stderr = std::move(s.stderrs);
    e.shots_used = std::move(s.shots_used);
    out.push_back(std::move(e));
  }
  return out;
}

WindowEstimate exact_window_estimate(const DensityMatrix& rho, Window w) {
  if (rho.n_qubits() != w.k) throw std::invalid_argument("exact_window_estimate: size mismatch");
  WindowEstimate e;
  e.window = w;
  e.pauli_means = pauli_means_of(rho);
  e.rho = project_to_physical(linear_inversion(e.pauli_means, w.k));
  for (const auto& [word, m] : e.pauli_means) {
    e.pauli_stderr[word] = 0.0;
    e.shots_used[word] = 0;
  }
  return e;
}

std::vector<WindowEstimate> exact_estimates(const std::vector<DensityMatrix>& reductions) {
  std::vector<WindowEstimate> out;
  for (std::size_t i = 0; i < reductions.size(); ++i)
    out.push_back(exact_window_estimate(reductions[i], {static_cast<int>(i), reductions[i].n_qubits()}));
  return out;
}

CMatrix partial_trace_range(const CMatrix& rho, int k, int first, int len) {
  if (first < 0 || len < 0 || first + len > k || rho.rows() != (Eigen::Index{1} << k))
    throw std::invalid_argument("partial_trace_range: bad range");
  const Eigen::Index dl = Eigen::Index{1} << first;
  const Eigen::Index dm = Eigen::Index{1} << len;
  const Eigen::Index dr = Eigen::Index{1} << (k - first - len);
  CMatrix out = CMatrix::Zero(dm, dm);
  for (Eigen::Index l = 0; l < dl; ++l)
    for (Eigen::Index r = 0; r < dr; ++r)
      for (Eigen::Index a = 0; a < dm; ++a)
        for (Eigen::Index b = 0; b < dm; ++b)
          out(a, b) += rho((l * dm + a) * dr + r, (l * dm + b) * dr + r);
  return out;
}

WindowEstimate marginal_estimate(const WindowEstimate& wide, Window w) {
  const int off = w.first - wide.window.first;
  if (off < 0 || off + w.k > wide.window.k) throw std::invalid_argument("marginal_estimate: not contained");
  WindowEstimate e;
  e.window = w;
  e.rho = DensityMatrix{partial_trace_range(wide.rho.rho, wide.window.k, off, w.k)};
  for (const auto& word : all_pauli_words(w.k)) {
    std::string embedded = identity_word(wide.window.k);
    embedded.replace(static_cast<std::size_t>(off), word.size(), word);
    auto find = [&](const auto& m, auto fallback) {
      auto it = m.find(embedded);
      return it == m.end() ? fallback : it->second;
    };
    e.pauli_means[word] = find(wide.pauli_means, 0.0);
    e.pauli_stderr[word] = find(wide.pauli_stderr, 0.0);
    e.shots_used[word] = find(wide.shots_used, std::uint64_t{0});
  }
  return e;
}

std::vector<WindowEstimate> marginal_estimates(const std::vector<WindowEstimate>& wide, int w) {
  if (wide.empty()) return {};
  const int k = wide.front().window.k;
  if (w < 1 || w > k) throw std::invalid_argument("marginal_estimates: bad width");
  if (w == k) return wide;
  const int n = static_cast<int>(wide.size()) + k - 1;
  std::vector<WindowEstimate> out;
  for (int j = 0; j + w <= n; ++j) {
    const int src = std::min(j, n - k);
    out.push_back(marginal_estimate(wide[static_cast<std::size_t>(src)], {j, w}));
  }
  return out;
}

std::vector<double> overlap_inconsistency(const std::vector<WindowEstimate>& estimates) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < estimates.size(); ++i) {
    const int k = estimates[i].window.k;
    if (k < 2) {
      out.push_back(0.0);
      continue;
    }
    const CMatrix a = partial_trace_range(estimates[i].rho.rho, k, 1, k - 1);
    const CMatrix b = partial_trace_range(estimates[i + 1].rho.rho, k, 0, k - 1);
    out.push_back((a - b).norm());
  }
  return out;
}

nlohmann::json estimates_to_json(const std::vector<WindowEstimate>& estimates) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : estimates) {
    arr.push_back({{"first", e.window.first},
                   {"k", e.window.k},
                   {"rho", matrix_to_json(e.rho.rho)},
                   {"pauli_means", e.pauli_means},
                   {"pauli_stderr", e.pauli_stderr},
                   {"shots_used", e.shots_used}});
  }
  return {{"format", "winest-v1"}, {"estimates", arr}};
}

std::vector<WindowEstimate> estimates_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "winest-v1")
      throw FormatError("unsupported estimate format " + j.at("format").dump());
    std::vector<WindowEstimate> out;
    for (const auto& ej : j.at("estimates")) {
      WindowEstimate e;
      e.window = {ej.at("first").get<int>(), ej.at("k").get<int>()};
      e.rho = DensityMatrix{matrix_from_json(ej.at("rho"))};
      e.pauli_means = ej.at("pauli_means").get<std::map<std::string, double>>();
      e.pauli_stderr = ej.at("pauli_stderr").get<std::map<std::string, double>>();
      e.shots_used = ej.at("shots_used").get<std::map<std::string, std::uint64_t>>();
      out.push_back(std::move(e));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(e.what());
  }
}

}  // namespace mpstomo
