#include "mpstomo/mps.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace mpstomo {
namespace {

struct Factor {
  CMatrix q;
  CMatrix r;
};

// Thin QR with a non-negative real diagonal on R.
Factor thin_qr(const CMatrix& m) {
  const Eigen::Index rows = m.rows(), cols = m.cols();
  const Eigen::Index r = std::min(rows, cols);
  Eigen::HouseholderQR<CMatrix> qr(m);
  Factor f;
  f.q = qr.householderQ() * CMatrix::Identity(rows, r);
  f.r = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < r; ++i) {
    const cplx d = f.r(i, i);
    const double mag = std::abs(d);
    if (mag == 0.0) continue;
    const cplx phase = d / mag;
    f.q.col(i) *= phase;
    f.r.row(i) /= phase;
  }
  return f;
}

CMatrix stack_left(const SiteTensor& a) {
  CMatrix m(2 * a[0].rows(), a[0].cols());
  m.topRows(a[0].rows()) = a[0];
  m.bottomRows(a[1].rows()) = a[1];
  return m;
}

SiteTensor unstack_left(const CMatrix& m) {
  const Eigen::Index dl = m.rows() / 2;
  return {m.topRows(dl), m.bottomRows(dl)};
}

CMatrix stack_right(const SiteTensor& a) {
  CMatrix m(a[0].rows(), 2 * a[0].cols());
  m.leftCols(a[0].cols()) = a[0];
  m.rightCols(a[1].cols()) = a[1];
  return m;
}

SiteTensor unstack_right(const CMatrix& m) {
  const Eigen::Index dr = m.cols() / 2;
  return {m.leftCols(dr), m.rightCols(dr)};
}

void right_orthonormalize(std::vector<SiteTensor>& t, int site) {
  Factor f = thin_qr(stack_right(t[static_cast<std::size_t>(site)]).adjoint());
  t[static_cast<std::size_t>(site)] = unstack_right(f.q.adjoint());
  auto& prev = t[static_cast<std::size_t>(site - 1)];
  CMatrix carry = f.r.adjoint();
  for (auto& m : prev) m = m * carry;
}

// Fixes the free phase of each column so that sum_i (i+1) u_i is real positive.
void fix_column_phases(CMatrix& u, CMatrix& partner_rows) {
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    cplx w = 0.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i) w += static_cast<double>(i + 1) * u(i, c);
    const double mag = std::abs(w);
    if (mag < 1e-12) continue;
    const cplx phase = w / mag;
    u.col(c) /= phase;
    partner_rows.row(c) *= phase;
  }
}

// SVD step leaving site `site` a left isometry in the Schmidt basis of bond site+1.
void left_schmidt_step(std::vector<SiteTensor>& t, int site) {
  Eigen::JacobiSVD<CMatrix> svd(stack_left(t[static_cast<std::size_t>(site)]),
                                Eigen::ComputeThinU | Eigen::ComputeThinV);
  CMatrix u = svd.matrixU();
  CMatrix carry = svd.singularValues().cast<cplx>().asDiagonal() * svd.matrixV().adjoint();
  fix_column_phases(u, carry);
  t[static_cast<std::size_t>(site)] = unstack_left(u);
  for (auto& m : t[static_cast<std::size_t>(site + 1)]) m = carry * m;
}

void right_schmidt_step(std::vector<SiteTensor>& t, int site) {
  Eigen::JacobiSVD<CMatrix> svd(stack_right(t[static_cast<std::size_t>(site)]).adjoint(),
                                Eigen::ComputeThinU | Eigen::ComputeThinV);
  CMatrix v = svd.matrixU();  // columns: conjugated right Schmidt vectors
  CMatrix carry = svd.singularValues().cast<cplx>().asDiagonal() * svd.matrixV().adjoint();
  fix_column_phases(v, carry);
  t[static_cast<std::size_t>(site)] = unstack_right(v.adjoint());
  CMatrix c = carry.adjoint();
  for (auto& m : t[static_cast<std::size_t>(site - 1)]) m = m * c;
}

// Number of singular values kept at one cut.
int kept_rank(const RVector& s, double tol, int cap, double& discarded_rel) {
  const double total = s.squaredNorm();
  int r = static_cast<int>(s.size());
  const double floor = s.size() > 0 ? 1e-14 * s(0) : 0.0;
  double disc = 0.0;
  while (r > 1) {
    const double w = s(r - 1) * s(r - 1) / total;
    if (s(r - 1) <= floor || disc + w <= tol) {
      disc += w;
      --r;
    } else {
      break;
    }
  }
  while (r > std::max(cap, 1)) {
    disc += s(r - 1) * s(r - 1) / total;
    --r;
  }
  discarded_rel = disc;
  return r;
}

}  // namespace

Mps::Mps(std::vector<SiteTensor> tensors, std::optional<int> center)
    : tensors_(std::move(tensors)), center_(center) {
  if (tensors_.empty()) throw std::invalid_argument("Mps: need at least one site");
  const auto n = tensors_.size();
  if (tensors_.front()[0].rows() != 1 || tensors_.back()[0].cols() != 1) {
    throw std::invalid_argument("Mps: boundary bond dimensions must be 1");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = tensors_[i];
    if (t[0].rows() != t[1].rows() || t[0].cols() != t[1].cols())
      throw std::invalid_argument("Mps: physical slices of a site disagree in shape");
    if (i + 1 < n && t[0].cols() != tensors_[i + 1][0].rows())
      throw std::invalid_argument("Mps: bond dimension mismatch at bond " + std::to_string(i + 1));
  }
  if (center_ && (*center_ < 0 || *center_ >= static_cast<int>(n)))
    throw std::invalid_argument("Mps: canonical center out of range");
}

std::vector<int> Mps::bond_dims() const {
  std::vector<int> d;
  for (std::size_t i = 0; i + 1 < tensors_.size(); ++i)
    d.push_back(static_cast<int>(tensors_[i][0].cols()));
  return d;
}

int Mps::max_bond() const {
  auto d = bond_dims();
  return d.empty() ? 1 : *std::max_element(d.begin(), d.end());
}

Mps Mps::product(const std::vector<Eigen::Vector2cd>& local_states) {
  std::vector<SiteTensor> t;
  for (const auto& v : local_states) {
    const double nrm = v.norm();
    if (nrm == 0.0) throw std::invalid_argument("Mps::product: zero local state");
    CMatrix up(1, 1), down(1, 1);
    up(0, 0) = v(0) / nrm;
    down(0, 0) = v(1) / nrm;
    t.push_back({up, down});
  }
  return Mps(std::move(t));
}

Mps Mps::from_product_state(const ProductState& s) {
  std::vector<Eigen::Vector2cd> local;
  for (Spin sp : s.pattern)
    local.push_back(sp == Spin::up ? Eigen::Vector2cd(1, 0) : Eigen::Vector2cd(0, 1));
  return product(local);
}

Mps Mps::random(int n_sites, int bond, std::uint64_t seed) {
  if (n_sites < 1 || bond < 1) throw std::invalid_argument("Mps::random: bad arguments");
  Rng rng(seed);
  auto cap = [&](int b) {
    const int e = std::min(b, n_sites - b);
    return e >= 30 ? bond : std::min(bond, 1 << e);
  };
  std::vector<SiteTensor> t;
  for (int i = 0; i < n_sites; ++i) {
    const int dl = i == 0 ? 1 : cap(i);
    const int dr = i == n_sites - 1 ? 1 : cap(i + 1);
    SiteTensor a;
    for (auto& m : a) {
      m.resize(dl, dr);
      for (Eigen::Index r = 0; r < dl; ++r)
        for (Eigen::Index c = 0; c < dr; ++c) m(r, c) = cplx(rng.normal(), rng.normal());
    }
    t.push_back(std::move(a));
  }
  return normalize(Mps(std::move(t)));
}

std::vector<CMatrix> left_environments(const Mps& mps) {
  std::vector<CMatrix> env;
  env.push_back(CMatrix::Ones(1, 1));
  for (int i = 0; i < mps.size(); ++i) {
    const auto& a = mps[i];
    env.push_back(a[0].adjoint() * env.back() * a[0] + a[1].adjoint() * env.back() * a[1]);
  }
  return env;
}

std::vector<CMatrix> right_environments(const Mps& mps) {
  const int n = mps.size();
  std::vector<CMatrix> env(static_cast<std::size_t>(n + 1));
  env[static_cast<std::size_t>(n)] = CMatrix::Ones(1, 1);
  for (int i = n - 1; i >= 0; --i) {
    const auto& a = mps[i];
    const auto& r = env[static_cast<std::size_t>(i + 1)];
    env[static_cast<std::size_t>(i)] = a[0] * r * a[0].adjoint() + a[1] * r * a[1].adjoint();
  }
  return env;
}

double norm_squared(const Mps& mps) { return left_environments(mps).back()(0, 0).real(); }

Mps normalize(const Mps& mps) {
  const double n2 = norm_squared(mps);
  if (!(n2 > 0.0)) throw std::invalid_argument("normalize: zero-norm MPS");
  // Spread the rescaling over sites so no single tensor underflows.
  const double per_site = std::pow(n2, -0.5 / mps.size());
  std::vector<SiteTensor> t = mps.tensors();
  for (auto& a : t)
    for (auto& m : a) m *= per_site;
  return Mps(std::move(t), mps.canonical_center());
}

Mps canonicalize(const Mps& mps, int center) {
  const int n = mps.size();
  if (center < 0 || center >= n) throw std::invalid_argument("canonicalize: center out of range");
  std::vector<SiteTensor> t = mps.tensors();
  // QR sweep to a right-canonical form, then SVD sweeps so every bond is in
  // its Schmidt basis. The result depends only on the state (up to
  // degenerate Schmidt values), not on the input gauge.
  for (int i = n - 1; i > 0; --i) right_orthonormalize(t, i);
  for (int i = 0; i + 1 < n; ++i) left_schmidt_step(t, i);
  for (int i = n - 1; i > center; --i) right_schmidt_step(t, i);
  for (const auto& a : t)
    for (const auto& m : a)
      if (!m.allFinite()) throw std::runtime_error("canonicalize: decomposition produced non-finite values");
  return Mps(std::move(t), center);
}

CompressResult compress_to_profile(const Mps& mps, const std::vector<int>& max_bonds, double tol) {
  const int n = mps.size();
  if (static_cast<int>(max_bonds.size()) != n - 1)
    throw std::invalid_argument("compress_to_profile: need one cap per bond");
  if (tol < 0.0) throw std::invalid_argument("compress: tol must be >= 0");
  std::vector<SiteTensor> t = canonicalize(normalize(mps), 0).tensors();
  double total_err = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    CMatrix m = stack_left(t[static_cast<std::size_t>(i)]);
    Eigen::JacobiSVD<CMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const RVector& s = svd.singularValues();
    double disc = 0.0;
    const int r = kept_rank(s, tol, max_bonds[static_cast<std::size_t>(i)], disc);
    total_err += disc;
    t[static_cast<std::size_t>(i)] = unstack_left(svd.matrixU().leftCols(r));
    CMatrix carry = s.head(r).cast<cplx>().asDiagonal() * svd.matrixV().leftCols(r).adjoint();
    for (auto& x : t[static_cast<std::size_t>(i + 1)]) x = carry * x;
  }
  Mps out(std::move(t), n - 1);
  return {normalize(out), total_err};
}

CompressResult compress(const Mps& mps, int max_bond, double tol) {
  if (max_bond < 1) throw std::invalid_argument("compress: max_bond must be >= 1");
  return compress_to_profile(mps, std::vector<int>(static_cast<std::size_t>(mps.size() - 1), max_bond),
                             tol);
}

Mps mps_from_statevector(const StateVector& v, double tol, int max_bond) {
  const int n = v.n_sites;
  if (n > kMaxExactSites) throw SizeLimitError("mps_from_statevector: N > 16");
  if (n < 1) throw std::invalid_argument("mps_from_statevector: empty state");
  const double nrm = v.amplitudes.norm();
  if (nrm == 0.0) throw std::invalid_argument("mps_from_statevector: zero vector");
  const double per_cut = n > 1 ? tol / (n - 1) : 0.0;
  const int cap = max_bond > 0 ? max_bond : 1 << 30;

  std::vector<SiteTensor> t;
  // rest: rows = left bond, columns = configurations of the remaining sites.
  CMatrix rest = v.amplitudes.transpose() / nrm;
  Eigen::Index dl = 1;
  for (int i = 0; i + 1 < n; ++i) {
    const Eigen::Index remaining = Eigen::Index{1} << (n - i - 1);
    // Rows of m are (s, a) with s major, matching stack_left.
    CMatrix m(2 * dl, remaining);
    for (Eigen::Index a = 0; a < dl; ++a) {
      m.row(a) = rest.row(a).head(remaining);
      m.row(dl + a) = rest.row(a).tail(remaining);
    }
    Eigen::JacobiSVD<CMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const RVector& s = svd.singularValues();
    double disc = 0.0;
    const int r = kept_rank(s, per_cut, cap, disc);
    t.push_back(unstack_left(svd.matrixU().leftCols(r)));
    rest = s.head(r).cast<cplx>().asDiagonal() * svd.matrixV().leftCols(r).adjoint();
    dl = r;
  }
  SiteTensor last{CMatrix(dl, 1), CMatrix(dl, 1)};
  last[0] = rest.col(0);
  last[1] = rest.col(1);
  t.push_back(std::move(last));
  return normalize(Mps(std::move(t), n - 1));
}

StateVector to_statevector(const Mps& mps) {
  const int n = mps.size();
  if (n > kMaxExactSites) throw SizeLimitError("to_statevector: N > 16");
  CMatrix acc = CMatrix::Ones(1, 1);  // rows: configurations so far, cols: bond
  for (int i = 0; i < n; ++i) {
    const auto& a = mps[i];
    CMatrix next(acc.rows() * 2, a[0].cols());
    for (Eigen::Index r = 0; r < acc.rows(); ++r) {
      next.row(2 * r) = acc.row(r) * a[0];
      next.row(2 * r + 1) = acc.row(r) * a[1];
    }
    acc = std::move(next);
  }
  StateVector v;
  v.n_sites = n;
  v.amplitudes = acc.col(0);
  const double nrm = v.amplitudes.norm();
  if (nrm == 0.0) throw std::invalid_argument("to_statevector: zero-norm MPS");
  v.amplitudes /= nrm;
  return v;
}

std::vector<CMatrix> window_strings(const Mps& mps, int first, int k) {
  std::vector<CMatrix> w{CMatrix::Identity(mps[first][0].rows(), mps[first][0].rows())};
  for (int j = first; j < first + k; ++j) {
    std::vector<CMatrix> next;
    next.reserve(w.size() * 2);
    for (const auto& m : w) {
      next.push_back(m * mps[j][0]);
      next.push_back(m * mps[j][1]);
    }
    w = std::move(next);
  }
  return w;
}

DensityMatrix window_reduction(const Mps& mps, int first, int k, const std::vector<CMatrix>& left,
                               const std::vector<CMatrix>& right) {
  if (k < 1 || k > 8 || first < 0 || first + k > mps.size())
    throw std::invalid_argument("window_reduction: window out of range");
  const auto w = window_strings(mps, first, k);
  const CMatrix& l = left[static_cast<std::size_t>(first)];
  const CMatrix& r = right[static_cast<std::size_t>(first + k)];
  const Eigen::Index dl = l.rows(), dr = r.rows();
  const auto ns = static_cast<Eigen::Index>(w.size());
  CMatrix wm(dl * dr, ns), xm(dl * dr, ns);
  for (Eigen::Index s = 0; s < ns; ++s) {
    const CMatrix& ws = w[static_cast<std::size_t>(s)];
    CMatrix x = l * ws * r;
    wm.col(s) = Eigen::Map<const CVector>(ws.data(), dl * dr);
    xm.col(s) = Eigen::Map<const CVector>(x.data(), dl * dr);
  }
  // rho[s, s'] = tr(W_s'^† L W_s R)
  CMatrix rho = (wm.adjoint() * xm).transpose();
  const cplx norm = rho.trace();
  rho /= norm;
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return DensityMatrix{rho};
}

DensityMatrix window_reduction(const Mps& mps, int first, int k) {
  return window_reduction(mps, first, k, left_environments(mps), right_environments(mps));
}

std::vector<DensityMatrix> local_reductions_mps(const Mps& mps, int k) {
  if (k < 1 || k > std::min(8, mps.size()))
    throw std::invalid_argument("local_reductions_mps: k out of range");
  const auto left = left_environments(mps);
  const auto right = right_environments(mps);
  std::vector<DensityMatrix> out;
  for (int i = 0; i + k <= mps.size(); ++i) out.push_back(window_reduction(mps, i, k, left, right));
  return out;
}

cplx overlap(const Mps& a, const Mps& b) {
  if (a.size() != b.size()) throw std::invalid_argument("overlap: MPS lengths differ");
  CMatrix e = CMatrix::Ones(1, 1);
  for (int i = 0; i < a.size(); ++i)
    e = a[i][0].adjoint() * e * b[i][0] + a[i][1].adjoint() * e * b[i][1];
  return e(0, 0);
}

double expectation_pauli_mps(const Mps& mps, std::string_view pauli) {
  check_pauli_string(pauli, static_cast<std::size_t>(mps.size()));
  CMatrix e = CMatrix::Ones(1, 1);
  CMatrix n = CMatrix::Ones(1, 1);
  for (int i = 0; i < mps.size(); ++i) {
    const auto& a = mps[i];
    const Eigen::Matrix2cd p = pauli_matrix(pauli[static_cast<std::size_t>(i)]);
    CMatrix next = CMatrix::Zero(a[0].cols(), a[0].cols());
    for (int s = 0; s < 2; ++s)
      for (int t = 0; t < 2; ++t)
        if (p(s, t) != cplx(0.0)) next += p(s, t) * (a[s].adjoint() * e * a[t]);
    e = std::move(next);
    n = a[0].adjoint() * n * a[0] + a[1].adjoint() * n * a[1];
  }
  return (e(0, 0) / n(0, 0)).real();
}

SchmidtSpectrum schmidt_spectrum(const Mps& mps, int cut) {
  if (cut < 1 || cut >= mps.size()) throw std::invalid_argument("schmidt_spectrum: cut out of range");
  Mps c = canonicalize(normalize(mps), cut);
  Eigen::JacobiSVD<CMatrix> svd(stack_right(c[cut]));
  RVector s = svd.singularValues();
  s /= s.norm();
  SchmidtSpectrum out;
  out.cut = cut;
  out.values.assign(s.data(), s.data() + s.size());
  return out;
}

double entropy_bits(const SchmidtSpectrum& s) {
  double h = 0.0;
  for (double v : s.values) {
    const double p = v * v;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

double half_chain_entropy(const Mps& mps) {
  if (mps.size() < 2) return 0.0;
  return entropy_bits(schmidt_spectrum(mps, mps.size() / 2));
}

nlohmann::json mps_to_json(const Mps& mps) {
  nlohmann::json tensors = nlohmann::json::array();
  for (int i = 0; i < mps.size(); ++i) {
    const auto& a = mps[i];
    std::vector<double> re, im;
    for (Eigen::Index l = 0; l < a[0].rows(); ++l)
      for (int s = 0; s < 2; ++s)
        for (Eigen::Index r = 0; r < a[0].cols(); ++r) {
          re.push_back(a[s](l, r).real());
          im.push_back(a[s](l, r).imag());
        }
    tensors.push_back({{"shape", {a[0].rows(), 2, a[0].cols()}}, {"re", re}, {"im", im}});
  }
  nlohmann::json j{{"format", "mps-v1"},
                   {"n_sites", mps.size()},
                   {"bond_dims", mps.bond_dims()},
                   {"tensors", tensors}};
  j["canonical_center"] = mps.canonical_center() ? nlohmann::json(*mps.canonical_center())
                                                 : nlohmann::json(nullptr);
  return j;
}

Mps mps_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "mps-v1")
      throw FormatError("mps: unsupported format " + j.at("format").dump());
    const int n = j.at("n_sites").get<int>();
    const auto& tj = j.at("tensors");
    if (static_cast<int>(tj.size()) != n) throw FormatError("mps: tensor count != n_sites");
    std::vector<SiteTensor> t;
    for (const auto& e : tj) {
      auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
      auto re = e.at("re").get<std::vector<double>>();
      auto im = e.at("im").get<std::vector<double>>();
      if (shape.size() != 3 || shape[1] != 2) throw FormatError("mps: bad tensor shape");
      const auto count = static_cast<std::size_t>(shape[0] * 2 * shape[2]);
      if (re.size() != count || im.size() != count) throw FormatError("mps: bad tensor payload");
      SiteTensor a{CMatrix(shape[0], shape[2]), CMatrix(shape[0], shape[2])};
      std::size_t idx = 0;
      for (Eigen::Index l = 0; l < shape[0]; ++l)
        for (int s = 0; s < 2; ++s)
          for (Eigen::Index r = 0; r < shape[2]; ++r, ++idx) a[s](l, r) = cplx(re[idx], im[idx]);
      t.push_back(std::move(a));
    }
    std::optional<int> center;
    if (j.contains("canonical_center") && !j["canonical_center"].is_null())
      center = j["canonical_center"].get<int>();
    return Mps(std::move(t), center);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("mps: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("mps: ") + e.what());
  }
}

}  // namespace mpstomo
