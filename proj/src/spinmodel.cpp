#include "mpstomo/spinmodel.hpp"

#include <cmath>

namespace mpstomo {

RMatrix build_couplings(int n_sites, double alpha, double j0) {
  if (n_sites < 2) throw std::invalid_argument("build_couplings: n_sites must be >= 2");
  if (!(alpha > 0.0)) throw std::invalid_argument("build_couplings: alpha must be > 0");
  if (!(j0 > 0.0)) throw std::invalid_argument("build_couplings: j0 must be > 0");
  RMatrix j = RMatrix::Zero(n_sites, n_sites);
  for (int a = 0; a < n_sites; ++a) {
    for (int b = a + 1; b < n_sites; ++b) {
      double v = j0 / std::pow(static_cast<double>(b - a), alpha);
      j(a, b) = v;
      j(b, a) = v;
    }
  }
  return j;
}

double mean_nn_coupling(const RMatrix& couplings) {
  if (couplings.rows() != couplings.cols() || couplings.rows() < 2) {
    throw std::invalid_argument("mean_nn_coupling: need a square matrix with N >= 2");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i + 1 < couplings.rows(); ++i) sum += couplings(i, i + 1);
  return sum / static_cast<double>(couplings.rows() - 1);
}

void ChainSpec::validate() const {
  if (n_sites < 2) throw ConfigError("chain: n_sites must be >= 2");
  if (couplings) {
    const RMatrix& j = *couplings;
    if (j.rows() != n_sites || j.cols() != n_sites) {
      throw ConfigError("chain: couplings must be n_sites x n_sites");
    }
    for (int a = 0; a < n_sites; ++a) {
      if (j(a, a) != 0.0) throw ConfigError("chain: couplings must have zero diagonal");
      for (int b = 0; b < a; ++b) {
        if (j(a, b) != j(b, a)) throw ConfigError("chain: couplings must be symmetric");
      }
    }
  } else {
    if (!(alpha > 0.0)) throw ConfigError("chain: alpha must be > 0");
    if (!(j0 > 0.0)) throw ConfigError("chain: j0 must be > 0");
  }
}

RMatrix ChainSpec::coupling_matrix() const {
  validate();
  if (couplings) return *couplings;
  return build_couplings(n_sites, alpha, j0);
}

HamiltonianTerms build_hamiltonian_terms(const ChainSpec& spec) {
  RMatrix j = spec.coupling_matrix();
  HamiltonianTerms terms;
  terms.n_sites = spec.n_sites;
  for (int a = 0; a < spec.n_sites; ++a) {
    for (int b = a + 1; b < spec.n_sites; ++b) {
      if (j(a, b) != 0.0) terms.hop_terms.push_back({a, b, j(a, b)});
    }
  }
  for (int s = 0; s < spec.n_sites; ++s) terms.field_terms.push_back({s, spec.b_field});
  return terms;
}

CMatrix assemble_dense(const HamiltonianTerms& terms) {
  const int n = terms.n_sites;
  if (n > 12) throw SizeLimitError("assemble_dense: N > 12 is not supported");
  const std::size_t dim = std::size_t{1} << n;
  CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  auto bit = [n](int site) { return std::size_t{1} << (n - 1 - site); };
  for (std::size_t c = 0; c < dim; ++c) {
    for (const auto& hop : terms.hop_terms) {
      bool down_i = c & bit(hop.i);
      bool down_j = c & bit(hop.j);
      if (down_i != down_j) {
        std::size_t flipped = c ^ bit(hop.i) ^ bit(hop.j);
        h(static_cast<Eigen::Index>(flipped), static_cast<Eigen::Index>(c)) += hop.coupling;
      }
    }
    for (const auto& f : terms.field_terms) {
      double z = (c & bit(f.site)) ? -1.0 : 1.0;
      h(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) += f.b * z;
    }
  }
  return h;
}

ProductState neel_state(int n_sites) {
  if (n_sites < 1) throw std::invalid_argument("neel_state: n_sites must be >= 1");
  ProductState s;
  for (int i = 0; i < n_sites; ++i) s.pattern.push_back(i % 2 == 0 ? Spin::up : Spin::down);
  return s;
}

void to_json(nlohmann::json& j, const ChainSpec& spec) {
  j = nlohmann::json{{"n_sites", spec.n_sites},
                     {"alpha", spec.alpha},
                     {"j0", spec.j0},
                     {"b_field", spec.b_field}};
  if (spec.couplings) {
    std::vector<double> flat;
    for (int a = 0; a < spec.n_sites; ++a)
      for (int b = 0; b < spec.n_sites; ++b) flat.push_back((*spec.couplings)(a, b));
    j["couplings"] = flat;
  }
}

void from_json(const nlohmann::json& j, ChainSpec& spec) {
  try {
    spec.n_sites = j.at("n_sites").get<int>();
    spec.alpha = j.value("alpha", 1.0);
    spec.j0 = j.value("j0", 1.0);
    spec.b_field = j.value("b_field", 0.0);
    spec.couplings.reset();
    if (j.contains("couplings") && !j["couplings"].is_null()) {
      auto flat = j["couplings"].get<std::vector<double>>();
      const auto n = static_cast<std::size_t>(spec.n_sites);
      if (flat.size() != n * n) throw ConfigError("chain: couplings must have n_sites^2 entries");
      RMatrix m(spec.n_sites, spec.n_sites);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = flat[a * n + b];
      spec.couplings = m;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("chain: ") + e.what());
  }
  spec.validate();
}

}  // namespace mpstomo
