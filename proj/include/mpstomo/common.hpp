#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mpstomo {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

// Exit-code-bearing error families. The CLI maps them onto process exit codes.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SizeLimitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CoverageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual(residual) {}
  double residual;
};

/// Largest chain handled by the dense/sector oracles and the 2^N gap solver.
inline constexpr int kMaxExactSites = 16;

/// Pauli matrix for one of 'I', 'X', 'Y', 'Z' in the (up, down) basis.
/// Up is local index 0 and carries Z = +1.
Eigen::Matrix2cd pauli_matrix(char p);

/// Validates a Pauli word (alphabet IXYZ); throws std::invalid_argument.
void check_pauli_string(std::string_view word, std::size_t expected_length);

/// Dense Kronecker product of the word's single-site matrices, site 0 most significant.
CMatrix pauli_word_matrix(std::string_view word);

/// Enumerates all 4^k words over IXYZ, I-first lexicographic order.
std::vector<std::string> all_pauli_words(int k);

CMatrix kron(const CMatrix& a, const CMatrix& b);

// Seed derivation. Every random stream in the project is keyed by
// derive_seed(master, tag, index...) so results do not depend on scheduling.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

/// FNV-1a over bytes; used for config hashing.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Uniform double in [0, 1) from a 64-bit draw; 53 mantissa bits, platform independent.
inline double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Seeded stream with platform-independent uniform and normal draws
/// (std distributions are implementation-defined, which breaks byte-identical reruns).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return unit_double(engine_()); }
  double normal();
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mpstomo
