#include "mpstomo/common.hpp"

#include <cmath>
#include <cstdio>

namespace mpstomo {

Eigen::Matrix2cd pauli_matrix(char p) {
  using namespace std::complex_literals;
  Eigen::Matrix2cd m;
  switch (p) {
    case 'I': m << 1, 0, 0, 1; break;
    case 'X': m << 0, 1, 1, 0; break;
    case 'Y': m << 0, -1i, 1i, 0; break;
    case 'Z': m << 1, 0, 0, -1; break;
    default:
      throw std::invalid_argument(std::string("not a Pauli letter: '") + p + "'");
  }
  return m;
}

void check_pauli_string(std::string_view word, std::size_t expected_length) {
  if (word.size() != expected_length) {
    throw std::invalid_argument("Pauli string '" + std::string(word) + "' has length " +
                                std::to_string(word.size()) + ", expected " +
                                std::to_string(expected_length));
  }
  for (char c : word) {
    if (c != 'I' && c != 'X' && c != 'Y' && c != 'Z') {
      throw std::invalid_argument("malformed Pauli string '" + std::string(word) + "'");
    }
  }
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

CMatrix pauli_word_matrix(std::string_view word) {
  CMatrix out = CMatrix::Identity(1, 1);
  for (char c : word) out = kron(out, pauli_matrix(c));
  return out;
}

std::vector<std::string> all_pauli_words(int k) {
  static constexpr char kLetters[] = {'I', 'X', 'Y', 'Z'};
  std::size_t count = std::size_t{1} << (2 * k);
  std::vector<std::string> words;
  words.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::string w(static_cast<std::size_t>(k), 'I');
    std::size_t rest = idx;
    for (int pos = k - 1; pos >= 0; --pos) {
      w[static_cast<std::size_t>(pos)] = kLetters[rest & 3u];
      rest >>= 2;
    }
    words.push_back(std::move(w));
  }
  return words;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return splitmix64(h ^ c);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 in (0, 1] keeps the log finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace mpstomo
