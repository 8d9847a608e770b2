#include "mpstomo/measure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mpstomo {
namespace {

// Maps the +1 eigenvector of the axis onto |up>.
Eigen::Matrix2cd rotation_to_z(char axis) {
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Matrix2cd u;
  switch (axis) {
    case 'X':
      u << s, s, s, -s;
      break;
    case 'Y':
      u << s, cplx(0, -s), s, cplx(0, s);
      break;
    case 'Z':
      u.setIdentity();
      break;
    default:
      throw std::invalid_argument(std::string("unknown measurement axis '") + axis + "'");
  }
  return u;
}

void check_setting(const BasisSetting& s, int n_sites) {
  if (static_cast<int>(s.axes.size()) != n_sites)
    throw std::invalid_argument("setting length " + std::to_string(s.axes.size()) +
                                " does not match N = " + std::to_string(n_sites));
  for (char c : s.axes)
    if (c != 'X' && c != 'Y' && c != 'Z')
      throw std::invalid_argument("setting '" + s.axes + "' has a letter outside XYZ");
}

std::string outcome_string(std::uint32_t idx, int n) {
  std::string s(static_cast<std::size_t>(n), '1');
  for (int j = 0; j < n; ++j)
    if (idx >> (n - 1 - j) & 1u) s[static_cast<std::size_t>(j)] = '0';
  return s;
}

}  // namespace

void NoiseModel::validate() const {
  if (!(p_local >= 0.0 && p_local <= 1.0))
    throw ConfigError("noise p_local must lie in [0, 1]");
}

std::vector<BasisSetting> schedule_settings(int n_sites, int k) {
  if (k < 1 || k > n_sites) throw std::invalid_argument("schedule_settings: need 1 <= k <= N");
  static constexpr char kAxes[3] = {'X', 'Y', 'Z'};
  int total = 1;
  for (int i = 0; i < k; ++i) total *= 3;
  std::vector<BasisSetting> out;
  out.reserve(static_cast<std::size_t>(total));
  for (int w = 0; w < total; ++w) {
    std::string word(static_cast<std::size_t>(k), 'X');
    int rest = w;
    for (int i = k - 1; i >= 0; --i) {
      word[static_cast<std::size_t>(i)] = kAxes[rest % 3];
      rest /= 3;
    }
    BasisSetting s;
    for (int i = 0; i < n_sites; ++i) s.axes.push_back(word[static_cast<std::size_t>(i % k)]);
    out.push_back(std::move(s));
  }
  return out;
}

RVector outcome_probabilities(const StateVector& state, const BasisSetting& setting) {
  const int n = state.n_sites;
  check_setting(setting, n);
  CVector v = state.amplitudes;
  const std::size_t dim = v.size();
  for (int j = 0; j < n; ++j) {
    const char axis = setting.axes[static_cast<std::size_t>(j)];
    if (axis == 'Z') continue;
    const Eigen::Matrix2cd u = rotation_to_z(axis);
    const std::size_t bit = std::size_t{1} << (n - 1 - j);
    for (std::size_t i = 0; i < dim; ++i) {
      if (i & bit) continue;
      const cplx a0 = v[static_cast<Eigen::Index>(i)], a1 = v[static_cast<Eigen::Index>(i | bit)];
      v[static_cast<Eigen::Index>(i)] = u(0, 0) * a0 + u(0, 1) * a1;
      v[static_cast<Eigen::Index>(i | bit)] = u(1, 0) * a0 + u(1, 1) * a1;
    }
  }
  RVector p = v.cwiseAbs2();
  return p / p.sum();
}

ShotRecord sample_shots(const StateVector& state, const BasisSetting& setting, std::uint64_t shots,
                        std::uint64_t seed, const NoiseModel& noise) {
  if (shots < 1) throw std::invalid_argument("sample_shots: shots must be >= 1");
  noise.validate();
  const int n = state.n_sites;
  const RVector p = outcome_probabilities(state, setting);
  std::vector<double> cdf(static_cast<std::size_t>(p.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    cdf[static_cast<std::size_t>(i)] = acc;
  }
  Rng rng(seed);
  std::vector<std::uint64_t> hist(cdf.size(), 0);
  for (std::uint64_t s = 0; s < shots; ++s) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    auto idx = static_cast<std::uint32_t>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                                   static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    if (noise.p_local > 0.0) {
      for (int j = 0; j < n; ++j) {
        if (rng.uniform() < noise.p_local) {
          const std::uint32_t bit = 1u << (n - 1 - j);
          idx = (rng.bits() & 1u) ? (idx | bit) : (idx & ~bit);
        }
      }
    }
    ++hist[idx];
  }
  ShotRecord r;
  r.setting = setting;
  r.shots = shots;
  r.seed = seed;
  r.noise_p = noise.p_local;
  for (std::size_t i = 0; i < hist.size(); ++i)
    if (hist[i] > 0) r.counts[outcome_string(static_cast<std::uint32_t>(i), n)] = hist[i];
  return r;
}

std::vector<ShotRecord> run_campaign(const StateVector& state,
                                     const std::vector<BasisSetting>& settings,
                                     std::uint64_t shots, std::uint64_t master_seed,
                                     const NoiseModel& noise) {
  std::vector<ShotRecord> out;
  out.reserve(settings.size());
  for (std::size_t s = 0; s < settings.size(); ++s)
    out.push_back(sample_shots(state, settings[s], shots, derive_seed(master_seed, s), noise));
  return out;
}

void validate_record(const ShotRecord& r) {
  const std::size_t n = r.setting.axes.size();
  if (n == 0) throw FormatError("record has an empty setting");
  for (char c : r.setting.axes)
    if (c != 'X' && c != 'Y' && c != 'Z') throw FormatError("setting letter outside XYZ");
  std::uint64_t total = 0;
  for (const auto& [outcome, count] : r.counts) {
    if (outcome.size() != n) throw FormatError("outcome '" + outcome + "' has the wrong length");
    if (outcome.find_first_not_of("01") != std::string::npos)
      throw FormatError("outcome '" + outcome + "' is not a bitstring");
    total += count;
  }
  if (total != r.shots)
    throw FormatError("counts sum to " + std::to_string(total) + " but shots = " +
                      std::to_string(r.shots));
  if (!(r.noise_p >= 0.0 && r.noise_p <= 1.0)) throw FormatError("noise_p outside [0, 1]");
}

nlohmann::json record_to_json(const ShotRecord& r) {
  nlohmann::json j{{"format", "shots-v1"},
                   {"setting", r.setting.axes},
                   {"shots", r.shots},
                   {"seed", r.seed},
                   {"noise_p", r.noise_p},
                   {"counts", r.counts}};
  if (!r.config_hash.empty()) j["config_hash"] = r.config_hash;
  return j;
}

ShotRecord record_from_json(const nlohmann::json& j) {
  ShotRecord r;
  try {
    const auto fmt = j.at("format").get<std::string>();
    if (fmt != "shots-v1") throw FormatError("unsupported record format '" + fmt + "'");
    r.setting.axes = j.at("setting").get<std::string>();
    r.shots = j.at("shots").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.noise_p = j.at("noise_p").get<double>();
    r.counts = j.at("counts").get<std::map<std::string, std::uint64_t>>();
    if (j.contains("config_hash")) r.config_hash = j["config_hash"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(e.what());
  }
  validate_record(r);
  return r;
}

void persist_records(const std::vector<ShotRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<ShotRecord> ingest_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<ShotRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mpstomo
