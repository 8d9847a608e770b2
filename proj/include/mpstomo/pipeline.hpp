#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpstomo/certify.hpp"
#include "mpstomo/reconstruct.hpp"
#include "mpstomo/spinmodel.hpp"

namespace mpstomo {

struct RunConfig {
  ChainSpec chain;
  std::vector<double> times;  // model time units (hbar = 1)
  int k = 3;
  std::uint64_t shots = 1000;
  std::uint64_t seed = 1;
  double noise_p = 0.0;
  ReconstructionOptions recon;
  double support_tol = 1e-7;
  int n_boot = 200;
  int dfe_samples = 250;
  bool idealized = true;  // also run the exact-reduction curve
  bool data = true;       // run the sampled-data path
  int threads = 1;
  std::filesystem::path out_dir = "runs";

  /// Throws ConfigError.
  void validate() const;
  double jbar() const;
};

/// Reads a config file. "times" are model time units; "times_jbar" are
/// multiples of 1/J-bar and are converted. Throws ConfigError.
RunConfig load_config(const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path);

/// Everything that affects results (not the output directory or threads).
nlohmann::json config_to_json(const RunConfig& c);
std::string config_hash(const RunConfig& c);

/// One content-addressed run directory, <out>/run-<hash>.
class Run {
 public:
  explicit Run(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  const std::filesystem::path& dir() const { return dir_; }

  void simulate();
  void campaign();
  void tomo();
  void reconstruct();
  void certify();
  void analyze();
  void dfe();
  /// Runs any missing stage, then writes report.json.
  nlohmann::json report();

  static std::string time_tag(std::size_t i);

 private:
  std::filesystem::path path(const std::string& rel) const { return dir_ / rel; }
  void write_json(const std::string& rel, const nlohmann::json& j) const;
  nlohmann::json read_json(const std::string& rel, const std::string& format) const;
  void write_text(const std::string& rel, const std::string& text) const;
  bool have(const std::string& rel) const;
  nlohmann::json stamp(nlohmann::json j) const;

  StateVector state_at(std::size_t i) const;
  std::vector<ShotRecord> records_at(std::size_t i) const;
  std::vector<WindowEstimate> estimates_at(std::size_t i, int k) const;
  template <class F>
  void for_each_time(F&& f) const;

  RunConfig cfg_;
  std::string hash_;
  std::filesystem::path dir_;
};

}  // namespace mpstomo
