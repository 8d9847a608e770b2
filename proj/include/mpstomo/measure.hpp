#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpstomo/common.hpp"
#include "mpstomo/exactsim.hpp"

namespace mpstomo {

/// One measurement axis per site, alphabet XYZ.
struct BasisSetting {
  std::string axes;

  bool operator==(const BasisSetting&) const = default;
};

struct NoiseModel {
  double p_local = 0.0;  // per-site depolarizing probability

  void validate() const;
};

/// Outcome strings use '1' for the +1 eigenvalue along the site's axis and
/// '0' for -1; character j belongs to site j.
struct ShotRecord {
  BasisSetting setting;
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t shots = 0;
  std::uint64_t seed = 0;
  double noise_p = 0.0;
  std::string config_hash;  // empty when the record was produced outside a run

  bool operator==(const ShotRecord&) const = default;
};

/// The 3^k period-k settings. Word w (base 3, X=0 Y=1 Z=2, first letter most
/// significant) yields axes[i] = w[i mod k].
std::vector<BasisSetting> schedule_settings(int n_sites, int k);

/// Born-rule outcome probabilities for a setting, indexed like the dense basis:
/// bit (N-1-j) set means site j gave -1.
RVector outcome_probabilities(const StateVector& state, const BasisSetting& setting);

/// Samples `shots` outcomes. With probability p_local a site's outcome is
/// replaced by a fair coin, which is the depolarizing channel seen through
/// a projective measurement.
ShotRecord sample_shots(const StateVector& state, const BasisSetting& setting, std::uint64_t shots,
                        std::uint64_t seed, const NoiseModel& noise);

/// Samples every setting; setting s uses derive_seed(master_seed, s).
std::vector<ShotRecord> run_campaign(const StateVector& state,
                                     const std::vector<BasisSetting>& settings,
                                     std::uint64_t shots, std::uint64_t master_seed,
                                     const NoiseModel& noise);

/// Throws FormatError if counts do not sum to shots or strings are malformed.
void validate_record(const ShotRecord& r);

nlohmann::json record_to_json(const ShotRecord& r);
ShotRecord record_from_json(const nlohmann::json& j);

/// Appends one JSON line per record ("shots-v1").
void persist_records(const std::vector<ShotRecord>& records, const std::filesystem::path& path);
/// Reads a JSONL file; FormatError messages carry the 1-based line number.
std::vector<ShotRecord> ingest_records(const std::filesystem::path& path);

}  // namespace mpstomo
