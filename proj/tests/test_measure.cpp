#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mpstomo/measure.hpp"
#include "oracles.hpp"

using namespace mpstomo;

namespace {

double up_fraction(const ShotRecord& r, int site) {
  std::uint64_t up = 0;
  for (const auto& [o, c] : r.counts)
    if (o[static_cast<std::size_t>(site)] == '1') up += c;
  return static_cast<double>(up) / static_cast<double>(r.shots);
}

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mpstomo_test_" + name);
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("schedule sizes") {
  CHECK(schedule_settings(8, 3).size() == 27);
  const auto k1 = schedule_settings(8, 1);
  REQUIRE(k1.size() == 3);
  CHECK(k1[0].axes == "XXXXXXXX");
  CHECK(k1[1].axes == "YYYYYYYY");
  CHECK(k1[2].axes == "ZZZZZZZZ");
  CHECK(schedule_settings(5, 2).size() == 9);
  CHECK_THROWS_AS(schedule_settings(3, 4), std::invalid_argument);
  CHECK_THROWS_AS(schedule_settings(3, 0), std::invalid_argument);
}

TEST_CASE("schedule completeness over every window") {
  for (int n = 1; n <= 14; ++n)
    for (int k = 1; k <= std::min(n, 4); ++k) {
      const auto settings = schedule_settings(n, k);
      for (int i = 0; i + k <= n; ++i) {
        std::set<std::string> seen;
        for (const auto& s : settings) seen.insert(s.axes.substr(static_cast<std::size_t>(i), static_cast<std::size_t>(k)));
        CHECK(seen.size() == static_cast<std::size_t>(std::pow(3, k)));
      }
    }
}

TEST_CASE("Neel in Z is deterministic") {
  const auto v = product_state_vector(neel_state(8));
  const auto r = sample_shots(v, {"ZZZZZZZZ"}, 500, 1, NoiseModel{});
  REQUIRE(r.counts.size() == 1);
  CHECK(r.counts.begin()->first == "10101010");
  CHECK(r.counts.begin()->second == 500);
}

TEST_CASE("single spin up measured along X and Y is a fair coin") {
  const auto v = product_state_vector(neel_state(1));
  const double sigma = std::sqrt(0.25 / 1e5);
  CHECK(std::abs(up_fraction(sample_shots(v, {"X"}, 100000, 2, NoiseModel{}), 0) - 0.5) < 4 * sigma);
  CHECK(std::abs(up_fraction(sample_shots(v, {"Y"}, 100000, 3, NoiseModel{}), 0) - 0.5) < 4 * sigma);
}

TEST_CASE("depolarized Neel site 0") {
  const auto v = product_state_vector(neel_state(4));
  const auto r = sample_shots(v, {"ZZZZ"}, 100000, 4, NoiseModel{0.2});
  const double sigma = std::sqrt(0.9 * 0.1 / 1e5);
  CHECK(std::abs(up_fraction(r, 0) - 0.9) < 4 * sigma);
  CHECK(std::abs(up_fraction(r, 1) - 0.1) < 4 * sigma);
}

TEST_CASE("marginals match the rotated-state probabilities") {
  for (int n : {2, 4, 6}) {
    const CVector psi = oracle::random_state(n, static_cast<std::uint64_t>(n));
    for (char axis : {'X', 'Y', 'Z'}) {
      const std::string axes(static_cast<std::size_t>(n), axis);
      const auto r = sample_shots(oracle::as_state(psi, n), {axes}, 100000, 7, NoiseModel{});
      for (int j = 0; j < n; ++j) {
        std::string w(static_cast<std::size_t>(n), 'I');
        w[static_cast<std::size_t>(j)] = axis;
        const double p = 0.5 * (1.0 + oracle::pauli_expectation(psi, w));
        const double sigma = std::sqrt(std::max(p * (1 - p), 1e-12) / 1e5);
        CHECK(std::abs(up_fraction(r, j) - p) < 5 * sigma + 1e-12);
      }
    }
  }
}

TEST_CASE("Y rotation distinguishes +y from -y") {
  CVector plus_y(2);
  plus_y << 1.0 / std::sqrt(2.0), cplx(0, 1.0 / std::sqrt(2.0));
  const auto r = sample_shots(oracle::as_state(plus_y, 1), {"Y"}, 1000, 5, NoiseModel{});
  CHECK(up_fraction(r, 0) == 1.0);
}

TEST_CASE("sampling is deterministic per seed") {
  const auto psi = oracle::as_state(oracle::random_state(5, 9), 5);
  const auto a = sample_shots(psi, {"XYZXY"}, 3000, 11, NoiseModel{0.05});
  const auto b = sample_shots(psi, {"XYZXY"}, 3000, 11, NoiseModel{0.05});
  CHECK(a == b);
  const auto c = sample_shots(psi, {"XYZXY"}, 3000, 12, NoiseModel{0.05});
  CHECK_FALSE(a.counts == c.counts);
  const auto camp = run_campaign(psi, schedule_settings(5, 2), 100, 5, NoiseModel{});
  CHECK(camp.size() == 9);
  CHECK(camp[3].seed == derive_seed(5, 3));
}

TEST_CASE("persist and ingest round trip") {
  const auto psi = oracle::as_state(oracle::random_state(4, 1), 4);
  auto recs = run_campaign(psi, schedule_settings(4, 3), 200, 8, NoiseModel{0.01});
  REQUIRE(recs.size() == 27);
  const auto path = temp_file("roundtrip.jsonl");
  persist_records(recs, path);
  CHECK(ingest_records(path) == recs);

  ShotRecord big = sample_shots(psi, {"ZZZZ"}, 1000000, 3, NoiseModel{});
  big.config_hash = "abc";
  const auto p2 = temp_file("big.jsonl");
  persist_records({big}, p2);
  const auto back = ingest_records(p2);
  REQUIRE(back.size() == 1);
  CHECK(back[0].counts == big.counts);
  CHECK(back[0].config_hash == "abc");
}

TEST_CASE("ingest rejects corrupted records with a line number") {
  const auto psi = oracle::as_state(oracle::random_state(3, 1), 3);
  const auto recs = run_campaign(psi, schedule_settings(3, 1), 50, 1, NoiseModel{});
  const auto path = temp_file("bad.jsonl");
  persist_records(recs, path);
  {
    std::ofstream out(path, std::ios::app);
    auto j = record_to_json(recs[0]);
    j["shots"] = 51;
    out << j.dump() << '\n';
  }
  try {
    ingest_records(path);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":4:") != std::string::npos);
  }
  const auto p2 = temp_file("version.jsonl");
  {
    std::ofstream out(p2);
    auto j = record_to_json(recs[0]);
    j["format"] = "shots-v0";
    out << j.dump() << '\n';
  }
  CHECK_THROWS_AS(ingest_records(p2), FormatError);
}
