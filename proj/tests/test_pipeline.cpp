#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mpstomo/pipeline.hpp"

using namespace mpstomo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mpstomo_test_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "chain": {"n_sites": 5, "alpha": 1.6, "j0": 1.0, "b_field": 0.0},
    "times_jbar": [0.0, 0.15],
    "k": 3, "shots": 100, "seed": 7, "noise_p": 0.02,
    "n_boot": 10, "dfe_samples": 40,
    "recon": {"restarts": 1, "max_sweeps": 40}
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(MPSTOMO_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config loading and validation") {
  const RunConfig c = load_config(small_config());
  CHECK(c.k == 3);
  CHECK(c.times.size() == 2);
  CHECK(c.times[1] * c.jbar() == doctest::Approx(0.15));

  auto bad = [](auto edit) {
    nlohmann::json j = small_config();
    edit(j);
    return j;
  };
  CHECK_THROWS_AS(load_config(bad([](auto& j) { j["k"] = 0; })), ConfigError);
  CHECK_THROWS_AS(load_config(bad([](auto& j) { j["k"] = 6; })), ConfigError);
  CHECK_THROWS_AS(load_config(bad([](auto& j) { j["times_jbar"] = {0.2, 0.1}; })), ConfigError);
  CHECK_THROWS_AS(load_config(bad([](auto& j) { j["times"] = {0.1}; })), ConfigError);
  CHECK_THROWS_AS(load_config(bad([](auto& j) { j["noise_p"] = 1.5; })), ConfigError);
  CHECK_THROWS_AS(load_config(bad([](auto& j) { j["shots"] = "many"; })), ConfigError);
  CHECK_THROWS_AS(load_config(bad([](auto& j) { j.erase("chain"); })), ConfigError);
  CHECK_THROWS_AS(load_config(bad([](auto& j) { j["chain"]["n_sites"] = 1; })), ConfigError);
  CHECK_THROWS_AS(load_config_file("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config hash covers results, not placement") {
  RunConfig a = load_config(small_config());
  RunConfig b = a;
  b.out_dir = "elsewhere";
  b.threads = 4;
  CHECK(config_hash(a) == config_hash(b));
  b.seed += 1;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.recon.stage2_enabled = true;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("full run is deterministic and complete") {
  RunConfig c = load_config(small_config());
  c.out_dir = scratch("a");
  Run a(c);
  const nlohmann::json ra = a.report();

  // Shot records: 3^k settings per time point.
  for (std::size_t i = 0; i < c.times.size(); ++i) {
    int files = 0;
    for (const auto& e : fs::directory_iterator(a.dir() / "shots" / Run::time_tag(i))) files += e.path().extension() == ".jsonl";
    CHECK(files == 27);
  }
  for (const char* rel : {"analysis/magnetization_exact.csv", "analysis/magnetization_data.csv", "analysis/light_cone.csv",
                          "analysis/negativity_t001_k3.csv", "analysis/corr_zz_t001_cert.csv", "dfe/t001.json",
                          "cert/t001_k3.json", "ideal/cert_t001_k3.json"})
    CHECK_MESSAGE(fs::exists(a.dir() / rel), rel);

  const auto& rows = ra.at("times");
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    double prev = -1.0;
    for (const auto& cell : row.at("certificates")) {
      const auto& ideal = cell.at("ideal");
      REQUIRE(ideal.contains("f_c"));
      const double f = ideal.at("f_c");
      CHECK(f >= prev - 1e-12);
      CHECK(f <= ideal.at("true_fidelity").get<double>() + 1e-8);
      prev = f;
      CHECK(cell.at("data").contains("f_c"));
    }
  }

  // A second directory and a threaded run reproduce the report byte for byte.
  c.out_dir = scratch("b");
  c.threads = 2;
  Run b(c);
  b.report();
  CHECK(a.hash() == b.hash());
  CHECK(slurp(a.dir() / "report.json") == slurp(b.dir() / "report.json"));

  // Rerunning over cached artifacts changes nothing.
  const std::string before = slurp(a.dir() / "report.json");
  c.out_dir = a.config().out_dir;
  Run again(c);
  again.report();
  CHECK(slurp(a.dir() / "report.json") == before);
}

TEST_CASE("artifacts from another run are rejected") {
  RunConfig c = load_config(small_config());
  c.times = {0.0};
  c.k = 2;
  c.out_dir = scratch("tamper");
  Run r(c);
  r.certify();
  const fs::path cert = r.dir() / "cert" / "t000_k2.json";
  nlohmann::json j = nlohmann::json::parse(slurp(cert));
  j["config_hash"] = "0000000000000000";
  std::ofstream(cert) << j.dump();
  CHECK_THROWS_AS(r.report(), FormatError);

  j["config_hash"] = r.hash();
  j["format"] = "cert-v0";
  std::ofstream(cert) << j.dump();
  CHECK_THROWS_AS(r.report(), FormatError);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  const fs::path good = dir / "good.json";
  nlohmann::json j = small_config();
  j["times_jbar"] = {0.1};
  j["k"] = 2;
  std::ofstream(good) << j.dump();
  const std::string out = " --out " + (dir / "runs").string();

  CHECK(cli("simulate --config " + good.string() + out) == 0);
  CHECK(cli("tomo --config " + good.string() + out + " --k 9") == 2);
  CHECK(cli("simulate" + out) == 2);
  CHECK(cli("bogus") == 2);

  j["chain"]["n_sites"] = 30;
  const fs::path big = dir / "big.json";
  std::ofstream(big) << j.dump();
  CHECK(cli("simulate --config " + big.string() + out) == 3);

  // Corrupt a cached artifact of the good run.
  CHECK(cli("certify --config " + good.string() + out) == 0);
  for (const auto& e : fs::recursive_directory_iterator(dir / "runs"))
    if (e.path().filename() == "t000_k2.json" && e.path().parent_path().filename() == "cert") std::ofstream(e.path()) << "{";
  CHECK(cli("report --config " + good.string() + out) == 4);
}
