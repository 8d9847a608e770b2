#include "mpstomo/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "mpstomo/analysis.hpp"
#include "mpstomo/exactsim.hpp"
#include "mpstomo/localtomo.hpp"
#include "mpstomo/measure.hpp"

namespace mpstomo {

namespace fs = std::filesystem;

namespace {

// Seed tags of the derivation chain: derive_seed(master, tag, time index, k).
enum SeedTag : std::uint64_t {
  kSeedCampaign = 1,
  kSeedReconData = 2,
  kSeedReconIdeal = 3,
  kSeedCertify = 4,
  kSeedDfe = 5,
  kSeedNegativity = 6,
};

std::string k_tag(int k) { return "_k" + std::to_string(k); }

std::string setting_file(std::size_t s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%02zu.jsonl", s);
  return buf;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::vector<DensityMatrix> noisy_reductions(const StateVector& v, int k, double p) {
  auto r = exact_local_reductions(v, k);
  if (p > 0.0)
    for (auto& x : r) x = depolarize(x, p);
  return r;
}

// Fidelity with the true lab state where the oracle can afford it.
nlohmann::json oracle_fidelity(const Mps& mps, const StateVector& v, double p) {
  if (p > 0.0 && v.n_sites > 10) return nullptr;
  return true_fidelity(mps, v, p);
}

nlohmann::json cert_summary(const nlohmann::json& c) {
  return nlohmann::json{{"f_c", c.at("f_c")},
                        {"bootstrap_stderr", c.at("bootstrap_stderr")},
                        {"valid", c.at("valid")},
                        {"reason", c.at("reason")},
                        {"gap", c.at("gap")},
                        {"energy", c.at("energy")},
                        {"width", c.at("width")},
                        {"bond_dims", c.at("bond_dims")},
                        {"true_fidelity", c.at("true_fidelity")},
                        {"half_chain_entropy", c.at("half_chain_entropy")}};
}

}  // namespace

void RunConfig::validate() const {
  chain.validate();
  if (times.empty()) throw ConfigError("times: at least one time is required");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0)) throw ConfigError("times must be non-negative");
    if (i > 0 && times[i] < times[i - 1]) throw ConfigError("times must be sorted ascending");
  }
  if (k < 1 || k > chain.n_sites) throw ConfigError("k must satisfy 1 <= k <= n_sites");
  if (k > 4) throw ConfigError("k > 4 is not supported (3^k settings, 4^k Pauli words)");
  if (shots < 1) throw ConfigError("shots must be >= 1");
  NoiseModel{noise_p}.validate();
  recon.validate();
  if (!(support_tol > 0.0)) throw ConfigError("support_tol must be positive");
  if (n_boot < 0) throw ConfigError("n_boot must be >= 0");
  if (dfe_samples < 1) throw ConfigError("dfe_samples must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!data && !idealized) throw ConfigError("enable at least one of data and idealized");
}

double RunConfig::jbar() const { return chain.n_sites > 1 ? mean_nn_coupling(chain.coupling_matrix()) : 0.0; }

RunConfig load_config(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    c.chain = j.at("chain").get<ChainSpec>();
    if (j.contains("times") == j.contains("times_jbar"))
      throw ConfigError("give exactly one of times and times_jbar");
    if (j.contains("times")) {
      c.times = j.at("times").get<std::vector<double>>();
    } else {
      const double jb = mean_nn_coupling(c.chain.coupling_matrix());
      for (double x : j.at("times_jbar").get<std::vector<double>>()) c.times.push_back(x / jb);
    }
    c.k = get_or(j, "k", c.k);
    c.shots = get_or(j, "shots", c.shots);
    c.seed = get_or(j, "seed", c.seed);
    c.noise_p = get_or(j, "noise_p", c.noise_p);
    c.support_tol = get_or(j, "support_tol", c.support_tol);
    c.n_boot = get_or(j, "n_boot", c.n_boot);
    c.dfe_samples = get_or(j, "dfe_samples", c.dfe_samples);
    c.idealized = get_or(j, "idealized", c.idealized);
    c.data = get_or(j, "data", c.data);
    c.threads = get_or(j, "threads", c.threads);
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    if (j.contains("recon")) {
      const auto& r = j.at("recon");
      c.recon.bond_dim = get_or(r, "bond_dim", c.recon.bond_dim);
      c.recon.max_sweeps = get_or(r, "max_sweeps", c.recon.max_sweeps);
      c.recon.cost_tol = get_or(r, "cost_tol", c.recon.cost_tol);
      c.recon.restarts = get_or(r, "restarts", c.recon.restarts);
      c.recon.inner_iters = get_or(r, "inner_iters", c.recon.inner_iters);
      c.recon.stage2_enabled = get_or(r, "stage2", c.recon.stage2_enabled);
      c.recon.stage2_max_iters = get_or(r, "stage2_max_iters", c.recon.stage2_max_iters);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return load_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::json config_to_json(const RunConfig& c) {
  return nlohmann::json{{"chain", c.chain},
                        {"times", c.times},
                        {"k", c.k},
                        {"shots", c.shots},
                        {"seed", c.seed},
                        {"noise_p", c.noise_p},
                        {"support_tol", c.support_tol},
                        {"n_boot", c.n_boot},
                        {"dfe_samples", c.dfe_samples},
                        {"idealized", c.idealized},
                        {"data", c.data},
                        {"recon",
                         {{"bond_dim", c.recon.bond_dim},
                          {"max_sweeps", c.recon.max_sweeps},
                          {"cost_tol", c.recon.cost_tol},
                          {"restarts", c.recon.restarts},
                          {"inner_iters", c.recon.inner_iters},
                          {"stage2", c.recon.stage2_enabled},
                          {"stage2_max_iters", c.recon.stage2_max_iters}}}};
}

std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(config_to_json(c).dump())); }

Run::Run(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  hash_ = config_hash(cfg_);
  dir_ = cfg_.out_dir / ("run-" + hash_);
  fs::create_directories(dir_);
  const auto cj = stamp(nlohmann::json{{"format", "config-v1"}, {"config", config_to_json(cfg_)}});
  if (have("config.json")) {
    if (read_json("config.json", "config-v1") != cj) throw FormatError(path("config.json").string() + ": config mismatch");
  } else {
    write_json("config.json", cj);
  }
}

std::string Run::time_tag(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%03zu", i);
  return buf;
}

nlohmann::json Run::stamp(nlohmann::json j) const {
  j["config_hash"] = hash_;
  return j;
}

void Run::write_json(const std::string& rel, const nlohmann::json& j) const {
  write_text(rel, j.dump(1) + "\n");
}

void Run::write_text(const std::string& rel, const std::string& text) const {
  const fs::path p = path(rel);
  fs::create_directories(p.parent_path());
  // Write then rename so a half-written file never looks complete.
  const fs::path tmp = p.string() + ".part";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, p);
}

nlohmann::json Run::read_json(const std::string& rel, const std::string& format) const {
  std::ifstream in(path(rel));
  if (!in) throw FormatError("missing artifact " + path(rel).string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path(rel).string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != format)
    throw FormatError(path(rel).string() + ": expected format " + format);
  if (j.value("config_hash", "") != hash_) throw FormatError(path(rel).string() + ": config hash mismatch");
  return j;
}

bool Run::have(const std::string& rel) const { return fs::exists(path(rel)); }

template <class F>
void Run::for_each_time(F&& f) const {
  const std::size_t n = cfg_.times.size();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg_.threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

StateVector Run::state_at(std::size_t i) const {
  try {
    return evolve_exact(cfg_.chain, neel_state(cfg_.chain.n_sites), cfg_.times[i]);
  } catch (const SizeLimitError& e) {
    throw SizeLimitError(std::string(e.what()) + "; reduce n_sites to at most " + std::to_string(kMaxExactSites));
  }
}

void Run::simulate() {
  for_each_time([&](std::size_t i) {
    const std::string rel = "states/" + time_tag(i) + ".json";
    if (have(rel)) return;
    const StateVector v = state_at(i);
    nlohmann::json j{{"format", "state-meta-v1"},
                     {"index", i},
                     {"t", cfg_.times[i]},
                     {"t_jbar", cfg_.times[i] * cfg_.jbar()},
                     {"magnetization", magnetization_profile(v)},
                     {"half_chain_entropy", half_chain_entropy(mps_from_statevector(v, 0.0))}};
    if (v.n_sites <= 10) j["state"] = state_to_json(v);
    write_json(rel, stamp(j));
  });
}

void Run::campaign() {
  if (!cfg_.data) return;
  simulate();
  const auto settings = schedule_settings(cfg_.chain.n_sites, cfg_.k);
  for_each_time([&](std::size_t i) {
    const std::string dir = "shots/" + time_tag(i) + "/";
    if (have(dir + setting_file(settings.size() - 1))) return;
    auto recs = run_campaign(state_at(i), settings, cfg_.shots, derive_seed(cfg_.seed, kSeedCampaign, i),
                             NoiseModel{cfg_.noise_p});
    for (std::size_t s = 0; s < recs.size(); ++s) {
      recs[s].config_hash = hash_;
      const fs::path p = path(dir + setting_file(s));
      fs::create_directories(p.parent_path());
      fs::remove(p);
      persist_records({recs[s]}, p);
    }
  });
}

std::vector<ShotRecord> Run::records_at(std::size_t i) const {
  std::vector<ShotRecord> out;
  const std::size_t n = schedule_settings(cfg_.chain.n_sites, cfg_.k).size();
  for (std::size_t s = 0; s < n; ++s) {
    const fs::path p = path("shots/" + time_tag(i) + "/" + setting_file(s));
    if (!fs::exists(p)) throw FormatError("missing shot records " + p.string());
    for (auto& r : ingest_records(p)) {
      if (r.config_hash != hash_) throw FormatError(p.string() + ": config hash mismatch");
      out.push_back(std::move(r));
    }
  }
  return out;
}

void Run::tomo() {
  if (!cfg_.data) return;
  campaign();
  for_each_time([&](std::size_t i) {
    std::vector<ShotRecord> recs;
    for (int k = 1; k <= cfg_.k; ++k) {
      const std::string rel = "tomo/" + time_tag(i) + k_tag(k) + ".json";
      if (have(rel)) continue;
      if (recs.empty()) recs = records_at(i);
      const auto est = estimate_all_reductions(recs, k);
      write_json(rel, stamp({{"format", "tomo-v1"},
                             {"t", cfg_.times[i]},
                             {"k", k},
                             {"estimates", estimates_to_json(est)},
                             {"overlap_inconsistency", overlap_inconsistency(est)}}));
    }
  });
}

std::vector<WindowEstimate> Run::estimates_at(std::size_t i, int k) const {
  return estimates_from_json(read_json("tomo/" + time_tag(i) + k_tag(k) + ".json", "tomo-v1").at("estimates"));
}

void Run::reconstruct() {
  simulate();
  tomo();
  for_each_time([&](std::size_t i) {
    const StateVector v = state_at(i);
    std::vector<ShotRecord> recs;
    for (int k = 1; k <= cfg_.k; ++k) {
      auto run_cell = [&](const std::string& rel, std::uint64_t tag, bool data) {
        if (have(rel) || have(rel + ".error")) return;
        try {
          ReconstructionOptions o = cfg_.recon;
          o.seed = derive_seed(cfg_.seed, tag, i, static_cast<std::uint64_t>(k));
          const auto est = data ? estimates_at(i, k) : exact_estimates(noisy_reductions(v, k, cfg_.noise_p));
          ReconstructionReport rep = reconstruct_variational(est, o);
          nlohmann::json j = report_to_json(rep);
          if (data && o.stage2_enabled) {
            if (recs.empty()) recs = records_at(i);
            const ReconstructionReport r2 = refine_likelihood(rep.mps, recs, o);
            j = report_to_json(r2);
            j["stage1"] = report_to_json(rep);
            j["final_cost"] = reduction_cost(r2.mps, est);
          }
          j["t"] = cfg_.times[i];
          j["k"] = k;
          j["path"] = data ? "data" : "ideal";
          write_json(rel, stamp(j));
        } catch (const std::exception& e) {
          write_json(rel + ".error", stamp({{"format", "cell-error-v1"}, {"stage", "reconstruct"}, {"error", e.what()}}));
        }
      };
      if (cfg_.data) run_cell("recon/" + time_tag(i) + k_tag(k) + ".json", kSeedReconData, true);
      if (cfg_.idealized) run_cell("ideal/recon_" + time_tag(i) + k_tag(k) + ".json", kSeedReconIdeal, false);
    }
  });
}

void Run::certify() {
  reconstruct();
  for_each_time([&](std::size_t i) {
    const StateVector v = state_at(i);
    auto run_path = [&](bool data) {
      std::vector<Mps> sources;
      for (int k = 1; k <= cfg_.k; ++k) {
        const std::string tk = time_tag(i) + k_tag(k);
        const std::string recon_rel = data ? "recon/" + tk + ".json" : "ideal/recon_" + tk + ".json";
        const std::string rel = data ? "cert/" + tk + ".json" : "ideal/cert_" + tk + ".json";
        if (have(recon_rel)) {
          const auto rj = read_json(recon_rel, "recon-v1");
          sources.push_back(mps_from_json(rj.at("mps")));
          if (rj.contains("stage1")) sources.push_back(mps_from_json(rj.at("stage1").at("mps")));
        }
        if (have(rel) || have(rel + ".error")) continue;
        try {
          if (sources.empty()) throw std::runtime_error("no reconstruction available");
          const auto est = data ? estimates_at(i, k) : exact_estimates(noisy_reductions(v, k, cfg_.noise_p));
          CertifyOptions co;
          co.support_tol = cfg_.support_tol;
          co.n_boot = data ? cfg_.n_boot : 0;
          co.seed = derive_seed(cfg_.seed, kSeedCertify, i, static_cast<std::uint64_t>(k));
          const Certificate c = certify_best(sources, est, co);
          nlohmann::json j = certificate_to_json(c);
          j["t"] = cfg_.times[i];
          j["k"] = k;
          j["path"] = data ? "data" : "ideal";
          j["true_fidelity"] = oracle_fidelity(c.mps, v, cfg_.noise_p);
          j["half_chain_entropy"] = half_chain_entropy(c.mps);
          j["support_tol"] = cfg_.support_tol;
          write_json(rel, stamp(j));
        } catch (const std::exception& e) {
          write_json(rel + ".error", stamp({{"format", "cell-error-v1"}, {"stage", "certify"}, {"error", e.what()}}));
        }
      }
    };
    if (cfg_.data) run_path(true);
    if (cfg_.idealized) run_path(false);
  });
}

void Run::analyze() {
  certify();
  const int n = cfg_.chain.n_sites;
  std::vector<std::vector<double>> mag_exact(cfg_.times.size()), mag_data(cfg_.times.size());
  for_each_time([&](std::size_t i) {
    const StateVector v = state_at(i);
    mag_exact[i] = magnetization_profile(v);
    const std::string tt = time_tag(i);
    const std::string rel = "analysis/" + tt + ".json";
    nlohmann::json j{{"format", "analysis-v1"}, {"t", cfg_.times[i]}, {"magnetization_exact", mag_exact[i]}};
    write_text("analysis/corr_zz_" + tt + "_exact.csv", correlation_csv(correlation_matrix(v, 'Z', 'Z')));
    if (cfg_.data) {
      const auto recs = records_at(i);
      mag_data[i] = magnetization_profile(recs);
      j["magnetization_data"] = mag_data[i];
      write_text("analysis/corr_zz_" + tt + "_data.csv", correlation_csv(correlation_matrix(recs, 'Z', 'Z')));
      const std::string cert_rel = "cert/" + tt + k_tag(cfg_.k) + ".json";
      if (have(cert_rel)) {
        const Mps m = mps_from_json(read_json(cert_rel, "cert-v1").at("mps"));
        write_text("analysis/corr_zz_" + tt + "_cert.csv", correlation_csv(correlation_matrix(m, 'Z', 'Z')));
      }
      for (int k = 2; k <= std::min(cfg_.k, 3); ++k) {
        std::vector<std::pair<int, NegativityEstimate>> rows;
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : estimates_at(i, k)) {
          const auto ne = window_negativity(e, cfg_.n_boot, derive_seed(cfg_.seed, kSeedNegativity, i, static_cast<std::uint64_t>(k)));
          rows.emplace_back(e.window.first, ne);
          arr.push_back({{"window", e.window.first}, {"value", ne.value}, {"stderr", ne.stderr}});
        }
        write_text("analysis/negativity_" + tt + k_tag(k) + ".csv", negativity_csv(rows));
        j["negativity" + k_tag(k)] = arr;
      }
    }
    // Exact negativities of the ideal state for the model curves.
    for (int k = 2; k <= std::min(3, n); ++k) {
      nlohmann::json arr = nlohmann::json::array();
      const auto red = noisy_reductions(v, k, cfg_.noise_p);
      for (std::size_t w = 0; w < red.size(); ++w)
        arr.push_back(k == 2 ? negativity(red[w], {0}) : tripartite_negativity(red[w]));
      j["negativity_exact" + k_tag(k)] = arr;
    }
    write_json(rel, stamp(j));
  });
  write_text("analysis/magnetization_exact.csv", magnetization_csv(cfg_.times, mag_exact));
  if (cfg_.data) write_text("analysis/magnetization_data.csv", magnetization_csv(cfg_.times, mag_data));
  std::string lc = "t,t_jbar,offset\n";
  for (const auto& p : light_cone_overlay(cfg_.chain.coupling_matrix(), cfg_.times)) {
    std::ostringstream o;
    o.precision(12);
    o << p.t << "," << p.t_jbar << "," << p.offset << "\n";
    lc += o.str();
  }
  write_text("analysis/light_cone.csv", lc);
}

void Run::dfe() {
  certify();
  for_each_time([&](std::size_t i) {
    const std::string rel = "dfe/" + time_tag(i) + ".json";
    if (have(rel)) return;
    const std::string tk = time_tag(i) + k_tag(cfg_.k);
    const std::string cert_rel = cfg_.data ? "cert/" + tk + ".json" : "ideal/cert_" + tk + ".json";
    if (!have(cert_rel)) return;
    const auto cj = read_json(cert_rel, "cert-v1");
    const Mps m = mps_from_json(cj.at("mps"));
    const StateVector v = state_at(i);
    const DfePlan plan = dfe_plan(m, cfg_.dfe_samples, derive_seed(cfg_.seed, kSeedDfe, i));
    const DfeResult r = dfe_estimate(plan, v, cfg_.noise_p);
    nlohmann::json j = dfe_to_json(plan, &r);
    j["t"] = cfg_.times[i];
    j["certified_f_c"] = cj.at("f_c");
    j["true_fidelity"] = cj.at("true_fidelity");
    write_json(rel, stamp(j));
  });
}

nlohmann::json Run::report() {
  analyze();
  dfe();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg_.times.size(); ++i) {
    const std::string tt = time_tag(i);
    const auto sj = read_json("states/" + tt + ".json", "state-meta-v1");
    const auto aj = read_json("analysis/" + tt + ".json", "analysis-v1");
    nlohmann::json row{{"index", i},
                       {"t", cfg_.times[i]},
                       {"t_jbar", sj.at("t_jbar")},
                       {"half_chain_entropy_exact", sj.at("half_chain_entropy")},
                       {"magnetization_exact", sj.at("magnetization")}};
    for (const char* key : {"magnetization_data", "negativity_k2", "negativity_k3", "negativity_exact_k2",
                            "negativity_exact_k3"})
      if (aj.contains(key)) row[key] = aj.at(key);
    nlohmann::json cells = nlohmann::json::array();
    for (int k = 1; k <= cfg_.k; ++k) {
      nlohmann::json cell{{"k", k}};
      auto fill = [&](const std::string& key, const std::string& rel) {
        if (have(rel)) {
          cell[key] = cert_summary(read_json(rel, "cert-v1"));
        } else if (have(rel + ".error")) {
          cell[key] = {{"error", read_json(rel + ".error", "cell-error-v1").at("error")}};
        } else {
          // A failed reconstruction leaves its error on the recon artifact.
          cell[key] = nullptr;
        }
      };
      const std::string tk = tt + k_tag(k);
      if (cfg_.data) fill("data", "cert/" + tk + ".json");
      if (cfg_.idealized) fill("ideal", "ideal/cert_" + tk + ".json");
      for (const auto& [key, rel] : {std::pair<std::string, std::string>{"recon_error_data", "recon/" + tk + ".json.error"},
                                     {"recon_error_ideal", "ideal/recon_" + tk + ".json.error"}})
        if (have(rel)) cell[key] = read_json(rel, "cell-error-v1").at("error");
      cells.push_back(cell);
    }
    row["certificates"] = cells;
    if (have("dfe/" + tt + ".json")) {
      const auto dj = read_json("dfe/" + tt + ".json", "dfe-v1");
      row["dfe"] = dj.at("result");
    }
    rows.push_back(row);
  }
  nlohmann::json rep = stamp({{"format", "report-v1"},
                              {"config", config_to_json(cfg_)},
                              {"jbar", cfg_.jbar()},
                              {"light_cone_velocity", light_cone_velocity(cfg_.chain.coupling_matrix())},
                              {"times", rows}});
  write_json("report.json", rep);
  return rep;
}

}  // namespace mpstomo
