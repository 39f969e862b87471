#include "mixls/run_io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mixls {

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

ScalePreset parse_scale(const std::string& name) {
  if (name == "desk") return ScalePreset::kDesk;
  if (name == "paper") return ScalePreset::kPaper;
  throw std::invalid_argument("unknown scale '" + name +
                              "' (valid: desk, paper)");
}

RunConfigFile RunConfigFile::load(const std::string& path) {
  RunConfigFile file;
  if (path.empty()) return file;
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open config file " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config parse failure in " + path + ": " +
                               e.what());
  }
  if (j.value("schema_version", 1) != 1) {
    throw std::invalid_argument("unsupported config schema_version in " + path);
  }
  file.plain = j.value("plain", nlohmann::json::object());
  file.psr = j.value("psr", nlohmann::json::object());
  return file;
}

PlainExperimentConfig make_plain_config(const RunManifest& manifest,
                                        const RunConfigFile& file,
                                        int dimension, bool symmetric) {
  PlainExperimentConfig config;
  config.dimension = dimension;
  config.symmetric = symmetric;
  config.master_seed = manifest.master_seed;
  if (manifest.scale == ScalePreset::kPaper) {
    config.mixture_count = 1000;
    config.starts_per_mixture = 100;
  }
  const auto& j = file.plain;
  config.mixture_count = j.value("mixture_count", config.mixture_count);
  config.starts_per_mixture =
      j.value("starts_per_mixture", config.starts_per_mixture);
  config.success_threshold =
      j.value("success_threshold", config.success_threshold);
  config.grid_resolution = j.value("grid_resolution", config.grid_resolution);
  config.loss_config.damping = j.value("damping", config.loss_config.damping);
  config.dcs_phi = j.value("dcs_phi", config.dcs_phi);
  return config;
}

PsrExperimentConfig make_psr_config(const RunManifest& manifest,
                                    const RunConfigFile& file) {
  const auto& j = file.psr;
  PsrExperimentConfig config =
      PsrExperimentConfig::for_dimension(j.value("dimension", 2));
  config.master_seed = manifest.master_seed;
  if (manifest.scale == ScalePreset::kPaper) {
    config.configurations = 100;
    config.runs_per_configuration = 1000;
  }
  config.configurations = j.value("configurations", config.configurations);
  config.runs_per_configuration =
      j.value("runs_per_configuration", config.runs_per_configuration);
  config.outlier_component =
      j.value("outlier_component", config.outlier_component);
  config.outlier_weight = j.value("outlier_weight", config.outlier_weight);
  config.outlier_sigma = j.value("outlier_sigma", config.outlier_sigma);
  config.loss_config.damping = j.value("damping", config.loss_config.damping);
  return config;
}

std::string config_fingerprint(const nlohmann::json& canonical_config) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a_hash(canonical_config.dump())));
  return buffer;
}

namespace {

std::string format_double(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buffer[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buffer;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  return out;
}

void write_provenance(std::ofstream& out, std::uint64_t seed,
                      const std::string& config_hash) {
  out << "# mixls " << kVersion << " seed=" << seed << " config="
      << config_hash << "\n";
  out << "# generated " << timestamp_now() << "\n";
}

}  // namespace

void write_records_csv(const std::filesystem::path& path,
                       const std::vector<TrialRecord>& records,
                       std::uint64_t seed, const std::string& config_hash) {
  std::ofstream out = open_output(path);
  write_provenance(out, seed, config_hash);
  out << "trial_id,loss,dim,error_trans,error_rot,iterations,time_us,"
         "termination,nees\n";
  for (const auto& r : records) {
    out << r.trial_id << ',' << r.loss << ',' << r.dimension << ','
        << format_double(r.error_trans) << ','
        << format_double(r.error_rot_deg) << ',' << r.iterations << ','
        << format_double(r.time_us) << ',' << r.termination << ','
        << format_double(r.nees) << "\n";
  }
}

nlohmann::json aggregate_to_json(const LossAggregate& aggregate) {
  nlohmann::json j;
  j["trials"] = aggregate.trials;
  j["rmse_trans_m"] = aggregate.rmse_trans;
  j["rmse_rot_deg"] = aggregate.rmse_rot_deg;
  if (aggregate.success_rate > 0.0 || aggregate.rmse_successful > 0.0) {
    j["success_rate_percent"] = 100.0 * aggregate.success_rate;
    j["rmse_successful_m"] = aggregate.rmse_successful;
  }
  j["mean_iterations"] = aggregate.mean_iterations;
  j["mean_runtime_us"] = aggregate.mean_time_us;
  if (std::isfinite(aggregate.anees)) {
    j["anees"] = aggregate.anees;
  }
  j["anees_excluded"] = aggregate.anees_excluded;
  j["max_iteration_hits"] = aggregate.max_iteration_hits;
  return j;
}

void write_aggregate_json(const std::filesystem::path& path,
                          const std::string& experiment,
                          const nlohmann::json& cells, std::uint64_t seed,
                          const std::string& config_hash) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["version"] = kVersion;
  j["config_hash"] = config_hash;
  j["timestamp"] = timestamp_now();
  j["results"] = cells;
  std::ofstream out = open_output(path);
  out << j.dump(2) << "\n";
}

void write_corpus_json(const std::filesystem::path& path,
                       const std::vector<GaussianMixture>& mixtures,
                       std::uint64_t seed, const std::string& config_hash) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& m : mixtures) {
    list.push_back(m.to_json());
  }
  nlohmann::json j;
  j["schema_version"] = 1;
  j["seed"] = seed;
  j["version"] = kVersion;
  j["config_hash"] = config_hash;
  j["timestamp"] = timestamp_now();
  j["mixtures"] = std::move(list);
  std::ofstream out = open_output(path);
  out << j.dump(2) << "\n";
}

void write_scan_csv(const std::filesystem::path& path,
                    const std::vector<ScanRow>& rows, std::uint64_t seed,
                    const std::string& config_hash) {
  std::ofstream out = open_output(path);
  write_provenance(out, seed, config_hash);
  out << "x,half_cost,pseudo_hessian\n";
  for (const auto& row : rows) {
    out << format_double(row.x) << ',' << format_double(row.half_cost) << ','
        << format_double(row.pseudo_hessian) << "\n";
  }
}

}  // namespace mixls
