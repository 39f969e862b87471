#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixls/metrics.hpp"
#include "mixls/plain_experiment.hpp"
#include "mixls/psr_experiment.hpp"
#include "mixls/scan.hpp"

namespace mixls {

inline constexpr char kVersion[] = "v0.1.0";

/// FNV-1a 64-bit, used to stamp a config fingerprint into outputs.
std::uint64_t fnv1a_hash(const std::string& text);

enum class ScalePreset { kDesk, kPaper };
ScalePreset parse_scale(const std::string& name);

/// Resolved run description: where to read the config, where to write,
/// which losses to run and at which scale.
struct RunManifest {
  std::string config_path;  // empty = defaults
  std::uint64_t master_seed = 42;
  std::filesystem::path out_dir = "out";
  std::vector<LossKind> losses = {LossKind::kMaxMixture, LossKind::kSumMixture,
                                  LossKind::kMaxSumMixture, LossKind::kDcs};
  ScalePreset scale = ScalePreset::kDesk;
  int threads = 1;
};

/// Versioned run configuration file. Anything absent falls back to the
/// manifest's scale preset.
struct RunConfigFile {
  nlohmann::json plain = nlohmann::json::object();
  nlohmann::json psr = nlohmann::json::object();

  static RunConfigFile load(const std::string& path);  // throws on parse error
};

/// A ready-to-run plain config per experiment cell, after applying the
/// scale preset, the config file and the manifest seed.
PlainExperimentConfig make_plain_config(const RunManifest& manifest,
                                        const RunConfigFile& file,
                                        int dimension, bool symmetric);

PsrExperimentConfig make_psr_config(const RunManifest& manifest,
                                    const RunConfigFile& file);

std::string config_fingerprint(const nlohmann::json& canonical_config);

/// CSV with the fixed header
/// trial_id,loss,dim,error_trans,error_rot,iterations,time_us,termination,nees
/// preceded by provenance comment lines (seed, version, config hash and the
/// one mutable timestamp line).
void write_records_csv(const std::filesystem::path& path,
                       const std::vector<TrialRecord>& records,
                       std::uint64_t seed, const std::string& config_hash);

nlohmann::json aggregate_to_json(const LossAggregate& aggregate);

/// Aggregate table keyed by (experiment cell, loss).
void write_aggregate_json(const std::filesystem::path& path,
                          const std::string& experiment,
                          const nlohmann::json& cells, std::uint64_t seed,
                          const std::string& config_hash);

void write_corpus_json(const std::filesystem::path& path,
                       const std::vector<GaussianMixture>& mixtures,
                       std::uint64_t seed, const std::string& config_hash);

void write_scan_csv(const std::filesystem::path& path,
                    const std::vector<ScanRow>& rows, std::uint64_t seed,
                    const std::string& config_hash);

}  // namespace mixls
