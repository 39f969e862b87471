#include "mixls/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <thread>

#include "mixls/run_io.hpp"

namespace mixls {

namespace {

std::vector<LossKind> parse_losses(const std::string& csv) {
  std::vector<LossKind> kinds;
  std::size_t begin = 0;
  while (begin <= csv.size()) {
    const std::size_t end = csv.find(',', begin);
    const std::string token =
        csv.substr(begin, end == std::string::npos ? std::string::npos
                                                   : end - begin);
    if (!token.empty()) {
      kinds.push_back(parse_loss_name(token));
    }
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  if (kinds.empty()) {
    throw std::invalid_argument("empty loss selection (valid: mm, sm, msm, dcs)");
  }
  return kinds;
}

nlohmann::json plain_config_to_json(const PlainExperimentConfig& c) {
  nlohmann::json j;
  j["dimension"] = c.dimension;
  j["symmetric"] = c.symmetric;
  j["mixture_count"] = c.mixture_count;
  j["starts_per_mixture"] = c.starts_per_mixture;
  j["start_half_range"] = c.start_half_range;
  j["success_threshold"] = c.success_threshold;
  j["grid_resolution"] = c.grid_resolution;
  j["damping"] = c.loss_config.damping;
  j["dcs_phi"] = c.dcs_phi;
  return j;
}

nlohmann::json psr_config_to_json(const PsrExperimentConfig& c) {
  nlohmann::json j;
  j["dimension"] = c.dimension;
  j["configurations"] = c.configurations;
  j["runs_per_configuration"] = c.runs_per_configuration;
  j["base_landmarks"] = c.base_landmarks;
  j["translation_range"] = c.translation_range;
  j["rotation_range_deg"] = c.rotation_range_deg;
  j["range_sigma"] = c.range_sigma;
  j["angle_sigma_deg"] = c.angle_sigma_deg;
  j["outlier_component"] = c.outlier_component;
  j["damping"] = c.loss_config.damping;
  return j;
}

struct PlainCell {
  std::string name;
  int dimension;
  bool symmetric;
};

constexpr std::int64_t kCellStride = 10'000'000;

int cmd_plain(const RunManifest& manifest) {
  const RunConfigFile file = RunConfigFile::load(manifest.config_path);
  const std::vector<PlainCell> cells = {{"1d_sym", 1, true},
                                        {"1d_asym", 1, false},
                                        {"2d_sym", 2, true},
                                        {"2d_asym", 2, false}};

  nlohmann::json canonical;
  for (const auto& cell : cells) {
    canonical[cell.name] = plain_config_to_json(
        make_plain_config(manifest, file, cell.dimension, cell.symmetric));
  }
  const std::string hash = config_fingerprint(canonical);

  std::vector<TrialRecord> all_records;
  nlohmann::json results;
  std::vector<GaussianMixture> corpus_dump;
  std::int64_t offset = 0;
  for (const auto& cell : cells) {
    PlainExperimentConfig config =
        make_plain_config(manifest, file, cell.dimension, cell.symmetric);
    std::cerr << "[mixls] plain cell " << cell.name << ": "
              << config.mixture_count << " mixtures x "
              << config.starts_per_mixture << " starts\n";
    PlainResult result =
        run_plain_experiment(config, manifest.losses, manifest.threads);
    nlohmann::json per_loss;
    for (const auto& agg : result.aggregates) {
      per_loss[agg.loss] = aggregate_to_json(agg);
    }
    per_loss["corpus_acceptance_rate"] = result.corpus.acceptance_rate;
    results[cell.name] = std::move(per_loss);
    for (auto& rec : result.records) {
      rec.trial_id += offset;
      all_records.push_back(std::move(rec));
    }
    for (auto& m : result.corpus.mixtures) {
      corpus_dump.push_back(std::move(m));
    }
    offset += kCellStride;
  }

  write_records_csv(manifest.out_dir / "plain_records.csv", all_records,
                    manifest.master_seed, hash);
  write_aggregate_json(manifest.out_dir / "plain_aggregate.json", "plain",
                       results, manifest.master_seed, hash);
  write_corpus_json(manifest.out_dir / "plain_corpus.json", corpus_dump,
                    manifest.master_seed, hash);
  return 0;
}

int cmd_psr(const RunManifest& manifest) {
  const RunConfigFile file = RunConfigFile::load(manifest.config_path);
  PsrExperimentConfig config = make_psr_config(manifest, file);

  std::vector<LossKind> losses;
  for (LossKind kind : manifest.losses) {
    if (kind == LossKind::kDcs) {
      std::cerr << "[mixls] dcs is not a mixture model, skipping it for "
                   "registration\n";
      continue;
    }
    losses.push_back(kind);
  }
  if (losses.empty()) {
    throw std::invalid_argument("no applicable losses for registration");
  }

  const std::string hash =
      config_fingerprint(psr_config_to_json(config));
  std::cerr << "[mixls] psr " << config.dimension << "D: "
            << config.configurations << " configurations x "
            << config.runs_per_configuration << " runs\n";
  PsrResult result = run_psr_experiment(config, losses, manifest.threads);

  nlohmann::json per_loss;
  for (const auto& agg : result.aggregates) {
    per_loss[agg.loss] = aggregate_to_json(agg);
  }
  nlohmann::json results;
  results[config.dimension == 2 ? "2d" : "3d"] = std::move(per_loss);

  write_records_csv(manifest.out_dir / "psr_records.csv", result.records,
                    manifest.master_seed, hash);
  write_aggregate_json(manifest.out_dir / "psr_aggregate.json", "psr", results,
                       manifest.master_seed, hash);
  return 0;
}

int cmd_scan(const RunManifest& manifest, const std::string& mixture_path,
             const std::string& loss, const std::string& range,
             double resolution, double damping) {
  std::ifstream in(mixture_path);
  if (!in) {
    throw std::invalid_argument("cannot open mixture file " + mixture_path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("mixture parse failure: " + std::string(e.what()));
  }
  const GaussianMixture mixture = GaussianMixture::from_json(j);

  const std::size_t colon = range.find(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument("range must be lo:hi");
  }
  const double lo = std::stod(range.substr(0, colon));
  const double hi = std::stod(range.substr(colon + 1));

  const LossKind kind = parse_loss_name(loss);
  MixtureLossConfig config;
  config.damping = damping;

  nlohmann::json canonical;
  canonical["mixture"] = mixture.to_json();
  canonical["loss"] = loss;
  canonical["range"] = {lo, hi};
  canonical["resolution"] = resolution;
  canonical["damping"] = damping;

  const auto rows = scan_loss(mixture, kind, config, lo, hi, resolution);
  write_scan_csv(manifest.out_dir / ("scan_" + loss + ".csv"), rows,
                 manifest.master_seed, config_fingerprint(canonical));
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Gaussian-mixture losses for nonlinear least squares"};
  app.require_subcommand(1);

  RunManifest manifest;
  manifest.threads =
      std::max(1u, std::thread::hardware_concurrency());
  std::string losses_csv = "mm,sm,msm,dcs";
  std::string scale = "desk";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", manifest.config_path, "JSON config file");
    cmd->add_option("--seed", manifest.master_seed, "master seed");
    cmd->add_option("--out", manifest.out_dir, "output directory");
    cmd->add_option("--losses", losses_csv, "comma-separated loss selection");
    cmd->add_option("--scale", scale, "desk or paper scale preset");
    cmd->add_option("--threads", manifest.threads, "worker threads");
  };

  CLI::App* plain = app.add_subcommand("plain", "plain optimization study");
  add_common(plain);
  CLI::App* psr = app.add_subcommand("psr", "point set registration study");
  add_common(psr);

  CLI::App* scan = app.add_subcommand("scan", "1D cost-surface scan");
  add_common(scan);
  std::string mixture_path;
  std::string scan_loss_name = "msm";
  std::string range = "-4:4";
  double resolution = 0.01;
  double damping = 10.0;
  scan->add_option("--mixture", mixture_path, "mixture JSON file")->required();
  scan->add_option("--loss", scan_loss_name, "loss to scan");
  scan->add_option("--range", range, "scan range lo:hi");
  scan->add_option("--resolution", resolution, "scan step");
  scan->add_option("--damping", damping, "msm damping delta");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    manifest.losses = parse_losses(losses_csv);
    manifest.scale = parse_scale(scale);
    if (!std::filesystem::exists(manifest.out_dir)) {
      std::cerr << "[mixls] creating output directory " << manifest.out_dir
                << "\n";
      std::filesystem::create_directories(manifest.out_dir);
    }
    if (plain->parsed()) return cmd_plain(manifest);
    if (psr->parsed()) return cmd_psr(manifest);
    return cmd_scan(manifest, mixture_path, scan_loss_name, range, resolution,
                    damping);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace mixls
