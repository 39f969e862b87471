#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mixls/metrics.hpp"
#include "mixls/solver.hpp"

namespace mixls {

/// Uniform ranges for the random two-component mixtures of the plain
/// optimization study. The first component is zero-mean; the second one
/// reuses the first standard deviation scaled by a random factor.
struct MixtureSamplingSpec {
  double sigma_min = 0.1;
  double sigma_max = 1.0;
  double second_mean_range = 2.0;  // +-2 m; ignored in the symmetric variant
  double factor_min = 2.0;
  double factor_max = 10.0;
  double first_weight_min = 0.2;
  double first_weight_max = 0.8;
};

struct PlainExperimentConfig {
  int dimension = 1;  // 1 or 2
  bool symmetric = true;
  int mixture_count = 100;
  int starts_per_mixture = 100;
  double start_half_range = 4.0;  // initial positions linearly spaced in +-4
  double success_threshold = 0.01;
  double grid_resolution = 0.01;
  std::uint64_t master_seed = 42;
  MixtureSamplingSpec sampling;
  MixtureLossConfig loss_config;
  double dcs_phi = 1.0;
  SolverConfig solver;
};

/// One draw from the sampling spec (no multimodality rejection).
GaussianMixture sample_plain_mixture(const PlainExperimentConfig& config,
                                     std::mt19937_64& rng);

struct PlainCorpus {
  std::vector<GaussianMixture> mixtures;
  std::vector<Vector> modes;  // refined global mode per mixture
  double acceptance_rate = 1.0;
  int draws = 0;
};

/// Rejection-samples mixtures until `mixture_count` unimodal ones are
/// accepted, then finds each accepted mixture's global mode. Deterministic
/// in the master seed. Throws if the rejection rate exceeds 99%.
PlainCorpus generate_plain_corpus(const PlainExperimentConfig& config,
                                  int threads = 1);

/// Initial positions: a linearly spaced axis (1D) or grid (2D) covering
/// +-start_half_range with starts_per_mixture points in total.
std::vector<Vector> plain_start_points(const PlainExperimentConfig& config);

struct PlainResult {
  PlainCorpus corpus;
  std::vector<TrialRecord> records;
  std::vector<LossAggregate> aggregates;
};

/// Runs mixture x start x loss optimizations and aggregates RMSE, success
/// rate, iteration and runtime means per loss. DCS entries are skipped in
/// asymmetric variants (it cannot represent them).
PlainResult run_plain_experiment(const PlainExperimentConfig& config,
                                 const std::vector<LossKind>& losses,
                                 int threads = 1);

}  // namespace mixls
