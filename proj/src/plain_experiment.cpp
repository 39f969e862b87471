#include "mixls/plain_experiment.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "mixls/detail/parallel.hpp"

namespace mixls {

GaussianMixture sample_plain_mixture(const PlainExperimentConfig& config,
                                     std::mt19937_64& rng) {
  const auto& spec = config.sampling;
  const int d = config.dimension;
  std::uniform_real_distribution<double> sigma_draw(spec.sigma_min,
                                                    spec.sigma_max);
  std::uniform_real_distribution<double> mean_draw(-spec.second_mean_range,
                                                   spec.second_mean_range);
  std::uniform_real_distribution<double> factor_draw(spec.factor_min,
                                                     spec.factor_max);
  std::uniform_real_distribution<double> weight_draw(spec.first_weight_min,
                                                     spec.first_weight_max);

  const double w1 = weight_draw(rng);
  Vector sigma1(d), mean2(d), sigma2(d);
  for (int a = 0; a < d; ++a) {
    sigma1[a] = sigma_draw(rng);
    mean2[a] = config.symmetric ? 0.0 : mean_draw(rng);
    sigma2[a] = sigma1[a] * factor_draw(rng);
  }
  std::vector<GaussianComponent> comps;
  comps.push_back(
      GaussianComponent::from_stddev(w1, Vector::Zero(d), sigma1));
  comps.push_back(GaussianComponent::from_stddev(1.0 - w1, mean2, sigma2));
  return GaussianMixture(std::move(comps));
}

PlainCorpus generate_plain_corpus(const PlainExperimentConfig& config,
                                  int threads) {
  PlainCorpus corpus;
  std::mt19937_64 rng(config.master_seed);
  const SearchRegion region =
      SearchRegion::cube(config.dimension, config.start_half_range);

  int draws = 0;
  while (static_cast<int>(corpus.mixtures.size()) < config.mixture_count) {
    GaussianMixture candidate = sample_plain_mixture(config, rng);
    ++draws;
    if (count_local_minima(candidate, region, config.grid_resolution) == 1) {
      corpus.mixtures.push_back(std::move(candidate));
    }
    // Misconfiguration guard: a sane spec accepts far more than 1%.
    if (draws >= 100 * config.mixture_count &&
        corpus.mixtures.size() <
            static_cast<std::size_t>(draws) / 100) {
      throw std::runtime_error(
          "mixture rejection rate above 99%, sampling spec looks wrong");
    }
  }
  corpus.draws = draws;
  corpus.acceptance_rate =
      static_cast<double>(corpus.mixtures.size()) / draws;

  corpus.modes.resize(corpus.mixtures.size());
  detail::parallel_for(
      static_cast<int>(corpus.mixtures.size()), threads, [&](int i) {
        corpus.modes[i] = find_global_mode(corpus.mixtures[i], region,
                                           config.grid_resolution);
      });
  return corpus;
}

std::vector<Vector> plain_start_points(const PlainExperimentConfig& config) {
  const int d = config.dimension;
  const int per_axis = static_cast<int>(
      std::llround(std::pow(config.starts_per_mixture, 1.0 / d)));
  if (per_axis < 2) {
    throw std::invalid_argument("too few starts per mixture");
  }
  const double lo = -config.start_half_range;
  const double step = 2.0 * config.start_half_range / (per_axis - 1);

  std::vector<Vector> starts;
  std::vector<int> idx(d, 0);
  while (true) {
    Vector x(d);
    for (int a = 0; a < d; ++a) x[a] = lo + idx[a] * step;
    starts.push_back(std::move(x));
    int axis = 0;
    while (axis < d) {
      if (++idx[axis] < per_axis) break;
      idx[axis] = 0;
      ++axis;
    }
    if (axis == d) break;
  }
  return starts;
}

namespace {

std::shared_ptr<const ResidualBlock> make_plain_block(
    const PlainExperimentConfig& config, const GaussianMixture& mixture,
    LossKind kind) {
  if (kind == LossKind::kDcs) {
    // DCS sees the residual whitened by the first (narrow) component; the
    // broad zero-mean component plays the role of the outliers.
    const auto& inlier = mixture.component(0);
    return std::make_shared<AffineBlock>(
        inlier.sqrt_info(), Vector(inlier.sqrt_info() * inlier.mean()),
        std::make_shared<DcsLoss>(config.dcs_phi));
  }
  return std::make_shared<StateLossBlock>(
      make_mixture_loss(kind, mixture, config.loss_config), config.dimension);
}

}  // namespace

PlainResult run_plain_experiment(const PlainExperimentConfig& config,
                                 const std::vector<LossKind>& losses,
                                 int threads) {
  PlainResult result;
  result.corpus = generate_plain_corpus(config, threads);
  const std::vector<Vector> starts = plain_start_points(config);

  std::vector<LossKind> active;
  for (LossKind kind : losses) {
    if (kind == LossKind::kDcs && !config.symmetric) continue;
    active.push_back(kind);
  }

  const int mixtures = static_cast<int>(result.corpus.mixtures.size());
  const int n_starts = static_cast<int>(starts.size());
  const int per_mixture = n_starts * static_cast<int>(active.size());
  result.records.resize(static_cast<std::size_t>(mixtures) * per_mixture);

  detail::parallel_for(mixtures, threads, [&](int mi) {
    const GaussianMixture& mixture = result.corpus.mixtures[mi];
    const Vector& mode = result.corpus.modes[mi];
    std::size_t out = static_cast<std::size_t>(mi) * per_mixture;
    for (std::size_t li = 0; li < active.size(); ++li) {
      const LossKind kind = active[li];
      auto space = std::make_shared<EuclideanSpace>(config.dimension);
      LeastSquaresProblem problem(space);
      problem.add_block(make_plain_block(config, mixture, kind));
      for (int si = 0; si < n_starts; ++si) {
        const SolverReport report = solve(problem, starts[si], config.solver);

        TrialRecord rec;
        rec.trial_id = static_cast<std::int64_t>(mi) * n_starts + si;
        rec.loss = loss_name(kind);
        rec.dimension = config.dimension;
        rec.initial_state = starts[si];
        rec.final_state = report.final_state;
        rec.truth = mode;
        rec.error_vector = mode - report.final_state;
        rec.error_trans = rec.error_vector.norm();
        rec.error_rot_deg = 0.0;
        rec.iterations = report.iterations;
        rec.time_us = report.wall_time_us;
        rec.termination = termination_name(report.termination);
        const CovarianceResult cov =
            recover_covariance(problem, report.final_state);
        if (cov.covariance) {
          rec.covariance = cov.covariance;
          rec.nees = trial_nees(rec);
        }
        result.records[out++] = std::move(rec);
      }
    }
  });

  for (LossKind kind : active) {
    result.aggregates.push_back(aggregate_records(
        result.records, loss_name(kind), config.success_threshold));
  }
  return result;
}

}  // namespace mixls
