#pragma once

#include "tmevo/detector.hpp"
#include "tmevo/fitness.hpp"
#include "tmevo/image.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tmevo {

enum class Mode { tm_evo, evo_baseline };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& text);  // accepts "tm_evo"/"tm-evo", "evo_baseline"/"evo-baseline"

using Rng = std::mt19937_64;

/// Search parameters. Defaults are the published TM-EVO settings.
struct SearchConfig {
  int population_size = 32;
  int max_generations = 400;
  double perturbation_degree = 0.4;   // delta: per-channel noise drawn from U(-delta, delta)
  double mutation_rate = 0.02;        // rho: per-pixel mutation probability
  double noise_reduction_prob = 0.3;  // rho-bar: per-pixel revert probability
  int plateau_window = 10;            // G_p
  Weights initial_weights{0.1, 0.9, 0.9};
  double attack_threshold = kAttackThreshold;
  double init_rate = 0.02;  // per-pixel probability of noise in the initial population
  Mode mode = Mode::tm_evo;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

/// Throws std::invalid_argument when a field is out of range.
void validate(const SearchConfig& cfg);

struct Individual {
  Image image;
  PixelMask mutated_mask;  // pixels ever perturbed since the original
  DetectionSet detections;
  FitnessBreakdown fitness;
  double score = 0;  // selection objective: weighted fitness, or the baseline's mean confidence
  bool evaluated = false;
};

/// Weights and noise-reduction probability that plateau adaptation updates together.
struct AdaptiveParams {
  Weights weights;
  double noise_reduction_prob = 0.3;

  friend bool operator==(const AdaptiveParams&, const AdaptiveParams&) = default;
};

struct SearchState {
  std::vector<Individual> population;
  AdaptiveParams params;
  std::vector<double> best_fitness_history;  // per generation, under the weights in force after adaptation
  std::size_t plateau_window_start = 0;      // index into history where the current plateau window begins
  int generation = 0;
  Rng rng;
};

std::vector<Individual> init_population(const Image& original, const GroundTruth& gt, const SearchConfig& cfg, Rng& rng);

/// Two distinct indices chosen by binary tournament (lower score wins, random tie-break).
std::pair<std::size_t, std::size_t> sample_parents(std::span<const Individual> population, Rng& rng);

/// Per-pixel uniform crossover; p1 contributes a pixel with probability
/// score(p2) / (score(p1) + score(p2)), or 0.5 when both scores are 0.
Individual crossover(const Individual& p1, const Individual& p2, Rng& rng);

/// Each box pixel is perturbed with probability rho by per-channel U(-delta, delta), then clamped.
Individual adaptive_mutation(const Individual& child, const GroundTruth& gt, const SearchConfig& cfg, Rng& rng);

/// Scores `image` with one detector call.
Individual evaluate(Individual ind, const Image& original, const Detector& detector, const GroundTruth& gt, const Weights& w,
                    Mode mode);

/// Reverts a random subset of the modified pixels of an evaluated child and
/// keeps the result only if M1 does not rise while M2 and M3 both fall.
/// Makes exactly one detector call.
Individual mutation_reduction(const Individual& child, const Image& original, double noise_reduction_prob, Rng& rng,
                              const Detector& detector, const GroundTruth& gt, const Weights& w);

/// True when the last `window` entries bring no strict decrease below the
/// entry `window` generations back.
bool is_plateau(std::span<const double> history, int window);

AdaptiveParams adapt_on_plateau(const AdaptiveParams& params);

/// No detection scores strictly above `threshold`.
bool is_attack(const DetectionSet& detections, double threshold = kAttackThreshold);

/// Mean confidence over all returned detections; 0 when there are none.
double baseline_fitness(const DetectionSet& detections);

struct GenerationTrace {
  int generation = 0;
  double best_score = 0;
  double best_score_before_adaptation = 0;  // equals best_score unless adapted
  FitnessBreakdown best_fitness;
  AdaptiveParams params;
  bool adapted = false;
  long detector_calls = 0;  // calls made during this generation
};

struct AttackResult {
  Image image;
  bool success = false;
  int generations = 0;
  Eigen::Index l0 = 0;
  double l2 = 0;
  double runtime_seconds = 0;
  long detector_calls = 0;  // including the ground-truth call on the original
  FitnessBreakdown final_fitness;
  std::vector<GenerationTrace> trace;
  std::string error;  // set when the detector failed and the run stopped early
};

/// Called once per generation after fitness, adaptation and best selection.
using GenerationObserver = std::function<void(const SearchState&, const GenerationTrace&)>;

AttackResult run_attack(const Image& original, const Detector& detector, const SearchConfig& cfg,
                        const GenerationObserver& observer = {});

}  // namespace tmevo
