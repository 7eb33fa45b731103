#include "tmevo/evolution.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <stdexcept>

namespace tmevo {

namespace {

class CallCounter final : public Detector {
 public:
  explicit CallCounter(const Detector& inner) : inner_(inner) {}
  DetectionSet detect(const Image& image) const override {
    ++calls_;
    return inner_.detect(image);
  }
  std::string name() const override { return inner_.name(); }
  long calls() const { return calls_; }

 private:
  const Detector& inner_;
  mutable long calls_ = 0;
};

double unit(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double noise(Rng& rng, double delta) {
  return delta > 0 ? std::uniform_real_distribution<double>(-delta, delta)(rng) : 0.0;
}

std::vector<Eigen::Index> covered_pixels(const PixelMask& mask) {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(mask.count()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

// Adds per-channel noise to each listed pixel with probability `rate`.
Individual perturb(const Individual& base, std::span<const Eigen::Index> pixels, double rate, double delta, Rng& rng) {
  PixelArray<double> raw = base.image.pixels();
  PixelMask mask = base.mutated_mask;
  for (const auto i : pixels) {
    if (unit(rng) >= rate) continue;
    for (Eigen::Index c = 0; c < raw.cols(); ++c) raw(i, c) += noise(rng, delta);
    mask.set(i);
  }
  return {clamp_image(base.image.height(), base.image.width(), raw), std::move(mask), {}, {}, 0, false};
}

std::size_t argmin_score(std::span<const Individual> population) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < population.size(); ++i) {
    if (population[i].score < population[best].score) best = i;
  }
  return best;
}

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::tm_evo ? "tm_evo" : "evo_baseline"; }

Mode mode_from_string(const std::string& text) {
  if (text == "tm_evo" || text == "tm-evo") return Mode::tm_evo;
  if (text == "evo_baseline" || text == "evo-baseline") return Mode::evo_baseline;
  throw std::invalid_argument("unknown mode '" + text + "'");
}

void validate(const SearchConfig& cfg) {
  auto unit_range = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (cfg.population_size < 2) throw std::invalid_argument("population_size must be at least 2");
  if (cfg.max_generations < 1) throw std::invalid_argument("max_generations must be at least 1");
  if (!(cfg.mutation_rate > 0.0 && cfg.mutation_rate < 1.0)) throw std::invalid_argument("mutation_rate must lie in (0, 1)");
  if (!unit_range(cfg.noise_reduction_prob)) throw std::invalid_argument("noise_reduction_prob must lie in [0, 1]");
  if (!(cfg.perturbation_degree > 0.0 && cfg.perturbation_degree <= 1.0)) {
    throw std::invalid_argument("perturbation_degree must lie in (0, 1]");
  }
  if (cfg.plateau_window < 1) throw std::invalid_argument("plateau_window must be at least 1");
  if (!unit_range(cfg.initial_weights.w1) || !unit_range(cfg.initial_weights.w2) || !unit_range(cfg.initial_weights.w3)) {
    throw std::invalid_argument("initial weights must lie in [0, 1]");
  }
  if (!unit_range(cfg.attack_threshold)) throw std::invalid_argument("attack_threshold must lie in [0, 1]");
  if (!unit_range(cfg.init_rate)) throw std::invalid_argument("init_rate must lie in [0, 1]");
}

std::vector<Individual> init_population(const Image& original, const GroundTruth& gt, const SearchConfig& cfg, Rng& rng) {
  const auto pixels = covered_pixels(gt.box_union);
  const Individual seed{original, PixelMask(original.height(), original.width()), {}, {}, 0, false};
  std::vector<Individual> population;
  population.reserve(static_cast<std::size_t>(cfg.population_size));
  for (int i = 0; i < cfg.population_size; ++i) {
    population.push_back(perturb(seed, pixels, cfg.init_rate, cfg.perturbation_degree, rng));
  }
  return population;
}

std::pair<std::size_t, std::size_t> sample_parents(std::span<const Individual> population, Rng& rng) {
  if (population.size() < 2) throw std::invalid_argument("parent sampling needs at least two individuals");
  auto tournament = [&](std::span<const std::size_t> pool) {
    if (pool.size() == 1) return pool[0];
    const auto i = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    auto j = std::uniform_int_distribution<std::size_t>(0, pool.size() - 2)(rng);
    if (j >= i) ++j;
    const std::size_t a = pool[i];
    const std::size_t b = pool[j];
    if (population[a].score < population[b].score) return a;
    if (population[b].score < population[a].score) return b;
    return unit(rng) < 0.5 ? a : b;
  };
  std::vector<std::size_t> pool(population.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  const std::size_t first = tournament(pool);
  pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(first));
  const std::size_t second = tournament(pool);
  return {first, second};
}

Individual crossover(const Individual& p1, const Individual& p2, Rng& rng) {
  require_same_shape(p1.image, p2.image);
  const double total = p1.score + p2.score;
  const double from_first = total > 0 ? p2.score / total : 0.5;
  PixelArray<double> raw = p1.image.pixels();
  PixelMask mask = p1.mutated_mask;
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    if (unit(rng) < from_first) continue;
    raw.row(i) = p2.image.pixels().row(i);
    mask.set(i, p2.mutated_mask[i]);
  }
  return {Image(p1.image.height(), p1.image.width(), std::move(raw)), std::move(mask), {}, {}, 0, false};
}

Individual adaptive_mutation(const Individual& child, const GroundTruth& gt, const SearchConfig& cfg, Rng& rng) {
  const auto pixels = covered_pixels(gt.box_union);
  return perturb(child, pixels, cfg.mutation_rate, cfg.perturbation_degree, rng);
}

Individual evaluate(Individual ind, const Image& original, const Detector& detector, const GroundTruth& gt, const Weights& w,
                    Mode mode) {
  ind.detections = detector.detect(ind.image);
  ind.fitness = evaluate_fitness(original, ind.image, ind.detections, gt, w);
  ind.score = mode == Mode::tm_evo ? ind.fitness.weighted : baseline_fitness(ind.detections);
  ind.evaluated = true;
  return ind;
}

Individual mutation_reduction(const Individual& child, const Image& original, double noise_reduction_prob, Rng& rng,
                              const Detector& detector, const GroundTruth& gt, const Weights& w) {
  if (!child.evaluated) throw std::logic_error("mutation_reduction needs an evaluated individual");
  const PixelMask modified = diff_mask(original, child.image);
  PixelMask reverted(original.height(), original.width());
  for (Eigen::Index i = 0; i < modified.size(); ++i) {
    if (modified[i] && unit(rng) < noise_reduction_prob) reverted.set(i);
  }
  Individual candidate{revert_pixels(child.image, original, reverted), child.mutated_mask & ~reverted, {}, {}, 0, false};
  candidate = evaluate(std::move(candidate), original, detector, gt, w, Mode::tm_evo);

  const bool accepted = candidate.fitness.m1 <= child.fitness.m1 && candidate.fitness.m2 < child.fitness.m2 &&
                        candidate.fitness.m3 < child.fitness.m3;
  return accepted ? candidate : child;
}

bool is_plateau(std::span<const double> history, int window) {
  if (window < 1) throw std::invalid_argument("plateau window must be at least 1");
  const auto w = static_cast<std::size_t>(window);
  if (history.size() < w + 1) return false;
  const double reference = history[history.size() - 1 - w];
  const auto tail = history.last(w);
  return *std::min_element(tail.begin(), tail.end()) >= reference;
}

AdaptiveParams adapt_on_plateau(const AdaptiveParams& params) {
  AdaptiveParams next;
  next.weights.w1 = std::min(1.0, params.weights.w1 * 1.05);
  next.weights.w2 = std::max(0.0, params.weights.w2 * 0.95);
  next.weights.w3 = std::max(0.0, params.weights.w3 * 0.95);
  next.noise_reduction_prob = std::max(0.0, params.noise_reduction_prob * 0.98);
  return next;
}

bool is_attack(const DetectionSet& detections, double threshold) {
  return std::none_of(detections.detections.begin(), detections.detections.end(),
                      [threshold](const Detection& d) { return d.confidence > threshold; });
}

double baseline_fitness(const DetectionSet& detections) {
  if (detections.empty()) return 0.0;
  double sum = 0;
  for (const auto& d : detections.detections) sum += d.confidence;
  return sum / static_cast<double>(detections.size());
}

AttackResult run_attack(const Image& original, const Detector& detector, const SearchConfig& cfg,
                        const GenerationObserver& observer) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const CallCounter counted(detector);
  const GroundTruth gt = make_ground_truth(original, counted, cfg.attack_threshold);
  const bool tm_evo = cfg.mode == Mode::tm_evo;
  const auto n = static_cast<std::size_t>(cfg.population_size);

  SearchState state;
  state.rng.seed(cfg.rng_seed);
  state.params = {cfg.initial_weights, cfg.noise_reduction_prob};
  state.population = init_population(original, gt, cfg, state.rng);
  std::vector<bool> reducible(n, false);

  AttackResult result;
  result.image = original;
  try {
    for (int g = 1; g <= cfg.max_generations; ++g) {
      state.generation = g;
      const long calls_before = counted.calls();
      const Weights& w = state.params.weights;
      for (auto& member : state.population) member = evaluate(std::move(member), original, counted, gt, w, cfg.mode);
      if (tm_evo) {
        for (std::size_t i = 0; i < n; ++i) {
          if (!reducible[i]) continue;
          state.population[i] =
              mutation_reduction(state.population[i], original, state.params.noise_reduction_prob, state.rng, counted, gt, w);
        }
      }

      state.best_fitness_history.push_back(state.population[argmin_score(state.population)].score);
      const double unadapted_best = state.best_fitness_history.back();
      bool adapted = false;
      if (tm_evo) {
        const auto window = std::span<const double>(state.best_fitness_history).subspan(state.plateau_window_start);
        if (is_plateau(window, cfg.plateau_window)) {
          state.params = adapt_on_plateau(state.params);
          for (auto& member : state.population) {
            member.fitness.weighted = weighted_fitness(member.fitness, state.params.weights);
            member.score = member.fitness.weighted;
          }
          state.best_fitness_history.back() = state.population[argmin_score(state.population)].score;
          state.plateau_window_start = state.best_fitness_history.size() - 1;
          adapted = true;
        }
      }

      const Individual& best = state.population[argmin_score(state.population)];
      GenerationTrace trace{g, best.score, unadapted_best, best.fitness, state.params, adapted, counted.calls() - calls_before};
      result.trace.push_back(trace);
      if (observer) observer(state, trace);

      result.image = best.image;
      result.final_fitness = best.fitness;
      result.generations = g;
      if (is_attack(best.detections, cfg.attack_threshold)) {
        result.success = true;
        break;
      }
      if (g == cfg.max_generations) break;

      std::vector<Individual> next;
      next.reserve(n);
      next.push_back(best);
      for (std::size_t i = 1; i < n; ++i) {
        const auto [a, b] = sample_parents(state.population, state.rng);
        Individual child = crossover(state.population[a], state.population[b], state.rng);
        next.push_back(adaptive_mutation(child, gt, cfg, state.rng));
      }
      state.population = std::move(next);
      std::fill(reducible.begin(), reducible.end(), true);
      reducible[0] = false;
    }
  } catch (const DetectorError& e) {
    result.error = e.what();
  } catch (const ProtocolError& e) {
    result.error = e.what();
  }

  result.l0 = l0_norm(original, result.image);
  result.l2 = l2_norm(original, result.image);
  result.detector_calls = counted.calls();
  result.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace tmevo
