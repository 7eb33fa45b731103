#include "support.hpp"

#include "tmevo/evolution.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace tmevo;

namespace {

std::vector<Individual> scored(std::vector<double> scores) {
  std::vector<Individual> pop;
  for (double s : scores) {
    Individual ind{Image(2, 2, 1), PixelMask(2, 2), {}, {}, s, true};
    pop.push_back(ind);
  }
  return pop;
}

// Exact probability that index `target` is one of the two parents, enumerating
// every ordered contestant pair and tie coin of both tournaments.
double tournament_oracle(const std::vector<double>& scores, std::size_t target) {
  const std::size_t n = scores.size();
  auto winners = [&](const std::vector<std::size_t>& pool) {
    std::map<std::size_t, double> p;
    const double pair_p = 1.0 / (pool.size() * (pool.size() - 1));
    for (auto a : pool)
      for (auto b : pool) {
        if (a == b) continue;
        if (scores[a] < scores[b]) p[a] += pair_p;
        else if (scores[b] < scores[a]) p[b] += pair_p;
        else p[a] += pair_p / 2, p[b] += pair_p / 2;
      }
    return p;
  };
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  double prob = 0;
  for (const auto& [first, p1] : winners(all)) {
    if (first == target) {
      prob += p1;
      continue;
    }
    std::vector<std::size_t> rest;
    for (auto i : all)
      if (i != first) rest.push_back(i);
    const auto second = winners(rest);
    if (auto it = second.find(target); it != second.end()) prob += p1 * it->second;
  }
  return prob;
}

struct Scenario {
  SyntheticSpec spec;
  std::shared_ptr<SyntheticDetector> detector;
  GroundTruth gt;
};

Scenario scenario(double k = 4.0, std::uint64_t seed = 1) {
  Scenario s;
  s.spec = test::saturated_spec(32, 32, {{2, 2, 12, 12}, {18, 16, 28, 26}}, k, seed);
  s.detector = std::make_shared<SyntheticDetector>(s.spec);
  s.gt = make_ground_truth(s.spec.templ, *s.detector);
  return s;
}

}  // namespace

TEST_CASE("mode names") {
  CHECK(mode_from_string("tm-evo") == Mode::tm_evo);
  CHECK(mode_from_string("evo_baseline") == Mode::evo_baseline);
  CHECK(to_string(Mode::tm_evo) == "tm_evo");
  CHECK_THROWS_AS(mode_from_string("evo"), std::invalid_argument);
}

TEST_CASE("config validation") {
  SearchConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.population_size = 1;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = {};
  cfg.mutation_rate = 0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = {};
  cfg.noise_reduction_prob = 1.01;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = {};
  cfg.perturbation_degree = 0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = {};
  cfg.plateau_window = 0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}

TEST_CASE("init population") {
  const auto s = scenario();
  SearchConfig cfg;
  Rng rng(5);
  const auto pop = init_population(s.spec.templ, s.gt, cfg, rng);
  REQUIRE(pop.size() == 32);
  std::set<std::vector<std::uint8_t>> distinct;
  for (const auto& ind : pop) {
    CHECK(diff_mask(s.spec.templ, ind.image).subset_of(s.gt.box_union));
    CHECK(diff_mask(s.spec.templ, ind.image).subset_of(ind.mutated_mask));
    distinct.insert(to_bytes(ind.image));
    CHECK(ind.image.pixels().minCoeff() >= 0.0);
    CHECK(ind.image.pixels().maxCoeff() <= 1.0);
  }
  CHECK(distinct.size() == 32);

  Rng again(5);
  const auto pop2 = init_population(s.spec.templ, s.gt, cfg, again);
  for (std::size_t i = 0; i < pop.size(); ++i) CHECK(pop[i].image == pop2[i].image);

  cfg.perturbation_degree = 0;
  for (const auto& ind : init_population(s.spec.templ, s.gt, cfg, rng)) CHECK(ind.image == s.spec.templ);
}

TEST_CASE("tournament selection") {
  Rng rng(17);
  SUBCASE("two members are both returned") {
    const auto pop = scored({0.3, 0.3});
    for (int i = 0; i < 20; ++i) {
      const auto [a, b] = sample_parents(pop, rng);
      CHECK(a != b);
    }
  }
  SUBCASE("fittest member frequency matches exact enumeration") {
    const std::vector<double> scores{1, 0, 1, 1};
    const double exact = tournament_oracle(scores, 1);
    CHECK(exact == doctest::Approx(5.0 / 6.0));
    CHECK(exact >= 1.0 - (2.0 / 4.0) * (1.0 / 3.0) - 1e-12);
    const auto pop = scored(scores);
    const int draws = 10000;
    int hits = 0;
    for (int i = 0; i < draws; ++i) {
      const auto [a, b] = sample_parents(pop, rng);
      REQUIRE(a != b);
      hits += (a == 1 || b == 1);
    }
    const double sd = std::sqrt(exact * (1 - exact) / draws);
    CHECK(std::abs(hits / double(draws) - exact) < 4 * sd);
  }
  SUBCASE("equal fitness gives uniform pairs") {
    const auto pop = scored({0.5, 0.5, 0.5, 0.5});
    std::map<std::pair<std::size_t, std::size_t>, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) ++counts[sample_parents(pop, rng)];
    CHECK(counts.size() == 12);
    const double expected = draws / 12.0;
    double chi2 = 0;
    for (const auto& [pair, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 31.26);  // df 11, p = 0.001
  }
}

TEST_CASE("crossover") {
  std::mt19937_64 gen(3);
  Individual p1{test::random_image(64, 64, 3, gen), PixelMask(64, 64), {}, {}, 0.4, true};
  Individual p2{test::random_image(64, 64, 3, gen), ~PixelMask(64, 64), {}, {}, 0.4, true};
  Rng rng(8);

  const Individual same = crossover(p1, p1, rng);
  CHECK(same.image == p1.image);

  const Individual child = crossover(p1, p2, rng);
  long from_p1 = 0;
  for (Eigen::Index i = 0; i < child.image.pixel_count(); ++i) {
    const bool a = (child.image.pixels().row(i) == p1.image.pixels().row(i)).all();
    const bool b = (child.image.pixels().row(i) == p2.image.pixels().row(i)).all();
    REQUIRE(a != b);
    from_p1 += a;
    CHECK(child.mutated_mask[i] == !a);  // mask follows the source parent
  }
  const double fraction = from_p1 / double(64 * 64);
  CHECK(fraction >= 0.47);
  CHECK(fraction <= 0.53);

  p1.score = 0;
  p2.score = 1;
  CHECK(crossover(p1, p2, rng).image == p1.image);
  p1.score = p2.score = 0;
  const Individual even = crossover(p1, p2, rng);
  CHECK(even.image != p1.image);
  CHECK(even.image != p2.image);
}

TEST_CASE("adaptive mutation stays inside boxes") {
  SyntheticSpec spec = test::saturated_spec(50, 50, {{5, 5, 45, 30}}, 4.0, 2);  // 40 x 25 = 1000 pixels
  const auto gt = make_ground_truth(spec.templ, SyntheticDetector(spec));
  REQUIRE(gt.pixel_total == 1000);
  const Individual base{spec.templ, PixelMask(50, 50), {}, {}, 0, false};
  SearchConfig cfg;
  Rng rng(21);
  const Individual m = adaptive_mutation(base, gt, cfg, rng);
  CHECK(m.mutated_mask.count() >= 5);
  CHECK(m.mutated_mask.count() <= 40);
  CHECK(m.mutated_mask.subset_of(gt.box_union));
  CHECK(diff_mask(spec.templ, m.image).subset_of(m.mutated_mask));

  cfg.mutation_rate = 1e-300;
  CHECK(adaptive_mutation(base, gt, cfg, rng).image == spec.templ);
  cfg.mutation_rate = 1.0;
  cfg.perturbation_degree = 1e-9;
  const Individual all = adaptive_mutation(base, gt, cfg, rng);
  CHECK(all.mutated_mask == gt.box_union);
  CHECK(l2_norm(spec.templ, all.image) < 1e-6);
}

TEST_CASE("mutation reduction") {
  // One 4x4 box with k = 100: a single fully inverted pixel already gives
  // meanAbsDiff 3/48 and clamps the confidence to 0.
  SyntheticSpec spec = test::saturated_spec(8, 8, {{0, 0, 4, 4}}, 100.0, 6);
  CountingDetector det(std::make_shared<SyntheticDetector>(spec));
  const Image& orig = spec.templ;
  const auto gt = make_ground_truth(orig, det);
  const Weights w;

  Individual child{orig, PixelMask(8, 8), {}, {}, 0, false};
  PixelArray<double> raw = orig.pixels();
  for (Eigen::Index i : {0, 1, 2, 3}) {
    raw.row(i) = 1.0 - raw.row(i);
    child.mutated_mask.set(i);
  }
  child.image = Image(8, 8, raw);
  child = evaluate(child, orig, det, gt, w, Mode::tm_evo);
  REQUIRE(child.fitness.m1 == 0.0);

  SUBCASE("three redundant pixels are reverted") {
    bool seen = false;
    for (std::uint64_t seed = 0; seed < 200 && !seen; ++seed) {
      Rng rng(seed);
      det.reset();
      const Individual out = mutation_reduction(child, orig, 0.5, rng, det, gt, w);
      CHECK(det.calls() == 1);
      if (l0_norm(orig, out.image) != 1) continue;
      seen = true;
      // recompute everything directly
      CHECK(m1(synthetic_detect(out.image, spec), gt) == 0.0);
      CHECK(m2(diff_mask(orig, out.image), gt) < child.fitness.m2);
      CHECK(l2_norm(orig, out.image) < l2_norm(orig, child.image));
      CHECK(l0_norm(orig, child.image) - l0_norm(orig, out.image) == 3);
      CHECK(out.mutated_mask == diff_mask(orig, out.image));
    }
    CHECK(seen);
  }
  SUBCASE("empty subset keeps the child") {
    Rng rng(1);
    det.reset();
    const Individual out = mutation_reduction(child, orig, 0.0, rng, det, gt, w);
    CHECK(out.image == child.image);
    CHECK(det.calls() == 1);
  }
  SUBCASE("full revert restores confidence and is rejected") {
    Rng rng(1);
    const Individual out = mutation_reduction(child, orig, 1.0, rng, det, gt, w);
    CHECK(out.image == child.image);
    CHECK(out.mutated_mask == child.mutated_mask);
  }
  SUBCASE("unevaluated input is a logic error") {
    Rng rng(1);
    Individual raw_child = child;
    raw_child.evaluated = false;
    CHECK_THROWS_AS(mutation_reduction(raw_child, orig, 0.3, rng, det, gt, w), std::logic_error);
  }
}

TEST_CASE("plateau detection") {
  const std::vector<double> falling{5, 4, 3, 2, 1};
  CHECK_FALSE(is_plateau(falling, 10));

  std::vector<double> flat(11, 2.0);
  CHECK(is_plateau(flat, 10));
  flat.front() = 1.5;  // earlier value lower than the window
  CHECK(is_plateau(flat, 10));
  CHECK_FALSE(is_plateau(std::span<const double>(flat).last(10), 10));  // needs G_p + 1 entries

  std::vector<double> creeping;
  for (int i = 0; i < 30; ++i) creeping.push_back(1.0 - i * 1e-12);
  CHECK_FALSE(is_plateau(creeping, 10));

  std::vector<double> late(11, 2.0);
  late.back() = 1.999;
  CHECK_FALSE(is_plateau(late, 10));
}

TEST_CASE("adaptation step") {
  const AdaptiveParams start{{0.1, 0.9, 0.9}, 0.3};
  const auto one = adapt_on_plateau(start);
  CHECK(std::abs(one.weights.w1 - 0.105) <= 1e-12);
  CHECK(std::abs(one.weights.w2 - 0.855) <= 1e-12);
  CHECK(std::abs(one.weights.w3 - 0.855) <= 1e-12);
  CHECK(std::abs(one.noise_reduction_prob - 0.294) <= 1e-12);
  const auto two = adapt_on_plateau(one);
  CHECK(std::abs(two.weights.w1 - 0.11025) <= 1e-12);
  CHECK(std::abs(two.weights.w2 - 0.81225) <= 1e-12);
  CHECK(std::abs(two.weights.w3 - 0.81225) <= 1e-12);

  CHECK(adapt_on_plateau({{1.0, 0.5, 0.5}, 0.3}).weights.w1 == 1.0);
  CHECK(adapt_on_plateau({{0.99, 0.5, 0.5}, 0.3}).weights.w1 == 1.0);
}

TEST_CASE("attack predicate and baseline fitness") {
  CHECK(is_attack(DetectionSet{}));
  CHECK_FALSE(is_attack(DetectionSet{{{"a", 0.91, {0, 0, 1, 1}}}, 2, 2}));
  CHECK(is_attack(DetectionSet{{{"a", 0.9, {0, 0, 1, 1}}}, 2, 2}));

  CHECK(baseline_fitness(DetectionSet{}) == 0.0);
  CHECK(baseline_fitness(DetectionSet{{{"a", 0.9, {0, 0, 1, 1}}, {"b", 0.7, {0, 0, 1, 1}}}, 2, 2}) ==
        doctest::Approx(0.8).epsilon(1e-15));
  CHECK(baseline_fitness(DetectionSet{{{"a", 1.0, {0, 0, 1, 1}}}, 2, 2}) == 1.0);
}

TEST_CASE("run_attack succeeds at once when initial noise suffices") {
  const auto s = scenario(400.0);
  SearchConfig cfg;
  cfg.init_rate = 1.0;
  const auto r = run_attack(s.spec.templ, *s.detector, cfg);
  CHECK(r.success);
  CHECK(r.generations == 1);
  CHECK(r.detector_calls == 1 + cfg.population_size);
}

TEST_CASE("run_attack detector budget per generation") {
  const auto s = scenario();
  for (Mode mode : {Mode::tm_evo, Mode::evo_baseline}) {
    SearchConfig cfg;
    cfg.mode = mode;
    cfg.max_generations = 25;
    cfg.population_size = 8;
    cfg.rng_seed = 3;
    CountingDetector det(s.detector);
    const auto r = run_attack(s.spec.templ, det, cfg);
    REQUIRE(r.trace.size() == static_cast<std::size_t>(r.generations));
    CHECK(r.trace[0].detector_calls == 8);
    long total = 1;
    for (std::size_t g = 0; g < r.trace.size(); ++g) {
      total += r.trace[g].detector_calls;
      if (g > 0) CHECK(r.trace[g].detector_calls == (mode == Mode::tm_evo ? 15 : 8));
    }
    CHECK(total == det.calls());
    CHECK(total == r.detector_calls);
  }
}

TEST_CASE("baseline mode never adapts") {
  const auto s = scenario();
  SearchConfig cfg;
  cfg.mode = Mode::evo_baseline;
  cfg.max_generations = 40;
  cfg.mutation_rate = 0.001;
  cfg.init_rate = 0.001;
  const auto r = run_attack(s.spec.templ, *s.detector, cfg);
  for (const auto& t : r.trace) {
    CHECK_FALSE(t.adapted);
    CHECK(t.params.weights == cfg.initial_weights);
    CHECK(t.params.noise_reduction_prob == cfg.noise_reduction_prob);
  }
}

TEST_CASE("run_attack is deterministic") {
  const auto s = scenario();
  SearchConfig cfg;
  cfg.max_generations = 30;
  cfg.rng_seed = 77;
  const auto a = run_attack(s.spec.templ, *s.detector, cfg);
  const auto b = run_attack(s.spec.templ, *s.detector, cfg);
  CHECK(a.image == b.image);
  CHECK(a.generations == b.generations);
  CHECK(a.l0 == b.l0);
}

TEST_CASE("run_attack rejects images without confident objects") {
  const auto s = scenario();
  const Image blank(32, 32, 3, 0.5);
  CHECK_THROWS_AS(run_attack(blank, *s.detector, SearchConfig{}), InvalidSubject);
}

TEST_CASE("detector failures end the run with a partial result") {
  struct Flaky final : Detector {
    std::shared_ptr<const Detector> inner;
    mutable int calls = 0;
    DetectionSet detect(const Image& img) const override {
      if (++calls > 50) throw DetectorError("down");
      return inner->detect(img);
    }
    std::string name() const override { return "flaky"; }
  };
  const auto s = scenario();
  Flaky flaky;
  flaky.inner = s.detector;
  SearchConfig cfg;
  cfg.population_size = 8;
  const auto r = run_attack(s.spec.templ, flaky, cfg);
  CHECK_FALSE(r.success);
  CHECK(r.error == "down");
  CHECK(r.generations >= 1);
}
