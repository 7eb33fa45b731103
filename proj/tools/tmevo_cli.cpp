// tmevo: command-line driver for single attacks, benchmark suites and
// synthetic scenario generation.
//
// Exit codes: 0 attack found / command succeeded, 2 generation budget
// exhausted without an attack, 1 runtime error, 64 usage error.

#include "tmevo/config.hpp"
#include "tmevo/detector.hpp"
#include "tmevo/evolution.hpp"
#include "tmevo/harness.hpp"
#include "tmevo/scenario.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <optional>

namespace {

using namespace tmevo;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitBudget = 2;
constexpr int kExitUsage = 64;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Flag values; unset optionals leave the config file / defaults untouched.
struct SearchOverrides {
  std::optional<int> population_size;
  std::optional<int> max_generations;
  std::optional<double> perturbation_degree;
  std::optional<double> mutation_rate;
  std::optional<double> noise_reduction_prob;
  std::optional<int> plateau_window;
  std::optional<std::vector<double>> initial_weights;
  std::optional<double> attack_threshold;
  std::optional<double> init_rate;
};

struct RunManifest {
  std::string config_path;
  std::string detector;
  std::vector<std::string> images;
  std::string suite_dir;
  std::string mode = "tm-evo";
  int repetitions = 5;
  std::optional<std::uint64_t> seed;  // falls back to the config file's rng_seed
  std::string out_dir = "tmevo-out";
  int workers = 1;
  double score_floor = kDefaultScoreFloor;
  SearchOverrides overrides;
};

void add_search_flags(CLI::App& cmd, RunManifest& m) {
  const SearchConfig d;
  auto* g = "Search parameters";
  cmd.add_option("--config", m.config_path, "JSON file with SearchConfig fields; flags override it")->group(g);
  cmd.add_option("--population-size", m.overrides.population_size, "Population size N (default " + std::to_string(d.population_size) + ")")
      ->group(g);
  cmd.add_option("--max-generations", m.overrides.max_generations,
                 "Maximum number of generations G (default " + std::to_string(d.max_generations) + ")")
      ->group(g);
  cmd.add_option("--perturbation-degree", m.overrides.perturbation_degree,
                 "Degree of perturbation delta, noise drawn from U(-delta, delta) (default 0.4)")
      ->group(g);
  cmd.add_option("--mutation-rate", m.overrides.mutation_rate,
                 "Per-pixel mutation rate rho (default 0.02; the same setup is also reported with 0.024)")
      ->group(g);
  cmd.add_option("--noise-reduction-prob", m.overrides.noise_reduction_prob, "Noise reduction rate rho-bar (default 0.3)")->group(g);
  cmd.add_option("--plateau-window", m.overrides.plateau_window,
                 "Generations without improvement before adaptation, G_p (default " + std::to_string(d.plateau_window) + ")")
      ->group(g);
  cmd.add_option("--initial-weights", m.overrides.initial_weights, "Initial weights w1 w2 w3 (default 0.1 0.9 0.9)")
      ->expected(3)
      ->group(g);
  cmd.add_option("--attack-threshold", m.overrides.attack_threshold, "Success when no detection scores above this (default 0.9)")
      ->group(g);
  cmd.add_option("--init-rate", m.overrides.init_rate, "Per-pixel probability of noise in the initial population (default 0.02)")
      ->group(g);
}

void add_run_flags(CLI::App& cmd, RunManifest& m) {
  cmd.add_option("--detector", m.detector,
                 "synthetic[:<spec.json>] or remote:<url>; falls back to remote:$TMEVO_DETECTOR_URL");
  cmd.add_option("--score-floor", m.score_floor, "Reporting floor sent to remote detectors")->capture_default_str();
  cmd.add_option("--seed", m.seed, "RNG seed; bench uses it as the base seed (default: config rng_seed, else 0)");
  cmd.add_option("--out-dir", m.out_dir, "Output directory")->capture_default_str();
  add_search_flags(cmd, m);
}

SearchConfig effective_config(const RunManifest& m) {
  SearchConfig cfg;
  try {
    if (!m.config_path.empty()) cfg = load_config(m.config_path, cfg);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto& o = m.overrides;
  if (o.population_size) cfg.population_size = *o.population_size;
  if (o.max_generations) cfg.max_generations = *o.max_generations;
  if (o.perturbation_degree) cfg.perturbation_degree = *o.perturbation_degree;
  if (o.mutation_rate) cfg.mutation_rate = *o.mutation_rate;
  if (o.noise_reduction_prob) cfg.noise_reduction_prob = *o.noise_reduction_prob;
  if (o.plateau_window) cfg.plateau_window = *o.plateau_window;
  if (o.initial_weights) cfg.initial_weights = {(*o.initial_weights)[0], (*o.initial_weights)[1], (*o.initial_weights)[2]};
  if (o.attack_threshold) cfg.attack_threshold = *o.attack_threshold;
  if (o.init_rate) cfg.init_rate = *o.init_rate;
  try {
    validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid configuration: ") + e.what());
  }
  return cfg;
}

DetectorDescriptor detector_descriptor(const RunManifest& m) {
  std::string text = m.detector;
  if (text.empty()) {
    const char* url = std::getenv("TMEVO_DETECTOR_URL");
    if (url == nullptr || *url == '\0') throw UsageError("no detector given: pass --detector or set TMEVO_DETECTOR_URL");
    text = std::string("remote:") + url;
  }
  try {
    return DetectorDescriptor::parse(text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::shared_ptr<const Detector> remote_detector(const DetectorDescriptor& d, const RunManifest& m) {
  RemoteOptions options;
  options.score_floor = m.score_floor;
  return std::make_shared<RemoteDetector>(d.endpoint, options);
}

std::shared_ptr<const SyntheticDetector> synthetic_detector(const fs::path& spec_path) {
  if (!fs::exists(spec_path)) throw UsageError("synthetic spec not found: " + spec_path.string());
  try {
    return std::make_shared<SyntheticDetector>(load_synthetic_spec(spec_path));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

Image load_input(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("image not found: " + path.string());
  return load_image(path);
}

std::vector<fs::path> list_dir(const fs::path& dir, std::initializer_list<const char*> extensions) {
  if (!fs::is_directory(dir)) throw UsageError("suite directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (std::find_if(extensions.begin(), extensions.end(), [&](const char* e) { return ext == e; }) != extensions.end()) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw UsageError("suite directory has no usable files: " + dir.string());
  return out;
}

nlohmann::ordered_json trace_json(const AttackResult& result) {
  nlohmann::ordered_json w1 = nlohmann::ordered_json::array(), w2 = w1, w3 = w1, rho = w1, best = w1, adapted = w1;
  for (const auto& t : result.trace) {
    w1.push_back(std::stod(format_number(t.params.weights.w1)));
    w2.push_back(std::stod(format_number(t.params.weights.w2)));
    w3.push_back(std::stod(format_number(t.params.weights.w3)));
    rho.push_back(std::stod(format_number(t.params.noise_reduction_prob)));
    best.push_back(std::stod(format_number(t.best_score)));
    if (t.adapted) adapted.push_back(t.generation);
  }
  return {{"best_score", best}, {"w1", w1}, {"w2", w2}, {"w3", w3}, {"noise_reduction_prob", rho}, {"adapted_at", adapted}};
}

int cmd_attack(const RunManifest& m) {
  SearchConfig cfg = effective_config(m);
  if (m.seed) cfg.rng_seed = *m.seed;
  try {
    cfg.mode = mode_from_string(m.mode);
  } catch (const std::invalid_argument&) {
    throw UsageError("attack runs one mode: tm-evo or evo-baseline");
  }
  const auto desc = detector_descriptor(m);
  if (m.images.size() > 1) throw UsageError("attack takes a single --image");

  std::shared_ptr<const Detector> detector;
  Image image;
  std::string image_id;
  if (desc.kind == DetectorDescriptor::Kind::synthetic) {
    if (desc.spec_path.empty()) throw UsageError("attack needs --detector synthetic:<spec.json>");
    auto synthetic = synthetic_detector(desc.spec_path);
    image = m.images.empty() ? synthetic->spec().templ : load_input(m.images.front());
    image_id = m.images.empty() ? fs::path(desc.spec_path).stem().string() : fs::path(m.images.front()).stem().string();
    detector = synthetic;
  } else {
    if (m.images.empty()) throw UsageError("attack with a remote detector needs --image");
    image = load_input(m.images.front());
    image_id = fs::path(m.images.front()).stem().string();
    detector = remote_detector(desc, m);
  }

  const AttackResult result = run_attack(image, *detector, cfg);
  const TrialReport trial = to_trial_report(result, image_id, cfg.mode, 0, cfg.rng_seed);

  const fs::path out(m.out_dir);
  fs::create_directories(out);
  save_image(result.image, out / "attack.png");
  nlohmann::ordered_json j = {{"config", to_json(cfg)},
                              {"detector", detector->name()},
                              {"trial",
                               {{"image_id", trial.image_id},
                                {"algorithm", to_string(trial.algorithm)},
                                {"seed", trial.seed},
                                {"success", trial.success},
                                {"generations", trial.generations},
                                {"l0", trial.l0},
                                {"l2", std::stod(format_number(trial.l2))},
                                {"runtime_seconds", std::stod(format_number(trial.runtime_seconds))},
                                {"detector_calls", trial.detector_calls},
                                {"error", trial.error}}},
                              {"trace", trace_json(result)}};
  write_text(out / "trial.json", j.dump(2) + "\n");

  std::cout << image_id << ' ' << to_string(cfg.mode) << ": " << (result.success ? "attack found" : "no attack") << " after "
            << result.generations << " generations, L0=" << result.l0 << " L2=" << format_number(result.l2) << '\n';
  if (!result.error.empty()) {
    std::cerr << "detector failure: " << result.error << '\n';
    return kExitError;
  }
  return result.success ? kExitOk : kExitBudget;
}

int cmd_bench(const RunManifest& m) {
  ExperimentOptions options;
  options.config = effective_config(m);
  options.repetitions = m.repetitions;
  options.base_seed = m.seed.value_or(options.config.rng_seed);
  options.workers = m.workers;
  options.image_dir = fs::path(m.out_dir) / "attacks";
  if (m.repetitions < 1) throw UsageError("--repetitions must be at least 1");
  if (m.mode == "both") {
    options.modes = {Mode::tm_evo, Mode::evo_baseline};
  } else {
    try {
      options.modes = {mode_from_string(m.mode)};
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }

  const auto desc = detector_descriptor(m);
  std::vector<SuiteEntry> suite;
  if (desc.kind == DetectorDescriptor::Kind::synthetic && desc.spec_path.empty()) {
    if (m.suite_dir.empty()) throw UsageError("bench with --detector synthetic needs --suite-dir of scenario specs");
    for (const auto& p : list_dir(m.suite_dir, {".json"})) {
      auto det = synthetic_detector(p);
      suite.push_back({p.stem().string(), det->spec().templ, det});
    }
  } else {
    std::shared_ptr<const Detector> detector;
    std::optional<Image> templ;
    if (desc.kind == DetectorDescriptor::Kind::synthetic) {
      auto det = synthetic_detector(desc.spec_path);
      templ = det->spec().templ;
      detector = det;
    } else {
      detector = remote_detector(desc, m);
    }
    std::vector<fs::path> paths(m.images.begin(), m.images.end());
    if (!m.suite_dir.empty()) {
      const auto listed = list_dir(m.suite_dir, {".png", ".ppm"});
      paths.insert(paths.end(), listed.begin(), listed.end());
    }
    if (paths.empty() && templ) suite.push_back({fs::path(desc.spec_path).stem().string(), *templ, detector});
    for (const auto& p : paths) suite.push_back({p.stem().string(), load_input(p), detector});
    if (suite.empty()) throw UsageError("bench needs --image or --suite-dir");
  }

  const ExperimentReport report = run_experiment(suite, options);
  emit_report(report, m.out_dir);

  int failures = 0;
  for (const auto& t : report.trials) {
    if (!t.error.empty()) ++failures;
  }
  std::cout << report.trials.size() << " trials written to " << m.out_dir << "/report.{json,csv}";
  if (report.wilcoxon_p_l0) std::cout << ", rank-sum p(L0)=" << format_number(*report.wilcoxon_p_l0);
  std::cout << '\n';
  if (failures > 0) std::cerr << failures << " trial(s) failed; see the error column\n";
  return kExitOk;
}

struct ScenarioArgs {
  ScenarioParams params;
  std::string texture = "saturated";
  int count = 1;
  std::string out_dir = "scenarios";
  std::string prefix = "scenario";
};

int cmd_gen_scenario(const ScenarioArgs& a) {
  if (a.params.boxes < 1) throw UsageError("--boxes must be at least 1");
  if (a.count < 1) throw UsageError("--count must be at least 1");
  ScenarioParams params = a.params;
  try {
    params.texture = texture_from_string(a.texture);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  fs::create_directories(a.out_dir);
  for (int i = 0; i < a.count; ++i) {
    ScenarioParams p = params;
    p.seed = params.seed + static_cast<std::uint64_t>(i);
    SyntheticSpec spec;
    try {
      spec = generate_scenario(p);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    char stem[64];
    std::snprintf(stem, sizeof stem, "%s_%02d", a.prefix.c_str(), i);
    spec.template_path = std::string(stem) + ".png";
    save_synthetic_spec(spec, fs::path(a.out_dir) / (std::string(stem) + ".json"));
    std::cout << (fs::path(a.out_dir) / (std::string(stem) + ".json")).string();
    if (!spec.overlaps().empty()) std::cout << " (overlapping boxes)";
    std::cout << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box evolutionary adversarial attacks on object detectors"};
  app.require_subcommand(1);

  RunManifest attack_m;
  auto* attack = app.add_subcommand("attack", "Attack one image");
  attack->add_option("--image", attack_m.images, "Input image (PNG or PPM); synthetic specs default to their template");
  attack->add_option("--mode", attack_m.mode, "tm-evo or evo-baseline")->capture_default_str();
  add_run_flags(*attack, attack_m);

  RunManifest bench_m;
  bench_m.mode = "both";
  bench_m.out_dir = "tmevo-bench";
  auto* bench = app.add_subcommand("bench", "Run both algorithms over a suite with repetitions");
  bench->add_option("--image", bench_m.images, "Input image(s)");
  bench->add_option("--suite-dir", bench_m.suite_dir, "Directory of scenario specs (synthetic) or images (remote)");
  bench->add_option("--mode", bench_m.mode, "tm-evo, evo-baseline or both")->capture_default_str();
  bench->add_option("--repetitions", bench_m.repetitions, "Repetitions per image and algorithm")->capture_default_str();
  bench->add_option("--workers", bench_m.workers, "Concurrent trials")->capture_default_str();
  add_run_flags(*bench, bench_m);

  ScenarioArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-scenario", "Write synthetic detector specs and template PNGs");
  gen_cmd->add_option("--height", gen.params.height)->capture_default_str();
  gen_cmd->add_option("--width", gen.params.width)->capture_default_str();
  gen_cmd->add_option("--boxes", gen.params.boxes, "Number of template boxes")->capture_default_str();
  gen_cmd->add_option("--k", gen.params.sensitivity, "Per-box sensitivity")->capture_default_str();
  gen_cmd->add_option("--min-side", gen.params.min_side)->capture_default_str();
  gen_cmd->add_option("--max-side", gen.params.max_side)->capture_default_str();
  gen_cmd->add_option("--texture", gen.texture, "Object texture: saturated or uniform")->capture_default_str();
  gen_cmd->add_flag("--allow-overlap", gen.params.allow_overlap, "Permit overlapping boxes (flagged in the spec metadata)");
  gen_cmd->add_option("--seed", gen.params.seed)->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "Number of scenarios")->capture_default_str();
  gen_cmd->add_option("--prefix", gen.prefix)->capture_default_str();
  gen_cmd->add_option("--out-dir", gen.out_dir)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*attack) return cmd_attack(attack_m);
    if (*bench) return cmd_bench(bench_m);
    return cmd_gen_scenario(gen);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidSubject& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}
