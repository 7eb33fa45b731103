#pragma once

#include "tmevo/detector.hpp"
#include "tmevo/evolution.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tmevo {

struct TrialReport {
  std::string image_id;
  Mode algorithm = Mode::tm_evo;
  int repetition = 0;
  bool success = false;
  int generations = 0;
  long l0 = 0;
  double l2 = 0;
  double runtime_seconds = 0;
  std::uint64_t seed = 0;
  long detector_calls = 0;
  std::string error;

  friend bool operator==(const TrialReport&, const TrialReport&) = default;
};

struct Summary {
  double mean = 0;
  double min = 0;
  double max = 0;

  friend bool operator==(const Summary&, const Summary&) = default;
};

struct Aggregate {
  std::string image_id;
  Mode algorithm = Mode::tm_evo;
  int trials = 0;
  int successes = 0;
  Summary l0, l2, runtime_seconds, generations;

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct ImageComparison {
  std::string image_id;
  std::optional<double> p_l0;
  std::optional<double> p_l2;

  friend bool operator==(const ImageComparison&, const ImageComparison&) = default;
};

struct ExperimentReport {
  SearchConfig config;  // effective configuration; mode and seed vary per trial
  int repetitions = 0;
  std::uint64_t base_seed = 0;
  std::vector<TrialReport> trials;
  std::vector<Aggregate> aggregates;
  // Two-sided rank-sum p-values, tm_evo vs evo_baseline over successful trials.
  // Empty when either algorithm has no successful trial.
  std::optional<double> wilcoxon_p_l0;
  std::optional<double> wilcoxon_p_l2;
  std::vector<ImageComparison> per_image;

  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

struct SuiteEntry {
  std::string id;
  Image image;
  std::shared_ptr<const Detector> detector;
};

struct ExperimentOptions {
  SearchConfig config;
  std::vector<Mode> modes{Mode::tm_evo, Mode::evo_baseline};
  int repetitions = 5;
  std::uint64_t base_seed = 0;
  int workers = 1;
  std::optional<std::filesystem::path> image_dir;  // writes <image_id>/<algorithm>/<rep>.png when set
};

/// base_seed * 10000 + image_index * 100 + repetition * 10 + algorithm index (tm_evo 0, evo_baseline 1).
std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t image_index, int repetition, Mode mode);

ExperimentReport run_experiment(std::span<const SuiteEntry> suite, const ExperimentOptions& options);

/// Recomputes aggregates and p-values from report.trials.
void summarize(ExperimentReport& report);

TrialReport to_trial_report(const AttackResult& result, const std::string& image_id, Mode mode, int repetition,
                            std::uint64_t seed);

// Report files. Numbers are written with 6 significant digits and fields in
// a fixed order, so a given report always serializes to the same bytes.
inline constexpr const char* kCsvHeader = "image_id,algorithm,repetition,seed,success,generations,l0,l2,detector_calls,error";
inline constexpr const char* kTimingsHeader = "image_id,algorithm,repetition,seed,runtime_seconds";

nlohmann::ordered_json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);
std::string to_csv(const ExperimentReport& report);
std::string timings_csv(const ExperimentReport& report);

void write_text(const std::filesystem::path& path, const std::string& text);
void emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir);

std::string format_number(double value);

}  // namespace tmevo
