#include "tmevo/harness.hpp"

#include "tmevo/config.hpp"
#include "tmevo/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace tmevo {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

double round6(double v) { return std::stod(format_number(v)); }

Summary summarize_values(const std::vector<double>& values) {
  if (values.empty()) return {};
  Summary s{0, values.front(), values.front()};
  for (double v : values) {
    s.mean += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean /= static_cast<double>(values.size());
  return s;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

ordered_json summary_json(const Summary& s) {
  return {{"mean", round6(s.mean)}, {"min", round6(s.min)}, {"max", round6(s.max)}};
}

Summary summary_from_json(const json& j) { return {j.at("mean").get<double>(), j.at("min").get<double>(), j.at("max").get<double>()}; }

json optional_json(const std::optional<double>& v) { return v ? json(round6(*v)) : json(nullptr); }

std::optional<double> optional_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

struct Comparison {
  std::optional<double> p_l0;
  std::optional<double> p_l2;
};

Comparison compare(const std::vector<const TrialReport*>& trials) {
  std::vector<double> l0[2], l2[2];
  for (const auto* t : trials) {
    if (!t->success) continue;
    const int k = t->algorithm == Mode::tm_evo ? 0 : 1;
    l0[k].push_back(static_cast<double>(t->l0));
    l2[k].push_back(t->l2);
  }
  if (l0[0].empty() || l0[1].empty()) return {};
  return {wilcoxon_rank_sum(l0[0], l0[1]).p_value, wilcoxon_rank_sum(l2[0], l2[1]).p_value};
}

}  // namespace

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t image_index, int repetition, Mode mode) {
  return base_seed * 10000 + image_index * 100 + static_cast<std::uint64_t>(repetition) * 10 + (mode == Mode::tm_evo ? 0 : 1);
}

TrialReport to_trial_report(const AttackResult& result, const std::string& image_id, Mode mode, int repetition,
                            std::uint64_t seed) {
  return {image_id,
          mode,
          repetition,
          result.success,
          result.generations,
          static_cast<long>(result.l0),
          result.l2,
          result.runtime_seconds,
          seed,
          result.detector_calls,
          result.error};
}

void summarize(ExperimentReport& report) {
  report.aggregates.clear();
  report.per_image.clear();
  std::vector<std::string> ids;
  std::map<std::pair<std::string, Mode>, std::vector<const TrialReport*>> groups;
  std::map<std::string, std::vector<const TrialReport*>> by_image;
  for (const auto& t : report.trials) {
    if (std::find(ids.begin(), ids.end(), t.image_id) == ids.end()) ids.push_back(t.image_id);
    groups[{t.image_id, t.algorithm}].push_back(&t);
    by_image[t.image_id].push_back(&t);
  }
  for (const auto& id : ids) {
    for (Mode mode : {Mode::tm_evo, Mode::evo_baseline}) {
      const auto it = groups.find({id, mode});
      if (it == groups.end()) continue;
      Aggregate agg{id, mode, static_cast<int>(it->second.size()), 0, {}, {}, {}, {}};
      std::vector<double> l0, l2, runtime, generations;
      for (const auto* t : it->second) {
        agg.successes += t->success ? 1 : 0;
        l0.push_back(static_cast<double>(t->l0));
        l2.push_back(t->l2);
        runtime.push_back(t->runtime_seconds);
        generations.push_back(t->generations);
      }
      agg.l0 = summarize_values(l0);
      agg.l2 = summarize_values(l2);
      agg.runtime_seconds = summarize_values(runtime);
      agg.generations = summarize_values(generations);
      report.aggregates.push_back(agg);
    }
    const auto c = compare(by_image[id]);
    report.per_image.push_back({id, c.p_l0, c.p_l2});
  }
  std::vector<const TrialReport*> all;
  for (const auto& t : report.trials) all.push_back(&t);
  const auto pooled = compare(all);
  report.wilcoxon_p_l0 = pooled.p_l0;
  report.wilcoxon_p_l2 = pooled.p_l2;
}

ExperimentReport run_experiment(std::span<const SuiteEntry> suite, const ExperimentOptions& options) {
  if (options.repetitions < 1) throw std::invalid_argument("repetitions must be at least 1");
  validate(options.config);

  struct Job {
    std::size_t image_index;
    int repetition;
    Mode mode;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    for (int r = 0; r < options.repetitions; ++r) {
      for (Mode m : options.modes) jobs.push_back({i, r, m});
    }
  }

  std::vector<TrialReport> trials(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const Job& job = jobs[k];
      const SuiteEntry& entry = suite[job.image_index];
      SearchConfig cfg = options.config;
      cfg.mode = job.mode;
      cfg.rng_seed = trial_seed(options.base_seed, job.image_index, job.repetition, job.mode);
      try {
        const AttackResult result = run_attack(entry.image, *entry.detector, cfg);
        trials[k] = to_trial_report(result, entry.id, job.mode, job.repetition, cfg.rng_seed);
        if (options.image_dir) {
          const auto dir = *options.image_dir / entry.id / to_string(job.mode);
          std::filesystem::create_directories(dir);
          save_image(result.image, dir / (std::to_string(job.repetition) + ".png"));
        }
      } catch (const std::exception& e) {
        TrialReport failed;
        failed.image_id = entry.id;
        failed.algorithm = job.mode;
        failed.repetition = job.repetition;
        failed.seed = cfg.rng_seed;
        failed.error = e.what();
        trials[k] = failed;
      }
    }
  };
  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  ExperimentReport report;
  report.config = options.config;
  report.repetitions = options.repetitions;
  report.base_seed = options.base_seed;
  report.trials = std::move(trials);
  summarize(report);
  return report;
}

ordered_json to_json(const ExperimentReport& report) {
  ordered_json trials = ordered_json::array();
  for (const auto& t : report.trials) {
    trials.push_back({{"image_id", t.image_id},
                      {"algorithm", to_string(t.algorithm)},
                      {"repetition", t.repetition},
                      {"seed", t.seed},
                      {"success", t.success},
                      {"generations", t.generations},
                      {"l0", t.l0},
                      {"l2", round6(t.l2)},
                      {"runtime_seconds", round6(t.runtime_seconds)},
                      {"detector_calls", t.detector_calls},
                      {"error", t.error}});
  }
  ordered_json aggregates = ordered_json::array();
  for (const auto& a : report.aggregates) {
    aggregates.push_back({{"image_id", a.image_id},
                          {"algorithm", to_string(a.algorithm)},
                          {"trials", a.trials},
                          {"successes", a.successes},
                          {"l0", summary_json(a.l0)},
                          {"l2", summary_json(a.l2)},
                          {"runtime_seconds", summary_json(a.runtime_seconds)},
                          {"generations", summary_json(a.generations)}});
  }
  ordered_json per_image = ordered_json::array();
  for (const auto& c : report.per_image) {
    per_image.push_back({{"image_id", c.image_id}, {"p_l0", optional_json(c.p_l0)}, {"p_l2", optional_json(c.p_l2)}});
  }
  const ordered_json config = to_json(report.config);
  return {{"metadata",
           {{"wilcoxon", "two-sided rank-sum; exact enumeration for n1+n2 <= 12, otherwise normal approximation with tie "
                         "and continuity correction"},
            {"compared", "tm_evo vs evo_baseline, successful trials only"},
            {"seed_rule", "base_seed*10000 + image_index*100 + repetition*10 + algorithm_index"}}},
          {"config", config},
          {"repetitions", report.repetitions},
          {"base_seed", report.base_seed},
          {"trials", trials},
          {"aggregates", aggregates},
          {"wilcoxon", {{"p_l0", optional_json(report.wilcoxon_p_l0)}, {"p_l2", optional_json(report.wilcoxon_p_l2)}, {"per_image", per_image}}}};
}

ExperimentReport report_from_json(const json& j) {
  ExperimentReport report;
  try {
    report.config = config_from_json(j.at("config"));
    report.repetitions = j.at("repetitions").get<int>();
    report.base_seed = j.at("base_seed").get<std::uint64_t>();
    for (const auto& t : j.at("trials")) {
      report.trials.push_back({t.at("image_id").get<std::string>(), mode_from_string(t.at("algorithm").get<std::string>()),
                               t.at("repetition").get<int>(), t.at("success").get<bool>(), t.at("generations").get<int>(),
                               t.at("l0").get<long>(), t.at("l2").get<double>(), t.at("runtime_seconds").get<double>(),
                               t.at("seed").get<std::uint64_t>(), t.at("detector_calls").get<long>(),
                               t.at("error").get<std::string>()});
    }
    for (const auto& a : j.at("aggregates")) {
      report.aggregates.push_back({a.at("image_id").get<std::string>(), mode_from_string(a.at("algorithm").get<std::string>()),
                                   a.at("trials").get<int>(), a.at("successes").get<int>(), summary_from_json(a.at("l0")),
                                   summary_from_json(a.at("l2")), summary_from_json(a.at("runtime_seconds")),
                                   summary_from_json(a.at("generations"))});
    }
    const auto& w = j.at("wilcoxon");
    report.wilcoxon_p_l0 = optional_from_json(w.at("p_l0"));
    report.wilcoxon_p_l2 = optional_from_json(w.at("p_l2"));
    for (const auto& c : w.at("per_image")) {
      report.per_image.push_back(
          {c.at("image_id").get<std::string>(), optional_from_json(c.at("p_l0")), optional_from_json(c.at("p_l2"))});
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed report: ") + e.what());
  }
  return report;
}

std::string to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& t : report.trials) {
    out << csv_field(t.image_id) << ',' << to_string(t.algorithm) << ',' << t.repetition << ',' << t.seed << ','
        << (t.success ? 1 : 0) << ',' << t.generations << ',' << t.l0 << ',' << format_number(t.l2) << ',' << t.detector_calls
        << ',' << csv_field(t.error) << '\n';
  }
  return out.str();
}

std::string timings_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << kTimingsHeader << '\n';
  for (const auto& t : report.trials) {
    out << csv_field(t.image_id) << ',' << to_string(t.algorithm) << ',' << t.repetition << ',' << t.seed << ','
        << format_number(t.runtime_seconds) << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "report.json", to_json(report).dump(2) + "\n");
  write_text(out_dir / "report.csv", to_csv(report));
  write_text(out_dir / "timings.csv", timings_csv(report));
}

}  // namespace tmevo
