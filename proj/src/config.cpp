#include "tmevo/config.hpp"

#include <fstream>
#include <set>

namespace tmevo {

nlohmann::ordered_json to_json(const SearchConfig& cfg) {
  return {{"population_size", cfg.population_size},
          {"max_generations", cfg.max_generations},
          {"perturbation_degree", cfg.perturbation_degree},
          {"mutation_rate", cfg.mutation_rate},
          {"noise_reduction_prob", cfg.noise_reduction_prob},
          {"plateau_window", cfg.plateau_window},
          {"initial_weights", {cfg.initial_weights.w1, cfg.initial_weights.w2, cfg.initial_weights.w3}},
          {"attack_threshold", cfg.attack_threshold},
          {"init_rate", cfg.init_rate},
          {"mode", to_string(cfg.mode)},
          {"rng_seed", cfg.rng_seed}};
}

SearchConfig config_from_json(const nlohmann::json& j, SearchConfig cfg) {
  static const std::set<std::string> known{"population_size", "max_generations", "perturbation_degree", "mutation_rate",
                                           "noise_reduction_prob", "plateau_window", "initial_weights", "attack_threshold",
                                           "init_rate", "mode", "rng_seed"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    if (j.contains("population_size")) cfg.population_size = j["population_size"].get<int>();
    if (j.contains("max_generations")) cfg.max_generations = j["max_generations"].get<int>();
    if (j.contains("perturbation_degree")) cfg.perturbation_degree = j["perturbation_degree"].get<double>();
    if (j.contains("mutation_rate")) cfg.mutation_rate = j["mutation_rate"].get<double>();
    if (j.contains("noise_reduction_prob")) cfg.noise_reduction_prob = j["noise_reduction_prob"].get<double>();
    if (j.contains("plateau_window")) cfg.plateau_window = j["plateau_window"].get<int>();
    if (j.contains("initial_weights")) {
      const auto& w = j["initial_weights"];
      if (!w.is_array() || w.size() != 3) throw ConfigError("initial_weights must be [w1, w2, w3]");
      cfg.initial_weights = {w[0].get<double>(), w[1].get<double>(), w[2].get<double>()};
    }
    if (j.contains("attack_threshold")) cfg.attack_threshold = j["attack_threshold"].get<double>();
    if (j.contains("init_rate")) cfg.init_rate = j["init_rate"].get<double>();
    if (j.contains("mode")) cfg.mode = mode_from_string(j["mode"].get<std::string>());
    if (j.contains("rng_seed")) cfg.rng_seed = j["rng_seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

SearchConfig load_config(const std::filesystem::path& path, SearchConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in), base);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace tmevo
