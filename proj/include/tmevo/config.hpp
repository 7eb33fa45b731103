#pragma once

#include "tmevo/evolution.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>

namespace tmevo {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Field names match SearchConfig members; weights are "initial_weights": [w1, w2, w3].
nlohmann::ordered_json to_json(const SearchConfig& cfg);

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
SearchConfig config_from_json(const nlohmann::json& j, SearchConfig base = {});
SearchConfig load_config(const std::filesystem::path& path, SearchConfig base = {});

}  // namespace tmevo
