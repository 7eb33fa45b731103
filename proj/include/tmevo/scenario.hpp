#pragma once

#include "tmevo/detector.hpp"

#include <cstdint>
#include <string>

namespace tmevo {

/// Object texture inside template boxes. Saturated objects use channel values
/// of exactly 0 or 1; uniform objects draw every channel from U[0, 1].
enum class Texture { saturated, uniform };

Texture texture_from_string(const std::string& text);
std::string to_string(Texture texture);

struct ScenarioParams {
  int height = 32;
  int width = 32;
  int boxes = 2;
  double sensitivity = 4.0;
  int min_side = 10;
  int max_side = 10;
  Texture texture = Texture::saturated;
  bool allow_overlap = false;
  std::uint64_t seed = 0;
};

/// Random synthetic scenario: a template image with a random 8-bit background and `boxes` template
/// boxes placed inside it. Throws std::invalid_argument when the boxes cannot fit.
SyntheticSpec generate_scenario(const ScenarioParams& params);

}  // namespace tmevo
