#include "tmevo/scenario.hpp"

#include <random>
#include <stdexcept>

namespace tmevo {

Texture texture_from_string(const std::string& text) {
  if (text == "saturated") return Texture::saturated;
  if (text == "uniform") return Texture::uniform;
  throw std::invalid_argument("unknown texture '" + text + "'");
}

std::string to_string(Texture texture) { return texture == Texture::saturated ? "saturated" : "uniform"; }

SyntheticSpec generate_scenario(const ScenarioParams& p) {
  if (p.boxes < 1) throw std::invalid_argument("scenario needs at least one box");
  if (p.height < 1 || p.width < 1) throw std::invalid_argument("scenario dimensions must be positive");
  if (p.min_side < 1 || p.min_side > p.max_side) throw std::invalid_argument("invalid box side range");
  if (p.min_side > p.height || p.min_side > p.width) throw std::invalid_argument("boxes do not fit the image");
  if (!(p.sensitivity > 0)) throw std::invalid_argument("sensitivity must be positive");

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  PixelArray<double> raw(Eigen::Index(p.height) * p.width, 3);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    for (int c = 0; c < 3; ++c) raw(i, c) = std::round(value(rng) * 255.0) / 255.0;
  }

  SyntheticSpec spec;
  constexpr int kAttempts = 1000;
  for (int b = 0; b < p.boxes; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      const int w = std::uniform_int_distribution<int>(p.min_side, std::min(p.max_side, p.width))(rng);
      const int h = std::uniform_int_distribution<int>(p.min_side, std::min(p.max_side, p.height))(rng);
      const int x = std::uniform_int_distribution<int>(0, p.width - w)(rng);
      const int y = std::uniform_int_distribution<int>(0, p.height - h)(rng);
      TemplateBox candidate{"object" + std::to_string(b), {double(x), double(y), double(x + w), double(y + h)}, p.sensitivity};
      bool clash = false;
      if (!p.allow_overlap) {
        for (const auto& other : spec.boxes) {
          if (iou(other.box, candidate.box) > 0) clash = true;
        }
      }
      if (!clash) {
        spec.boxes.push_back(candidate);
        placed = true;
      }
    }
    if (!placed) throw std::invalid_argument("cannot place " + std::to_string(p.boxes) + " disjoint boxes in the image");
  }
  if (p.texture == Texture::saturated) {
    const PixelMask objects = box_union_mask(p.height, p.width, [&] {
      std::vector<BoundingBox> boxes;
      for (const auto& tb : spec.boxes) boxes.push_back(tb.box);
      return boxes;
    }());
    std::bernoulli_distribution bit(0.5);
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      if (!objects[i]) continue;
      for (int c = 0; c < 3; ++c) raw(i, c) = bit(rng) ? 1.0 : 0.0;
    }
  }
  spec.templ = Image(p.height, p.width, std::move(raw));
  return spec;
}

}  // namespace tmevo
