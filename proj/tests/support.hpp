#pragma once

#include "tmevo/detector.hpp"
#include "tmevo/image.hpp"

#include <random>

namespace tmevo::test {

inline Image random_image(int h, int w, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PixelArray<double> raw(Eigen::Index(h) * w, c);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = u(rng);
  return Image(h, w, std::move(raw));
}

// Template of 0/1 channels with boxes of the given sensitivity.
inline SyntheticSpec saturated_spec(int h, int w, std::vector<BoundingBox> boxes, double k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  PixelArray<double> raw(Eigen::Index(h) * w, 3);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = coin(rng) ? 1.0 : 0.0;
  SyntheticSpec spec;
  spec.templ = Image(h, w, std::move(raw));
  int id = 0;
  for (const auto& b : boxes) spec.boxes.push_back({"obj" + std::to_string(id++), b, k});
  return spec;
}

}  // namespace tmevo::test
