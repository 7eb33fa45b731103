#pragma once

#include "tmevo/detector.hpp"
#include "tmevo/image.hpp"

#include <stdexcept>
#include <vector>

namespace tmevo {

inline constexpr double kAttackThreshold = 0.9;
inline constexpr double kMatchIou = 0.5;

/// The image cannot be attacked: the model finds no confident object on it.
class InvalidSubject : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Weights {
  double w1 = 0.1;  // detection confidence
  double w2 = 0.9;  // modified-pixel ratio
  double w3 = 0.9;  // normalized distance

  friend bool operator==(const Weights&, const Weights&) = default;
};

struct FitnessBreakdown {
  double m1 = 0;
  double m2 = 0;
  double m3 = 0;
  double weighted = 0;

  friend bool operator==(const FitnessBreakdown&, const FitnessBreakdown&) = default;
};

/// Objects the model finds on the original image, plus the normalizers the
/// metrics need. Immutable once built.
struct GroundTruth {
  std::vector<BoundingBox> boxes;
  PixelMask box_union;
  Eigen::Index pixel_total = 0;
  double uniform_distance = 0;  // max over black/white of l2(original, uniform)
  bool uniform_is_white = false;

  std::size_t n() const { return boxes.size(); }
};

/// Uniform image (all black or all white) farthest from `original`; ties go to black.
Image uniform_reference(const Image& original);

GroundTruth make_ground_truth(const Image& original, const DetectionSet& detections, double threshold = kAttackThreshold);
GroundTruth make_ground_truth(const Image& original, const Detector& detector, double threshold = kAttackThreshold);

/// Mean matched confidence over the original objects. Each original box takes
/// the detection with the highest IoU (at least 0.5); unmatched objects score 0.
double m1(const DetectionSet& detections, const GroundTruth& gt);

/// Modified pixels over the pixel count of the ground-truth box union.
double m2(const PixelMask& modified, const GroundTruth& gt);

/// Distance to the original, normalized by the distance to the uniform reference.
double m3(const Image& original, const Image& candidate, const GroundTruth& gt);

inline double weighted_fitness(double m1_value, double m2_value, double m3_value, const Weights& w) {
  return w.w1 * m1_value + w.w2 * m2_value + w.w3 * m3_value;
}

inline double weighted_fitness(const FitnessBreakdown& b, const Weights& w) { return weighted_fitness(b.m1, b.m2, b.m3, w); }

FitnessBreakdown evaluate_fitness(const Image& original, const Image& candidate, const DetectionSet& detections,
                                  const GroundTruth& gt, const Weights& w);

}  // namespace tmevo
