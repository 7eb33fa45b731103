#include "tmevo/fitness.hpp"

namespace tmevo {

Image uniform_reference(const Image& original) {
  Image black(original.height(), original.width(), original.channels(), 0.0);
  Image white(original.height(), original.width(), original.channels(), 1.0);
  return l2_norm(original, white) > l2_norm(original, black) ? white : black;
}

GroundTruth make_ground_truth(const Image& original, const DetectionSet& detections, double threshold) {
  GroundTruth gt;
  for (const auto& d : detections.detections) {
    if (d.confidence > threshold) gt.boxes.push_back(d.box.clipped(original.height(), original.width()));
  }
  if (gt.boxes.empty()) throw InvalidSubject("no object detected above confidence " + std::to_string(threshold));
  gt.box_union = box_union_mask(original.height(), original.width(), gt.boxes);
  gt.pixel_total = gt.box_union.count();
  if (gt.pixel_total == 0) throw InvalidSubject("detected boxes cover no pixel");
  const Image uniform = uniform_reference(original);
  gt.uniform_is_white = uniform.pixels()(0, 0) == 1.0;
  gt.uniform_distance = l2_norm(original, uniform);
  return gt;
}

GroundTruth make_ground_truth(const Image& original, const Detector& detector, double threshold) {
  return make_ground_truth(original, detector.detect(original), threshold);
}

double m1(const DetectionSet& detections, const GroundTruth& gt) {
  double total = 0;
  for (const auto& box : gt.boxes) {
    double best_iou = -1;
    double score = 0;
    for (const auto& d : detections.detections) {
      const double overlap = iou(box, d.box);
      if (overlap >= kMatchIou && overlap > best_iou) {
        best_iou = overlap;
        score = d.confidence;
      }
    }
    total += score;
  }
  return total / static_cast<double>(gt.n());
}

double m2(const PixelMask& modified, const GroundTruth& gt) {
  return static_cast<double>(modified.count()) / static_cast<double>(gt.pixel_total);
}

double m3(const Image& original, const Image& candidate, const GroundTruth& gt) {
  return l2_norm(original, candidate) / gt.uniform_distance;
}

FitnessBreakdown evaluate_fitness(const Image& original, const Image& candidate, const DetectionSet& detections,
                                  const GroundTruth& gt, const Weights& w) {
  FitnessBreakdown b;
  b.m1 = m1(detections, gt);
  b.m2 = m2(diff_mask(original, candidate), gt);
  b.m3 = m3(original, candidate, gt);
  b.weighted = weighted_fitness(b, w);
  return b;
}

}  // namespace tmevo
