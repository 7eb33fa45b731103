#pragma once

#include "tmevo/image.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmevo {

inline constexpr double kDefaultScoreFloor = 0.05;

struct Detection {
  std::string label;
  double confidence = 0;
  BoundingBox box;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct DetectionSet {
  std::vector<Detection> detections;  // descending confidence
  int height = 0;
  int width = 0;

  bool empty() const { return detections.empty(); }
  std::size_t size() const { return detections.size(); }

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

/// Transport-level failure (timeout, refused connection, 5xx); retrying may help.
class DetectorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Response that violates the wire protocol; never retried.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model under test. Implementations must be safe to call concurrently.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual DetectionSet detect(const Image& image) const = 0;
  virtual std::string name() const = 0;
};

struct TemplateBox {
  std::string label;
  BoundingBox box;
  double sensitivity = 4.0;  // k
};

/// Synthetic model: one object per template box, confidence
/// clamp(1 - k * meanAbsDiff(patch, template patch), 0, 1).
struct SyntheticSpec {
  Image templ;
  std::vector<TemplateBox> boxes;
  double score_floor = kDefaultScoreFloor;
  std::filesystem::path template_path;  // as written in the spec file, relative to it

  /// Pairs of box indices whose areas intersect.
  std::vector<std::pair<int, int>> overlaps() const;
};

void validate(const SyntheticSpec& spec);

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
/// Writes the spec JSON; the template image is written next to it under spec.template_path.
void save_synthetic_spec(const SyntheticSpec& spec, const std::filesystem::path& path);

DetectionSet synthetic_detect(const Image& image, const SyntheticSpec& spec);

class SyntheticDetector final : public Detector {
 public:
  explicit SyntheticDetector(SyntheticSpec spec);
  DetectionSet detect(const Image& image) const override;
  std::string name() const override { return "synthetic"; }
  const SyntheticSpec& spec() const { return spec_; }

 private:
  SyntheticSpec spec_;
};

struct RemoteOptions {
  double score_floor = kDefaultScoreFloor;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::seconds timeout{30};
};

/// HTTP client for the detection wire protocol (POST /detect, GET /health).
class RemoteDetector final : public Detector {
 public:
  explicit RemoteDetector(std::string endpoint, RemoteOptions options = {});
  DetectionSet detect(const Image& image) const override;
  std::string name() const override;
  /// Model name reported by GET /health.
  std::string health() const;

 private:
  std::string endpoint_;
  RemoteOptions options_;
};

/// Encodes a /detect request body.
std::string encode_detect_request(const Image& image, double score_floor);
/// Decodes a /detect response body, validating every field.
DetectionSet decode_detect_response(const std::string& body, int height, int width);

/// Wrapper that counts calls to the wrapped detector.
class CountingDetector final : public Detector {
 public:
  explicit CountingDetector(std::shared_ptr<const Detector> inner) : inner_(std::move(inner)) {}
  DetectionSet detect(const Image& image) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->detect(image);
  }
  std::string name() const override { return inner_->name(); }
  long calls() const { return calls_.load(); }
  void reset() { calls_ = 0; }

 private:
  std::shared_ptr<const Detector> inner_;
  mutable std::atomic<long> calls_{0};
};

struct DetectorDescriptor {
  enum class Kind { synthetic, remote };
  Kind kind = Kind::synthetic;
  std::string endpoint;   // remote
  std::string spec_path;  // synthetic; empty means "per-image spec from the suite"
  std::string name;

  /// Parses "synthetic", "synthetic:<spec.json>" or "remote:<url>".
  static DetectorDescriptor parse(const std::string& text);
};

}  // namespace tmevo
