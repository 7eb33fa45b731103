#include "tmevo/detector.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <thread>

namespace tmevo {

using nlohmann::json;

namespace {

void sort_by_confidence(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
}

json box_to_json(const BoundingBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ProtocolError("box must be an array of 4 numbers");
  for (const auto& v : j) {
    if (!v.is_number()) throw ProtocolError("box coordinates must be numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

std::vector<std::pair<int, int>> SyntheticSpec::overlaps() const {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      const auto& a = boxes[i].box;
      const auto& b = boxes[j].box;
      if (std::min(a.x_max, b.x_max) > std::max(a.x_min, b.x_min) && std::min(a.y_max, b.y_max) > std::max(a.y_min, b.y_min)) {
        out.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }
  return out;
}

void validate(const SyntheticSpec& spec) {
  if (spec.templ.empty()) throw std::invalid_argument("synthetic spec has no template image");
  if (spec.boxes.empty()) throw std::invalid_argument("synthetic spec needs at least one box");
  if (spec.score_floor < 0 || spec.score_floor >= 1) throw std::invalid_argument("score floor must lie in [0, 1)");
  for (const auto& tb : spec.boxes) {
    if (!tb.box.within(spec.templ.height(), spec.templ.width())) {
      throw std::invalid_argument("template box '" + tb.label + "' lies outside the " + std::to_string(spec.templ.width()) +
                                  "x" + std::to_string(spec.templ.height()) + " image");
    }
    if (!(tb.sensitivity > 0)) throw std::invalid_argument("template box sensitivity must be positive");
  }
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ImageIoError("cannot open synthetic spec " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed synthetic spec " + path.string() + ": " + e.what());
  }
  SyntheticSpec spec;
  try {
    spec.template_path = j.at("template").get<std::string>();
    spec.score_floor = j.value("score_floor", kDefaultScoreFloor);
    for (const auto& b : j.at("boxes")) {
      spec.boxes.push_back({b.at("label").get<std::string>(), box_from_json(b.at("box")), b.value("k", 4.0)});
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed synthetic spec " + path.string() + ": " + e.what());
  } catch (const ProtocolError& e) {
    throw std::invalid_argument("malformed synthetic spec " + path.string() + ": " + e.what());
  }
  spec.templ = load_image(path.parent_path() / spec.template_path);
  if (j.contains("height") && (j["height"].get<int>() != spec.templ.height() || j["width"].get<int>() != spec.templ.width())) {
    throw std::invalid_argument("synthetic spec dimensions disagree with its template image");
  }
  validate(spec);
  return spec;
}

void save_synthetic_spec(const SyntheticSpec& spec, const std::filesystem::path& path) {
  validate(spec);
  if (spec.template_path.empty() || spec.template_path.is_absolute()) {
    throw std::invalid_argument("synthetic spec template path must be relative");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  json boxes = json::array();
  for (const auto& tb : spec.boxes) {
    boxes.push_back(json{{"label", tb.label}, {"box", box_to_json(tb.box)}, {"k", tb.sensitivity}});
  }
  json overlaps = json::array();
  for (auto [a, b] : spec.overlaps()) overlaps.push_back(json::array({a, b}));
  json j = {{"height", spec.templ.height()},
            {"width", spec.templ.width()},
            {"channels", spec.templ.channels()},
            {"template", spec.template_path.generic_string()},
            {"score_floor", spec.score_floor},
            {"boxes", boxes},
            {"metadata", {{"overlapping", !overlaps.empty()}, {"overlapping_pairs", overlaps}}}};
  save_image(spec.templ, path.parent_path() / spec.template_path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ImageIoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DetectionSet synthetic_detect(const Image& image, const SyntheticSpec& spec) {
  require_same_shape(image, spec.templ);
  DetectionSet out{{}, image.height(), image.width()};
  for (const auto& tb : spec.boxes) {
    const double conf = std::clamp(1.0 - tb.sensitivity * mean_abs_diff(image, spec.templ, tb.box), 0.0, 1.0);
    if (conf >= spec.score_floor) out.detections.push_back({tb.label, conf, tb.box});
  }
  sort_by_confidence(out.detections);
  return out;
}

SyntheticDetector::SyntheticDetector(SyntheticSpec spec) : spec_(std::move(spec)) { validate(spec_); }

DetectionSet SyntheticDetector::detect(const Image& image) const { return synthetic_detect(image, spec_); }

std::string encode_detect_request(const Image& image, double score_floor) {
  const auto png = encode_png(image);
  json j = {{"image_png_b64", httplib::detail::base64_encode(std::string(png.begin(), png.end()))}, {"score_floor", score_floor}};
  return j.dump();
}

DetectionSet decode_detect_response(const std::string& body, int height, int width) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("detections") || !j["detections"].is_array()) {
    throw ProtocolError("response lacks a detections array");
  }
  DetectionSet out{{}, height, width};
  for (const auto& d : j["detections"]) {
    if (!d.is_object()) throw ProtocolError("detection entry is not an object");
    if (!d.contains("label") || !d["label"].is_string()) throw ProtocolError("detection label missing or not a string");
    if (!d.contains("score") || !d["score"].is_number()) throw ProtocolError("detection score missing or not a number");
    if (!d.contains("box")) throw ProtocolError("detection box missing");
    const double score = d["score"].get<double>();
    if (!(score >= 0.0 && score <= 1.0)) throw ProtocolError("detection score " + std::to_string(score) + " outside [0, 1]");
    const BoundingBox box = box_from_json(d["box"]);
    if (!box.within(height, width)) throw ProtocolError("detection box is degenerate or outside the submitted image");
    out.detections.push_back({d["label"].get<std::string>(), score, box});
  }
  sort_by_confidence(out.detections);
  return out;
}

RemoteDetector::RemoteDetector(std::string endpoint, RemoteOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {
  if (endpoint_.empty()) throw std::invalid_argument("remote detector requires an endpoint");
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
}

std::string RemoteDetector::name() const { return "remote:" + endpoint_; }

DetectionSet RemoteDetector::detect(const Image& image) const {
  const std::string body = encode_detect_request(image, options_.score_floor);
  auto backoff = options_.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(endpoint_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    auto res = client.Post("/detect", body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ProtocolError("HTTP " + std::to_string(res->status) + " from " + endpoint_ + "/detect");
    return decode_detect_response(res->body, image.height(), image.width());
  }
  throw DetectorError(endpoint_ + "/detect failed after " + std::to_string(options_.max_retries) + " retries: " + last_error);
}

std::string RemoteDetector::health() const {
  httplib::Client client(endpoint_);
  client.set_connection_timeout(options_.timeout);
  auto res = client.Get("/health");
  if (!res) throw DetectorError("transport error: " + httplib::to_string(res.error()));
  if (res->status != 200) throw ProtocolError("HTTP " + std::to_string(res->status) + " from /health");
  try {
    const auto j = json::parse(res->body);
    if (j.at("status").get<std::string>() != "ok") throw ProtocolError("health status is not ok");
    return j.at("model").get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed health response: ") + e.what());
  }
}

DetectorDescriptor DetectorDescriptor::parse(const std::string& text) {
  DetectorDescriptor d;
  if (text == "synthetic") {
    d.kind = Kind::synthetic;
    d.name = "synthetic";
  } else if (text.starts_with("synthetic:")) {
    d.kind = Kind::synthetic;
    d.spec_path = text.substr(10);
    d.name = "synthetic";
  } else if (text.starts_with("remote:")) {
    d.kind = Kind::remote;
    d.endpoint = text.substr(7);
    d.name = "remote";
    if (d.endpoint.empty()) throw std::invalid_argument("remote detector requires an endpoint URL");
  } else {
    throw std::invalid_argument("detector must be 'synthetic[:<spec.json>]' or 'remote:<url>', got '" + text + "'");
  }
  return d;
}

}  // namespace tmevo
