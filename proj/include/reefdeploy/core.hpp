#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "reefdeploy/jsonl.hpp"

namespace reefdeploy {

// Patch-level class vocabulary. Codes are fixed by the labeling convention
// shared with every external file format: 0 = NoDeploy, 1 = Coral, 2 = Deploy.
// Deploy is the only class that triggers a device release; Coral marks live
// coral and counts against deployment.
enum class PatchClass : int { NoDeploy = 0, Coral = 1, Deploy = 2 };

inline constexpr int kNumPatchClasses = 3;

inline int class_code(PatchClass c) { return static_cast<int>(c); }

inline PatchClass patch_class_from_code(int code) {
  if (code < 0 || code >= kNumPatchClasses) {
    throw std::invalid_argument("patch class code out of range: " + std::to_string(code));
  }
  return static_cast<PatchClass>(code);
}

inline std::string to_string(PatchClass c) {
  switch (c) {
    case PatchClass::NoDeploy: return "no_deploy";
    case PatchClass::Coral: return "coral";
    case PatchClass::Deploy: return "deploy";
  }
  return "?";
}

// Whole-frame supervision and ecologist ground truth.
enum class FrameLabel : int { NoDeploy = 0, Deploy = 1 };

inline std::string to_string(FrameLabel v) {
  return v == FrameLabel::Deploy ? "deploy" : "no_deploy";
}

inline FrameLabel frame_label_from_string(const std::string& s) {
  if (s == "deploy") return FrameLabel::Deploy;
  if (s == "no_deploy") return FrameLabel::NoDeploy;
  throw std::invalid_argument("unknown frame label: '" + s + "'");
}

inline int frame_label_code(FrameLabel v) { return static_cast<int>(v); }

// Numerically stable softmax (max subtraction before exponentiation).
inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  double max_logit = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite logit");
    max_logit = std::max(max_logit, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Probability mass over the three patch classes, index = class code.
// Entries lie in [0,1] and sum to 1 within 1e-6; both are checked at
// construction. Argmax ties resolve to the lowest class code, so a tie can
// never spuriously trigger deployment.
class ClassDistribution {
 public:
  static constexpr double kSumTolerance = 1e-6;

  explicit ClassDistribution(std::array<double, 3> probs) : probs_(probs) {
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("class probability outside [0,1]: " + std::to_string(p));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw std::invalid_argument("class probabilities sum to " + std::to_string(sum) +
                                  ", expected 1 within 1e-6");
    }
  }

  static ClassDistribution from_logits(std::span<const double> logits) {
    if (logits.size() != 3) {
      throw std::invalid_argument("expected 3 logits, got " + std::to_string(logits.size()));
    }
    auto p = softmax(logits);
    return ClassDistribution({p[0], p[1], p[2]});
  }

  double operator[](PatchClass c) const { return probs_[static_cast<int>(c)]; }
  double operator[](int code) const { return probs_.at(static_cast<std::size_t>(code)); }
  double at(int code) const { return probs_.at(static_cast<std::size_t>(code)); }
  const std::array<double, 3>& probs() const { return probs_; }

  PatchClass argmax() const {
    int best = 0;
    for (int c = 1; c < kNumPatchClasses; ++c) {
      if (probs_[c] > probs_[best]) best = c;
    }
    return static_cast<PatchClass>(best);
  }

  bool operator==(const ClassDistribution& other) const = default;

 private:
  std::array<double, 3> probs_;
};

// Patch grid geometry. Default 4x7 = 28 patches per frame.
struct GridSpec {
  int rows = 4;
  int cols = 7;

  int patch_count() const { return rows * cols; }
  bool operator==(const GridSpec&) const = default;
};

inline void validate(const GridSpec& g) {
  if (g.rows <= 0 || g.cols <= 0) {
    throw std::invalid_argument("grid dimensions must be positive, got " +
                                std::to_string(g.rows) + "x" + std::to_string(g.cols));
  }
}

// GPS fix attached to a frame. Depth is measured downward from the surface.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  std::optional<double> depth_m;

  bool operator==(const GeoPoint&) const = default;
};

inline void validate(const GeoPoint& p) {
  if (!(p.lat >= -90.0 && p.lat <= 90.0)) {
    throw std::invalid_argument("latitude out of range: " + std::to_string(p.lat));
  }
  if (!(p.lon >= -180.0 && p.lon <= 180.0)) {
    throw std::invalid_argument("longitude out of range: " + std::to_string(p.lon));
  }
  if (p.depth_m && !(*p.depth_m >= 0.0)) {
    throw std::invalid_argument("depth must be non-negative: " + std::to_string(*p.depth_m));
  }
}

// One dataset entry: a frame plus whatever labels were collected for it.
// Frame-level ecologist labels and patch labels may both be present, though
// the shipped fixtures keep the two annotation styles on disjoint frames.
struct FrameRecord {
  std::string frame_id;
  std::string source;
  std::optional<std::int64_t> timestamp_ms;
  std::optional<GeoPoint> geo;
  std::optional<FrameLabel> ecologist_label;
  std::optional<std::vector<PatchClass>> patch_labels;

  bool operator==(const FrameRecord&) const = default;
};

inline json to_json(const FrameRecord& r) {
  json obj;
  obj["frame_id"] = r.frame_id;
  obj["source"] = r.source;
  if (r.timestamp_ms) obj["timestamp_ms"] = *r.timestamp_ms;
  if (r.geo) {
    obj["lat"] = r.geo->lat;
    obj["lon"] = r.geo->lon;
    if (r.geo->depth_m) obj["depth_m"] = *r.geo->depth_m;
  }
  if (r.ecologist_label) obj["ecologist_label"] = to_string(*r.ecologist_label);
  if (r.patch_labels) {
    std::vector<int> codes;
    codes.reserve(r.patch_labels->size());
    for (PatchClass c : *r.patch_labels) codes.push_back(class_code(c));
    obj["patch_labels"] = codes;
  }
  return obj;
}

inline FrameRecord frame_record_from_json(const json& obj) {
  FrameRecord r;
  r.frame_id = obj.at("frame_id").get<std::string>();
  r.source = obj.value("source", std::string{});
  if (obj.contains("timestamp_ms")) r.timestamp_ms = obj.at("timestamp_ms").get<std::int64_t>();
  const bool has_lat = obj.contains("lat"), has_lon = obj.contains("lon");
  if (has_lat != has_lon) {
    throw std::invalid_argument("frame '" + r.frame_id + "': lat and lon must appear together");
  }
  if (has_lat) {
    GeoPoint p;
    p.lat = obj.at("lat").get<double>();
    p.lon = obj.at("lon").get<double>();
    if (obj.contains("depth_m")) p.depth_m = obj.at("depth_m").get<double>();
    validate(p);
    r.geo = p;
  } else if (obj.contains("depth_m")) {
    throw std::invalid_argument("frame '" + r.frame_id + "': depth_m requires lat/lon");
  }
  if (obj.contains("ecologist_label")) {
    r.ecologist_label = frame_label_from_string(obj.at("ecologist_label").get<std::string>());
  }
  if (obj.contains("patch_labels")) {
    std::vector<PatchClass> labels;
    for (const auto& v : obj.at("patch_labels")) {
      labels.push_back(patch_class_from_code(v.get<int>()));
    }
    r.patch_labels = std::move(labels);
  }
  return r;
}

// Validated, ordered collection of frame records sharing one grid geometry.
// Immutable after construction; class counts are recomputed from the records
// on demand so they can never drift from the labels.
class DatasetManifest {
 public:
  DatasetManifest(GridSpec grid, std::vector<FrameRecord> records)
      : grid_(grid), records_(std::move(records)) {
    validate(grid_);
    index_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const FrameRecord& r = records_[i];
      if (r.frame_id.empty()) {
        throw std::invalid_argument("record " + std::to_string(i) + " has empty frame_id");
      }
      if (!index_.emplace(r.frame_id, i).second) {
        throw std::invalid_argument("duplicate frame_id: '" + r.frame_id + "'");
      }
      if (r.patch_labels && static_cast<int>(r.patch_labels->size()) != grid_.patch_count()) {
        throw std::invalid_argument(
            "frame '" + r.frame_id + "': " + std::to_string(r.patch_labels->size()) +
            " patch labels, expected " + std::to_string(grid_.patch_count()) + " for a " +
            std::to_string(grid_.rows) + "x" + std::to_string(grid_.cols) + " grid");
      }
      if (r.geo) validate(*r.geo);
    }
  }

  const GridSpec& grid() const { return grid_; }
  const std::vector<FrameRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  const FrameRecord* find(const std::string& frame_id) const {
    auto it = index_.find(frame_id);
    return it == index_.end() ? nullptr : &records_[it->second];
  }

  std::array<std::uint64_t, 3> patch_class_counts() const {
    std::array<std::uint64_t, 3> counts{};
    for (const FrameRecord& r : records_) {
      if (!r.patch_labels) continue;
      for (PatchClass c : *r.patch_labels) ++counts[class_code(c)];
    }
    return counts;
  }

  std::array<std::uint64_t, 2> frame_label_counts() const {
    std::array<std::uint64_t, 2> counts{};
    for (const FrameRecord& r : records_) {
      if (r.ecologist_label) ++counts[static_cast<int>(*r.ecologist_label)];
    }
    return counts;
  }

 private:
  GridSpec grid_;
  std::vector<FrameRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class LabelLevel { Patch, Frame };

// Label counts at the requested level, indexed by class code. Errors when the
// manifest carries no labels of that kind at all.
inline std::vector<std::uint64_t> class_counts(const DatasetManifest& manifest, LabelLevel level) {
  if (level == LabelLevel::Patch) {
    auto counts = manifest.patch_class_counts();
    if (counts[0] + counts[1] + counts[2] == 0) {
      throw std::runtime_error("no patch labels in manifest");
    }
    return {counts.begin(), counts.end()};
  }
  auto counts = manifest.frame_label_counts();
  if (counts[0] + counts[1] == 0) {
    throw std::runtime_error("no frame labels in manifest");
  }
  return {counts.begin(), counts.end()};
}

inline DatasetManifest load_manifest(const std::filesystem::path& path, GridSpec grid = {}) {
  std::vector<FrameRecord> records;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& obj) {
    try {
      records.push_back(frame_record_from_json(obj));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  try {
    return DatasetManifest(grid, std::move(records));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

inline void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const FrameRecord& r : manifest.records()) {
    out << to_json(r).dump() << '\n';
  }
  atomic_write_text(path, out.str());
}

}  // namespace reefdeploy
