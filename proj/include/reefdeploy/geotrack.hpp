#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "reefdeploy/core.hpp"
#include "reefdeploy/decision.hpp"
#include "reefdeploy/jsonl.hpp"

namespace reefdeploy {

struct TrackEntry {
  GeoPoint point;
  FrameDecision decision;
  std::optional<std::int64_t> timestamp_ms;
  std::optional<FrameLabel> ecologist_label;
  std::optional<bool> agree;
};

struct GeoTrack {
  std::vector<TrackEntry> entries;
};

// Joins decisions to manifest geo positions, in manifest order. Frames in
// the manifest without a decision are skipped; decisions without a manifest
// frame, or frames without coordinates, fail with every offender listed.
inline GeoTrack bind_track(std::span<const FrameDecision> decisions,
                           const DatasetManifest& manifest) {
  std::unordered_map<std::string, const FrameDecision*> by_id;
  for (const FrameDecision& d : decisions) {
    if (!by_id.emplace(d.frame_id, &d).second) {
      throw std::invalid_argument("duplicate decision for frame '" + d.frame_id + "'");
    }
  }
  std::vector<std::string> missing_geo;
  std::vector<std::string> matched;
  GeoTrack track;
  for (const FrameRecord& r : manifest.records()) {
    auto it = by_id.find(r.frame_id);
    if (it == by_id.end()) continue;
    matched.push_back(r.frame_id);
    if (!r.geo) {
      missing_geo.push_back(r.frame_id);
      continue;
    }
    TrackEntry entry;
    entry.point = *r.geo;
    entry.decision = *it->second;
    entry.timestamp_ms = r.timestamp_ms;
    entry.ecologist_label = r.ecologist_label;
    if (r.ecologist_label) entry.agree = (it->second->decision == *r.ecologist_label);
    track.entries.push_back(std::move(entry));
  }
  if (!missing_geo.empty()) {
    std::string msg = "frames without coordinates:";
    for (const std::string& id : missing_geo) msg += " '" + id + "'";
    throw std::runtime_error(msg);
  }
  if (matched.size() != decisions.size()) {
    std::string msg = "decisions for frames not in the manifest:";
    for (const FrameDecision& d : decisions) {
      bool found = false;
      for (const std::string& id : matched) {
        if (id == d.frame_id) {
          found = true;
          break;
        }
      }
      if (!found) msg += " '" + d.frame_id + "'";
    }
    throw std::runtime_error(msg);
  }
  for (std::size_t i = 1; i < track.entries.size(); ++i) {
    if (track.entries[i].timestamp_ms && track.entries[i - 1].timestamp_ms &&
        *track.entries[i].timestamp_ms < *track.entries[i - 1].timestamp_ms) {
      throw std::runtime_error("track timestamps decrease at frame '" +
                               track.entries[i].decision.frame_id + "'");
    }
  }
  return track;
}

namespace detail {

inline double round7(double v) { return std::round(v * 1e7) / 1e7; }

}  // namespace detail

// GeoJSON FeatureCollection of Point features, coordinates as [lon, lat]
// rounded to 7 decimal places.
inline json track_to_geojson(const GeoTrack& track) {
  json features = json::array();
  for (const TrackEntry& e : track.entries) {
    json props{{"frame_id", e.decision.frame_id},
               {"decision", to_string(e.decision.decision)},
               {"score", e.decision.score},
               {"alpha", e.decision.alpha},
               {"rule", to_string(e.decision.rule)}};
    if (e.ecologist_label) props["ecologist_label"] = to_string(*e.ecologist_label);
    if (e.agree) props["agree"] = *e.agree;
    features.push_back(
        json{{"type", "Feature"},
             {"geometry", json{{"type", "Point"},
                               {"coordinates", json::array({detail::round7(e.point.lon),
                                                            detail::round7(e.point.lat)})}}},
             {"properties", std::move(props)}});
  }
  return json{{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

inline void export_geojson(const GeoTrack& track, const std::filesystem::path& path) {
  atomic_write_text(path, track_to_geojson(track).dump(2) + "\n");
}

// Flat CSV mirror of the same track; empty cells where a frame has no
// ecologist label.
inline std::string track_to_csv(const GeoTrack& track) {
  std::ostringstream os;
  os << "frame_id,lat,lon,decision,score,ecologist_label,agree\n";
  char coord[32];
  for (const TrackEntry& e : track.entries) {
    os << e.decision.frame_id << ',';
    std::snprintf(coord, sizeof(coord), "%.7f", e.point.lat);
    os << coord << ',';
    std::snprintf(coord, sizeof(coord), "%.7f", e.point.lon);
    os << coord << ',';
    os << to_string(e.decision.decision) << ',' << json(e.decision.score).dump() << ',';
    if (e.ecologist_label) os << to_string(*e.ecologist_label);
    os << ',';
    if (e.agree) os << (*e.agree ? "true" : "false");
    os << '\n';
  }
  return os.str();
}

inline void export_csv(const GeoTrack& track, const std::filesystem::path& path) {
  atomic_write_text(path, track_to_csv(track));
}

}  // namespace reefdeploy
