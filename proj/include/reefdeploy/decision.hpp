#pragma once

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "reefdeploy/classify.hpp"
#include "reefdeploy/core.hpp"
#include "reefdeploy/jsonl.hpp"
#include "reefdeploy/mlp.hpp"

namespace reefdeploy {

enum class DecisionRule {
  ThresholdingWithPatches,
  SpatialPatchAggregation,
  WholeImage,
};

inline std::string to_string(DecisionRule rule) {
  switch (rule) {
    case DecisionRule::ThresholdingWithPatches: return "thresholding_with_patches";
    case DecisionRule::SpatialPatchAggregation: return "spatial_patch_aggregation";
    case DecisionRule::WholeImage: return "whole_image";
  }
  throw std::invalid_argument("unknown decision rule");
}

inline DecisionRule decision_rule_from_string(const std::string& s) {
  if (s == "thresholding_with_patches") return DecisionRule::ThresholdingWithPatches;
  if (s == "spatial_patch_aggregation") return DecisionRule::SpatialPatchAggregation;
  if (s == "whole_image") return DecisionRule::WholeImage;
  throw std::invalid_argument("unknown decision rule '" + s + "'");
}

// Denominator convention of the thresholding score. DeployVsOthers is the
// operational default: n_deploy / (n_nodeploy + n_coral), saturating to 1
// when no other patches exist. DeployVsTotal divides by the patch count.
enum class RatioConvention {
  DeployVsOthers,
  DeployVsTotal,
};

inline std::string to_string(RatioConvention convention) {
  switch (convention) {
    case RatioConvention::DeployVsOthers: return "deploy_vs_others";
    case RatioConvention::DeployVsTotal: return "deploy_vs_total";
  }
  throw std::invalid_argument("unknown ratio convention");
}

inline RatioConvention ratio_convention_from_string(const std::string& s) {
  if (s == "deploy_vs_others") return RatioConvention::DeployVsOthers;
  if (s == "deploy_vs_total") return RatioConvention::DeployVsTotal;
  throw std::invalid_argument("unknown ratio convention '" + s + "'");
}

struct DecisionConfig {
  DecisionRule rule = DecisionRule::ThresholdingWithPatches;
  double alpha = 0.4;
  RatioConvention convention = RatioConvention::DeployVsOthers;
  // Required for SpatialPatchAggregation, ignored otherwise.
  std::shared_ptr<const MlpModel> aggregation_model;
};

struct FrameDecision {
  std::string frame_id;
  FrameLabel decision = FrameLabel::NoDeploy;
  double score = 0.0;
  double alpha = 0.0;
  DecisionRule rule = DecisionRule::ThresholdingWithPatches;
};

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must be in [0,1], got " + std::to_string(alpha));
  }
}

}  // namespace detail

// Deploy-patch ratio rule: dispense iff the ratio of Deploy-classified
// patches reaches alpha. A frame of only Deploy patches saturates the
// DeployVsOthers score to 1 and always dispenses.
inline FrameDecision threshold_decision(const GridClassification& gc, double alpha,
                                        RatioConvention convention = RatioConvention::DeployVsOthers) {
  detail::check_alpha(alpha);
  if (gc.predicted.empty()) {
    throw std::invalid_argument("frame '" + gc.frame_id + "': empty patch grid");
  }
  std::size_t n_deploy = 0;
  for (PatchClass c : gc.predicted) {
    if (c == PatchClass::Deploy) ++n_deploy;
  }
  const std::size_t n_other = gc.predicted.size() - n_deploy;
  double score = 0.0;
  bool deploy = false;
  if (convention == RatioConvention::DeployVsOthers) {
    if (n_other == 0) {
      score = 1.0;
      deploy = true;
    } else {
      score = static_cast<double>(n_deploy) / static_cast<double>(n_other);
      deploy = score >= alpha;
    }
  } else {
    score = static_cast<double>(n_deploy) / static_cast<double>(gc.predicted.size());
    deploy = score >= alpha;
  }
  return FrameDecision{gc.frame_id, deploy ? FrameLabel::Deploy : FrameLabel::NoDeploy, score,
                       alpha, DecisionRule::ThresholdingWithPatches};
}

// Learned spatial rule: the grid's distributions, concatenated row-major,
// drive a small sigmoid-output network; dispense iff its score reaches alpha.
inline FrameDecision aggregation_decision(const GridClassification& gc, const MlpModel& model,
                                          double alpha) {
  detail::check_alpha(alpha);
  if (model.output_activation() != OutputActivation::Sigmoid || model.output_dim() != 1) {
    throw std::invalid_argument("aggregation model must have a single sigmoid output");
  }
  const std::size_t want = gc.distributions.size() * kNumPatchClasses;
  if (model.input_dim() != want) {
    throw std::invalid_argument("frame '" + gc.frame_id + "': aggregation model expects " +
                                std::to_string(model.input_dim()) + " inputs, grid provides " +
                                std::to_string(want));
  }
  std::vector<double> input;
  input.reserve(want);
  for (const ClassDistribution& d : gc.distributions) {
    for (int c = 0; c < kNumPatchClasses; ++c) input.push_back(d[c]);
  }
  const double s = model.forward(input)[0];
  return FrameDecision{gc.frame_id, s >= alpha ? FrameLabel::Deploy : FrameLabel::NoDeploy, s,
                       alpha, DecisionRule::SpatialPatchAggregation};
}

// Whole-image rule: a frame-level deploy probability against a fixed 0.5.
inline FrameDecision whole_image_decision(const FrameClassification& fc) {
  if (!(fc.deploy_prob >= 0.0 && fc.deploy_prob <= 1.0)) {
    throw std::invalid_argument("frame '" + fc.frame_id + "': deploy probability " +
                                std::to_string(fc.deploy_prob) + " outside [0,1]");
  }
  return FrameDecision{fc.frame_id,
                       fc.deploy_prob >= 0.5 ? FrameLabel::Deploy : FrameLabel::NoDeploy,
                       fc.deploy_prob, 0.5, DecisionRule::WholeImage};
}

inline FrameDecision decide(const GridClassification& gc, const DecisionConfig& config) {
  switch (config.rule) {
    case DecisionRule::ThresholdingWithPatches:
      return threshold_decision(gc, config.alpha, config.convention);
    case DecisionRule::SpatialPatchAggregation:
      if (!config.aggregation_model) {
        throw std::invalid_argument("spatial_patch_aggregation requires an aggregation model");
      }
      return aggregation_decision(gc, *config.aggregation_model, config.alpha);
    case DecisionRule::WholeImage:
      throw std::invalid_argument("whole_image rule needs a frame classification, not a patch grid");
  }
  throw std::invalid_argument("unknown decision rule");
}

inline FrameDecision decide(const FrameClassification& fc, const DecisionConfig& config) {
  if (config.rule != DecisionRule::WholeImage) {
    throw std::invalid_argument("rule '" + to_string(config.rule) +
                                "' needs a patch grid, not a frame classification");
  }
  return whole_image_decision(fc);
}

inline std::vector<FrameDecision> decide_batch(std::span<const GridClassification> grids,
                                               const DecisionConfig& config) {
  std::vector<FrameDecision> out;
  out.reserve(grids.size());
  const GridSpec* first = nullptr;
  for (const GridClassification& gc : grids) {
    if (!first) {
      first = &gc.grid;
    } else if (gc.grid.rows != first->rows || gc.grid.cols != first->cols) {
      throw std::invalid_argument("frame '" + gc.frame_id + "': grid " + std::to_string(gc.grid.rows) +
                                  "x" + std::to_string(gc.grid.cols) + " differs from batch grid " +
                                  std::to_string(first->rows) + "x" + std::to_string(first->cols));
    }
    try {
      out.push_back(decide(gc, config));
    } catch (const std::exception& e) {
      throw std::runtime_error("frame '" + gc.frame_id + "': " + e.what());
    }
  }
  return out;
}

// One dispensing-log line. Geo and timestamp ride along when the source
// frame carries them.
inline json decision_to_json(const FrameDecision& d, const FrameRecord* record = nullptr) {
  json obj{{"frame_id", d.frame_id},
           {"decision", to_string(d.decision)},
           {"score", d.score},
           {"alpha", d.alpha},
           {"rule", to_string(d.rule)}};
  if (record != nullptr) {
    if (record->geo) {
      obj["lat"] = record->geo->lat;
      obj["lon"] = record->geo->lon;
    }
    if (record->timestamp_ms) obj["timestamp_ms"] = *record->timestamp_ms;
  }
  return obj;
}

inline FrameDecision decision_from_json(const json& obj) {
  FrameDecision d;
  d.frame_id = obj.at("frame_id").get<std::string>();
  d.decision = frame_label_from_string(obj.at("decision").get<std::string>());
  d.score = obj.at("score").get<double>();
  d.alpha = obj.at("alpha").get<double>();
  d.rule = decision_rule_from_string(obj.at("rule").get<std::string>());
  return d;
}

inline std::vector<FrameDecision> load_decisions(const std::filesystem::path& path) {
  std::vector<FrameDecision> out;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& obj) {
    try {
      out.push_back(decision_from_json(obj));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace reefdeploy
