#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "reefdeploy/core.hpp"
#include "reefdeploy/jsonl.hpp"
#include "reefdeploy/mlp.hpp"
#include "reefdeploy/rng.hpp"

namespace reefdeploy {

// Externally produced embedding or feature vector for one patch (or a whole
// frame when patch_index is absent).
struct PatchFeatures {
  std::string frame_id;
  int patch_index = 0;
  std::vector<double> values;
};

// Full patch-grid classification of one frame: a 3-class distribution per
// patch in row-major order plus the argmax class of each.
struct GridClassification {
  std::string frame_id;
  GridSpec grid;
  std::vector<ClassDistribution> distributions;
  std::vector<PatchClass> predicted;

  GridClassification(std::string id, GridSpec g, std::vector<ClassDistribution> dists)
      : frame_id(std::move(id)), grid(g), distributions(std::move(dists)) {
    validate(grid);
    if (static_cast<int>(distributions.size()) != grid.patch_count()) {
      throw std::invalid_argument("frame '" + frame_id + "': " +
                                  std::to_string(distributions.size()) +
                                  " patch distributions, expected " +
                                  std::to_string(grid.patch_count()));
    }
    predicted.reserve(distributions.size());
    for (const ClassDistribution& d : distributions) predicted.push_back(d.argmax());
  }
};

struct FrameClassification {
  std::string frame_id;
  double deploy_prob = 0.0;  // P(Deploy); P(NoDeploy) = 1 - deploy_prob
};

// Uniform contract over interchangeable classifier backends. Instances are
// read-only after construction and safe to share across concurrent readers.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;

  virtual std::string name() const = 0;
  virtual bool supports_patches() const { return false; }
  virtual bool supports_frames() const { return false; }

  // 3-class distribution for one patch of a frame.
  virtual ClassDistribution classify_patch(const FrameRecord& frame, int patch_index) const {
    (void)frame;
    (void)patch_index;
    throw std::logic_error("backend '" + name() + "' does not support patch classification");
  }

  // All patch distributions of a frame in row-major order. The default walks
  // classify_patch; backends with per-frame cost structure may override.
  virtual std::vector<ClassDistribution> classify_grid(const FrameRecord& frame,
                                                       const GridSpec& grid) const {
    std::vector<ClassDistribution> out;
    out.reserve(grid.patch_count());
    for (int i = 0; i < grid.patch_count(); ++i) out.push_back(classify_patch(frame, i));
    return out;
  }

  // Probability that the whole frame is a Deploy frame.
  virtual double frame_deploy_prob(const FrameRecord& frame) const {
    (void)frame;
    throw std::logic_error("backend '" + name() + "' does not support whole-frame classification");
  }
};

inline GridClassification classify_patches(const ClassifierBackend& backend,
                                           const FrameRecord& frame, const GridSpec& grid) {
  if (!backend.supports_patches()) {
    throw std::logic_error("backend '" + backend.name() + "' does not support patch classification");
  }
  return GridClassification(frame.frame_id, grid, backend.classify_grid(frame, grid));
}

inline FrameClassification classify_frame(const ClassifierBackend& backend,
                                          const FrameRecord& frame) {
  if (!backend.supports_frames()) {
    throw std::logic_error("backend '" + backend.name() + "' does not support whole-frame classification");
  }
  const double p = backend.frame_deploy_prob(frame);
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::runtime_error("backend '" + backend.name() + "' returned deploy probability " +
                             std::to_string(p) + " outside [0,1]");
  }
  return FrameClassification{frame.frame_id, p};
}

// 3-class head output for one feature vector: softmax over the final-layer
// logits, computed with max subtraction.
inline ClassDistribution softmax_forward(const MlpModel& model, std::span<const double> features) {
  if (model.output_dim() != kNumPatchClasses) {
    throw std::invalid_argument("softmax_forward: model has " + std::to_string(model.output_dim()) +
                                " outputs, expected " + std::to_string(kNumPatchClasses));
  }
  return ClassDistribution::from_logits(model.logits(features));
}

// Deterministic stand-in backend for pipeline and throughput tests. Each
// (seed, frame_id, patch_index) triple hashes to a fixed point on the
// 3-class simplex (normalized exponential draws, i.e. Dirichlet(1,1,1)).
class MockBackend : public ClassifierBackend {
 public:
  explicit MockBackend(std::uint64_t seed) : seed_(seed) {}

  std::string name() const override { return "mock"; }
  bool supports_patches() const override { return true; }
  bool supports_frames() const override { return true; }

  ClassDistribution classify_patch(const FrameRecord& frame, int patch_index) const override {
    SeededRng rng(patch_seed(frame.frame_id, patch_index));
    std::array<double, 3> e{};
    double sum = 0.0;
    for (double& v : e) {
      v = -std::log1p(-rng.uniform());
      sum += v;
    }
    for (double& v : e) v /= sum;
    return ClassDistribution(e);
  }

  double frame_deploy_prob(const FrameRecord& frame) const override {
    SeededRng rng(patch_seed(frame.frame_id, -1));
    return rng.uniform();
  }

 private:
  std::uint64_t patch_seed(const std::string& frame_id, int patch_index) const {
    const std::uint64_t h = fnv1a64(frame_id.data(), frame_id.size(), splitmix64(seed_));
    return splitmix64(h ^ (static_cast<std::uint64_t>(patch_index + 1) * 0x9e3779b97f4a7c15ull));
  }

  std::uint64_t seed_;
};

// Pure lookup over probabilities exported by an external model. Patch-mode
// lines are {"frame_id", "patch_index", "probs": [3 floats]}; frame-mode
// lines are {"frame_id", "deploy_prob": float}. A file may mix both.
class PredictionsFileBackend : public ClassifierBackend {
 public:
  explicit PredictionsFileBackend(const std::filesystem::path& path) {
    for_each_jsonl_line(path, [&](std::size_t line_no, const json& obj) {
      const std::string at = path.string() + ":" + std::to_string(line_no);
      try {
        const std::string frame_id = obj.at("frame_id").get<std::string>();
        if (seen_.insert(frame_id).second) order_.push_back(frame_id);
        if (obj.contains("probs")) {
          const int patch = obj.at("patch_index").get<int>();
          const auto probs = obj.at("probs").get<std::vector<double>>();
          if (probs.size() != 3) {
            throw std::invalid_argument("expected 3 probabilities, got " + std::to_string(probs.size()));
          }
          ClassDistribution dist({probs[0], probs[1], probs[2]});
          if (!patches_[frame_id].emplace(patch, dist).second) {
            throw std::invalid_argument("duplicate prediction for frame '" + frame_id +
                                        "' patch " + std::to_string(patch));
          }
        } else if (obj.contains("deploy_prob")) {
          const double p = obj.at("deploy_prob").get<double>();
          if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("deploy_prob outside [0,1]: " + std::to_string(p));
          }
          if (!frames_.emplace(frame_id, p).second) {
            throw std::invalid_argument("duplicate frame prediction for '" + frame_id + "'");
          }
        } else {
          throw std::invalid_argument("line has neither 'probs' nor 'deploy_prob'");
        }
      } catch (const json::exception& e) {
        throw std::runtime_error(at + ": " + e.what());
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(at + ": " + e.what());
      }
    });
  }

  std::string name() const override { return "predictions_file"; }
  bool supports_patches() const override { return !patches_.empty(); }
  bool supports_frames() const override { return !frames_.empty(); }

  ClassDistribution classify_patch(const FrameRecord& frame, int patch_index) const override {
    auto fit = patches_.find(frame.frame_id);
    if (fit != patches_.end()) {
      auto pit = fit->second.find(patch_index);
      if (pit != fit->second.end()) return pit->second;
    }
    throw std::runtime_error("predictions file has no entry for frame '" + frame.frame_id +
                             "' patch " + std::to_string(patch_index));
  }

  double frame_deploy_prob(const FrameRecord& frame) const override {
    auto it = frames_.find(frame.frame_id);
    if (it == frames_.end()) {
      throw std::runtime_error("predictions file has no entry for frame '" + frame.frame_id + "'");
    }
    return it->second;
  }

  // Frames with at least one patch entry, in file order of first appearance.
  std::vector<std::string> patch_frame_ids() const {
    std::vector<std::string> ids;
    ids.reserve(order_.size());
    for (const std::string& id : order_) {
      if (patches_.count(id)) ids.push_back(id);
    }
    return ids;
  }

  std::vector<std::string> frame_mode_ids() const {
    std::vector<std::string> ids;
    for (const std::string& id : order_) {
      if (frames_.count(id)) ids.push_back(id);
    }
    return ids;
  }

 private:
  std::unordered_map<std::string, std::unordered_map<int, ClassDistribution>> patches_;
  std::unordered_map<std::string, double> frames_;
  std::unordered_set<std::string> seen_;
  std::vector<std::string> order_;
};

// Feature vectors keyed by (frame_id, patch_index) or by frame_id alone.
// Dimensionality must be constant across the file.
class FeatureStore {
 public:
  explicit FeatureStore(const std::filesystem::path& path) {
    for_each_jsonl_line(path, [&](std::size_t line_no, const json& obj) {
      const std::string at = path.string() + ":" + std::to_string(line_no);
      try {
        const std::string frame_id = obj.at("frame_id").get<std::string>();
        auto values = obj.at("values").get<std::vector<double>>();
        if (values.empty()) throw std::invalid_argument("empty feature vector");
        for (double v : values) {
          if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
        }
        if (dim_ == 0) {
          dim_ = values.size();
        } else if (values.size() != dim_) {
          throw std::invalid_argument("feature dimensionality " + std::to_string(values.size()) +
                                      " differs from earlier " + std::to_string(dim_));
        }
        if (obj.contains("patch_index")) {
          const int patch = obj.at("patch_index").get<int>();
          if (!patch_features_[frame_id].emplace(patch, std::move(values)).second) {
            throw std::invalid_argument("duplicate features for frame '" + frame_id + "' patch " +
                                        std::to_string(patch));
          }
        } else if (!frame_features_.emplace(frame_id, std::move(values)).second) {
          throw std::invalid_argument("duplicate frame features for '" + frame_id + "'");
        }
        if (seen_.insert(frame_id).second) order_.push_back(frame_id);
      } catch (const json::exception& e) {
        throw std::runtime_error(at + ": " + e.what());
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(at + ": " + e.what());
      }
    });
  }

  std::size_t dimensionality() const { return dim_; }
  const std::vector<std::string>& frame_order() const { return order_; }

  const std::vector<double>* patch_features(const std::string& frame_id, int patch_index) const {
    auto fit = patch_features_.find(frame_id);
    if (fit == patch_features_.end()) return nullptr;
    auto pit = fit->second.find(patch_index);
    return pit == fit->second.end() ? nullptr : &pit->second;
  }

  const std::vector<double>* frame_features(const std::string& frame_id) const {
    auto it = frame_features_.find(frame_id);
    return it == frame_features_.end() ? nullptr : &it->second;
  }

  // Flat list of all patch features, frame order then patch order.
  std::vector<PatchFeatures> all_patch_features() const {
    std::vector<PatchFeatures> out;
    for (const std::string& id : order_) {
      auto fit = patch_features_.find(id);
      if (fit == patch_features_.end()) continue;
      std::map<int, const std::vector<double>*> sorted;
      for (const auto& [patch, values] : fit->second) sorted[patch] = &values;
      for (const auto& [patch, values] : sorted) out.push_back(PatchFeatures{id, patch, *values});
    }
    return out;
  }

 private:
  std::unordered_map<std::string, std::unordered_map<int, std::vector<double>>> patch_features_;
  std::unordered_map<std::string, std::vector<double>> frame_features_;
  std::unordered_set<std::string> seen_;
  std::vector<std::string> order_;
  std::size_t dim_ = 0;
};

// In-process head over externally extracted feature vectors: a softmax MLP
// for 3-class patches, or a sigmoid (or 2-class softmax) head for
// whole-frame deploy probability.
class NativeBackend : public ClassifierBackend {
 public:
  NativeBackend(std::shared_ptr<const MlpModel> model, std::shared_ptr<const FeatureStore> features)
      : model_(std::move(model)), features_(std::move(features)) {
    if (!model_ || !features_) throw std::invalid_argument("NativeBackend: null model or features");
  }

  std::string name() const override { return "native"; }

  bool supports_patches() const override {
    return model_->output_activation() == OutputActivation::Softmax &&
           model_->output_dim() == kNumPatchClasses;
  }

  bool supports_frames() const override {
    return model_->output_activation() == OutputActivation::Sigmoid ||
           (model_->output_activation() == OutputActivation::Softmax && model_->output_dim() == 2);
  }

  ClassDistribution classify_patch(const FrameRecord& frame, int patch_index) const override {
    const std::vector<double>* values = features_->patch_features(frame.frame_id, patch_index);
    if (!values) {
      throw std::runtime_error("no features for frame '" + frame.frame_id + "' patch " +
                               std::to_string(patch_index));
    }
    return softmax_forward(*model_, *values);
  }

  double frame_deploy_prob(const FrameRecord& frame) const override {
    const std::vector<double>* values = features_->frame_features(frame.frame_id);
    if (!values) {
      throw std::runtime_error("no frame features for '" + frame.frame_id + "'");
    }
    const std::vector<double> out = model_->forward(*values);
    return model_->output_activation() == OutputActivation::Sigmoid ? out[0] : out[1];
  }

 private:
  std::shared_ptr<const MlpModel> model_;
  std::shared_ptr<const FeatureStore> features_;
};

}  // namespace reefdeploy
