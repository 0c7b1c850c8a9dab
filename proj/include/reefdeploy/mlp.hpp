#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reefdeploy/core.hpp"
#include "reefdeploy/rng.hpp"

namespace reefdeploy {

enum class OutputActivation { Softmax, Sigmoid };

inline std::string to_string(OutputActivation a) {
  return a == OutputActivation::Softmax ? "softmax" : "sigmoid";
}

inline OutputActivation output_activation_from_string(const std::string& s) {
  if (s == "softmax") return OutputActivation::Softmax;
  if (s == "sigmoid") return OutputActivation::Sigmoid;
  throw std::invalid_argument("unknown output activation: '" + s + "'");
}

inline double sigmoid(double z) {
  // Guarded on both tails so large |z| cannot overflow exp.
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct DenseLayer {
  std::vector<std::vector<double>> w;  // [out][in]
  std::vector<double> b;               // [out]
};

// Small dense network: hidden layers are rectified-linear, the output layer
// is either a C-way softmax head or a single sigmoid unit. Weights initialize
// uniformly in +/- sqrt(6 / (fan_in + fan_out)) from the seeded generator,
// biases at zero, so construction is fully deterministic given the seed.
class MlpModel {
 public:
  MlpModel(std::vector<int> layer_dims, OutputActivation output, int seed)
      : dims_(std::move(layer_dims)), output_(output), seed_(seed) {
    check_dims();
    SeededRng rng(static_cast<std::uint64_t>(seed));
    layers_.reserve(dims_.size() - 1);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int fan_in = dims_[l];
      const int fan_out = dims_[l + 1];
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      DenseLayer layer;
      layer.w.assign(fan_out, std::vector<double>(fan_in));
      layer.b.assign(fan_out, 0.0);
      for (auto& row : layer.w) {
        for (double& v : row) v = rng.uniform(-bound, bound);
      }
      layers_.push_back(std::move(layer));
    }
  }

  MlpModel(std::vector<int> layer_dims, OutputActivation output, std::vector<DenseLayer> layers,
           int seed = 0)
      : dims_(std::move(layer_dims)), output_(output), layers_(std::move(layers)), seed_(seed) {
    check_dims();
    if (layers_.size() != dims_.size() - 1) {
      throw std::invalid_argument("layer count does not match architecture");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (static_cast<int>(layer.w.size()) != dims_[l + 1] ||
          static_cast<int>(layer.b.size()) != dims_[l + 1]) {
        throw std::invalid_argument("layer " + std::to_string(l) + " output dimension mismatch: " +
                                    std::to_string(layer.w.size()) + " vs architecture " +
                                    std::to_string(dims_[l + 1]));
      }
      for (const auto& row : layer.w) {
        if (static_cast<int>(row.size()) != dims_[l]) {
          throw std::invalid_argument("layer " + std::to_string(l) + " input dimension mismatch: " +
                                      std::to_string(row.size()) + " vs architecture " +
                                      std::to_string(dims_[l]));
        }
        for (double v : row) {
          if (!std::isfinite(v)) throw std::invalid_argument("non-finite weight in layer " + std::to_string(l));
        }
      }
      for (double v : layer.b) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite bias in layer " + std::to_string(l));
      }
    }
  }

  static MlpModel zeros(std::vector<int> layer_dims, OutputActivation output) {
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
      DenseLayer layer;
      layer.w.assign(layer_dims[l + 1], std::vector<double>(layer_dims[l], 0.0));
      layer.b.assign(layer_dims[l + 1], 0.0);
      layers.push_back(std::move(layer));
    }
    return MlpModel(std::move(layer_dims), output, std::move(layers));
  }

  const std::vector<int>& layer_dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  OutputActivation output_activation() const { return output_; }
  int seed() const { return seed_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  const json& train_meta() const { return train_meta_; }
  void set_train_meta(json meta) { train_meta_ = std::move(meta); }

  // Pre-activation output of the final layer.
  std::vector<double> logits(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != input_dim()) {
      throw std::invalid_argument("feature dimensionality " + std::to_string(x.size()) +
                                  " does not match model input " + std::to_string(input_dim()));
    }
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      std::vector<double> z = affine(layers_[l], a);
      if (l + 1 < layers_.size()) {
        for (double& v : z) v = v > 0.0 ? v : 0.0;  // ReLU
      }
      a = std::move(z);
    }
    return a;
  }

  // Post-activation output: softmax probabilities or sigmoid values.
  std::vector<double> forward(std::span<const double> x) const {
    std::vector<double> z = logits(x);
    if (output_ == OutputActivation::Softmax) return softmax(z);
    for (double& v : z) v = sigmoid(v);
    return z;
  }

 private:
  void check_dims() const {
    if (dims_.size() < 2) throw std::invalid_argument("architecture needs at least input and output dims");
    for (int d : dims_) {
      if (d <= 0) throw std::invalid_argument("layer dimension must be positive");
    }
    if (output_ == OutputActivation::Sigmoid && dims_.back() != 1) {
      throw std::invalid_argument("sigmoid output requires a single output unit");
    }
  }

  static std::vector<double> affine(const DenseLayer& layer, const std::vector<double>& a) {
    std::vector<double> z(layer.b);
    for (std::size_t o = 0; o < layer.w.size(); ++o) {
      const auto& row = layer.w[o];
      double acc = z[o];
      for (std::size_t i = 0; i < row.size(); ++i) acc += row[i] * a[i];
      z[o] = acc;
    }
    return z;
  }

  std::vector<int> dims_;
  OutputActivation output_;
  std::vector<DenseLayer> layers_;
  int seed_ = 0;
  json train_meta_;
};

inline constexpr int kCheckpointSchema = 1;

inline void save_model(const MlpModel& model, const std::filesystem::path& path) {
  json obj;
  obj["schema"] = kCheckpointSchema;
  obj["arch"] = model.layer_dims();
  obj["output"] = to_string(model.output_activation());
  obj["seed"] = model.seed();
  json layers = json::array();
  for (const DenseLayer& layer : model.layers()) {
    layers.push_back(json{{"w", layer.w}, {"b", layer.b}});
  }
  obj["layers"] = std::move(layers);
  if (!model.train_meta().is_null()) obj["train_config"] = model.train_meta();
  atomic_write_text(path, obj.dump(2) + "\n");
}

inline MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  json obj = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded() || !obj.is_object()) {
    throw std::runtime_error("checkpoint schema error: " + path.string() + " is not a JSON object");
  }
  if (!obj.contains("schema") || obj["schema"].get<int>() != kCheckpointSchema) {
    throw std::runtime_error("checkpoint schema version mismatch in " + path.string());
  }
  try {
    std::vector<int> arch = obj.at("arch").get<std::vector<int>>();
    OutputActivation output = output_activation_from_string(obj.at("output").get<std::string>());
    std::vector<DenseLayer> layers;
    for (const auto& entry : obj.at("layers")) {
      DenseLayer layer;
      layer.w = entry.at("w").get<std::vector<std::vector<double>>>();
      layer.b = entry.at("b").get<std::vector<double>>();
      layers.push_back(std::move(layer));
    }
    MlpModel model(std::move(arch), output, std::move(layers), obj.value("seed", 0));
    if (obj.contains("train_config")) model.set_train_meta(obj["train_config"]);
    return model;
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint schema error in " + path.string() + ": " + e.what());
  }
}

}  // namespace reefdeploy
