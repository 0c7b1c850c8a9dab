#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reefdeploy/mlp.hpp"
#include "reefdeploy/rng.hpp"

namespace reefdeploy {

// Inverse-frequency class weights w_i = N / N_i. Rarer classes get strictly
// larger weights; w_i * N_i = N holds for every class.
struct ClassWeights {
  std::vector<double> weights;

  static ClassWeights uniform(std::size_t num_classes) {
    return ClassWeights{std::vector<double>(num_classes, 1.0)};
  }
};

inline ClassWeights compute_class_weights(std::span<const std::uint64_t> counts) {
  if (counts.empty()) throw std::invalid_argument("compute_class_weights: empty counts");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) {
      throw std::invalid_argument("class " + std::to_string(i) + " has zero samples; cannot weight a class absent from training data");
    }
    total += counts[i];
  }
  ClassWeights cw;
  cw.weights.reserve(counts.size());
  for (std::uint64_t c : counts) {
    cw.weights.push_back(static_cast<double>(total) / static_cast<double>(c));
  }
  return cw;
}

struct FocalLossConfig {
  double gamma = 2.0;
  ClassWeights class_weights;
};

namespace detail {

inline void check_focal_config(const FocalLossConfig& config, int max_label) {
  if (!(config.gamma >= 0.0)) throw std::invalid_argument("focal gamma must be >= 0");
  if (max_label >= static_cast<int>(config.class_weights.weights.size())) {
    throw std::invalid_argument("label " + std::to_string(max_label) +
                                " has no class weight (got " +
                                std::to_string(config.class_weights.weights.size()) + " weights)");
  }
  for (double w : config.class_weights.weights) {
    if (!(w > 0.0)) throw std::invalid_argument("class weights must be positive");
  }
}

// d(loss_i)/dq * q for one sample, where q is the true-class probability and
// loss_i = w * (1-q)^gamma * (-ln q). Multiplying through by q removes every
// division, so the expression stays finite as q -> 0 (limit -w) and the
// q == 1 case is the exact zero of the loss minimum.
inline double focal_coeff(double q, double w, double gamma) {
  if (gamma == 0.0) return -w;
  const double om = 1.0 - q;
  if (om <= 0.0) return 0.0;
  const double q_ln_q = q > 0.0 ? q * std::log(q) : 0.0;
  return w * (gamma * std::pow(om, gamma - 1.0) * q_ln_q - std::pow(om, gamma));
}

}  // namespace detail

// Class-weighted focal loss over already-extracted true-class probabilities:
//   L = -(1/N) * sum_i w_{y_i} * (1 - p_i)^gamma * ln(p_i)
// An exact-zero probability is a caller error (the loss would be -inf) and is
// reported as such rather than returned as a non-finite value.
inline double focal_loss(std::span<const double> probs_true, std::span<const int> labels,
                         const FocalLossConfig& config) {
  if (probs_true.empty()) throw std::invalid_argument("focal_loss: empty sample set");
  if (probs_true.size() != labels.size()) {
    throw std::invalid_argument("focal_loss: " + std::to_string(probs_true.size()) +
                                " probabilities vs " + std::to_string(labels.size()) + " labels");
  }
  int max_label = 0;
  for (int y : labels) {
    if (y < 0) throw std::invalid_argument("focal_loss: negative label");
    max_label = std::max(max_label, y);
  }
  detail::check_focal_config(config, max_label);

  double sum = 0.0;
  for (std::size_t i = 0; i < probs_true.size(); ++i) {
    const double p = probs_true[i];
    if (p == 0.0) {
      throw std::domain_error("focal_loss: sample " + std::to_string(i) +
                              " has zero true-class probability (loss is -inf)");
    }
    if (!(p > 0.0 && p <= 1.0)) {
      throw std::invalid_argument("focal_loss: probability outside (0,1]: " + std::to_string(p));
    }
    const double w = config.class_weights.weights[labels[i]];
    sum += w * std::pow(1.0 - p, config.gamma) * std::log(p);
  }
  return -sum / static_cast<double>(probs_true.size());
}

// Exact gradient of focal_loss(softmax(logits)) with respect to the logits.
// Rows follow the input samples; the 1/N normalization of the loss is
// included. floor_hits, when given, counts samples whose softmax true-class
// probability underflowed to zero.
inline std::vector<std::vector<double>> focal_loss_gradient(
    const std::vector<std::vector<double>>& logits, std::span<const int> labels,
    const FocalLossConfig& config, std::size_t* floor_hits = nullptr) {
  if (logits.empty()) throw std::invalid_argument("focal_loss_gradient: empty sample set");
  if (logits.size() != labels.size()) {
    throw std::invalid_argument("focal_loss_gradient: sample/label count mismatch");
  }
  int max_label = 0;
  for (int y : labels) {
    if (y < 0) throw std::invalid_argument("focal_loss_gradient: negative label");
    max_label = std::max(max_label, y);
  }
  detail::check_focal_config(config, max_label);

  const double inv_n = 1.0 / static_cast<double>(logits.size());
  std::vector<std::vector<double>> grad(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& z = logits[i];
    if (labels[i] >= static_cast<int>(z.size())) {
      throw std::invalid_argument("focal_loss_gradient: label " + std::to_string(labels[i]) +
                                  " out of range for " + std::to_string(z.size()) + " logits");
    }
    const std::vector<double> p = softmax(z);
    const double q = p[labels[i]];
    if (q <= 0.0 && floor_hits) ++(*floor_hits);
    const double coeff = detail::focal_coeff(q, config.class_weights.weights[labels[i]], config.gamma);
    auto& row = grad[i];
    row.resize(z.size());
    for (std::size_t c = 0; c < z.size(); ++c) {
      const double indicator = (static_cast<int>(c) == labels[i]) ? 1.0 : 0.0;
      row[c] = coeff * (indicator - p[c]) * inv_n;
    }
  }
  return grad;
}

// Draws epoch_len sample indices with replacement, each sample weighted by
// the inverse frequency of its class, so every class is expected to appear
// equally often per epoch. Fully deterministic given the seed.
inline std::vector<std::size_t> oversample_schedule(std::span<const int> labels,
                                                    std::uint64_t seed, std::size_t epoch_len) {
  if (labels.empty()) throw std::invalid_argument("oversample_schedule: empty label set");
  int num_classes = 0;
  for (int y : labels) {
    if (y < 0) throw std::invalid_argument("oversample_schedule: negative label");
    num_classes = std::max(num_classes, y + 1);
  }
  std::vector<std::uint64_t> counts(num_classes, 0);
  for (int y : labels) ++counts[y];

  const double total = static_cast<double>(labels.size());
  std::vector<double> cumulative(labels.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    acc += total / static_cast<double>(counts[labels[i]]);  // w_{y_i} = N / N_{y_i}
    cumulative[i] = acc;
  }

  SeededRng rng(seed);
  std::vector<std::size_t> schedule(epoch_len);
  for (std::size_t k = 0; k < epoch_len; ++k) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    schedule[k] = std::min<std::size_t>(it - cumulative.begin(), labels.size() - 1);
  }
  return schedule;
}

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int seed = 0;
  bool oversample = false;
  FocalLossConfig focal;
};

struct TrainingSet {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> epoch_loss;
  std::size_t probability_floor_hits = 0;
};

namespace detail {

// True-class probability floor used inside the training loss so a saturated
// wrong prediction yields a large finite loss instead of -inf.
inline constexpr double kProbFloor = 1e-12;

struct ForwardCache {
  std::vector<std::vector<double>> activations;  // activations[0] = input
  std::vector<std::vector<double>> pre_acts;     // z per layer
};

inline ForwardCache forward_cached(const MlpModel& model, std::span<const double> x) {
  ForwardCache cache;
  cache.activations.emplace_back(x.begin(), x.end());
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    std::vector<double> z(layer.b);
    const auto& a = cache.activations.back();
    for (std::size_t o = 0; o < layer.w.size(); ++o) {
      double accum = z[o];
      const auto& row = layer.w[o];
      for (std::size_t i = 0; i < row.size(); ++i) accum += row[i] * a[i];
      z[o] = accum;
    }
    cache.pre_acts.push_back(z);
    if (l + 1 < layers.size()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

}  // namespace detail

// Mini-batch gradient descent with momentum over the class-weighted focal
// loss. Deterministic given the seed: initialization, the shuffle stream and
// the oversampling schedule all derive from it. Returns the model with a
// per-epoch mean-loss trace. Softmax heads train against integer class
// labels; sigmoid heads treat label 1 as the positive class and use the
// two-class form of the same loss.
inline TrainResult train(const TrainingSet& data, std::vector<int> arch,
                         OutputActivation output, const TrainConfig& config) {
  if (data.features.empty()) throw std::invalid_argument("train: empty training set");
  if (data.features.size() != data.labels.size()) {
    throw std::invalid_argument("train: feature/label count mismatch");
  }
  if (config.epochs < 0 || config.batch_size <= 0) {
    throw std::invalid_argument("train: epochs must be >= 0 and batch_size positive");
  }
  if (!(config.learning_rate >= 0.0)) throw std::invalid_argument("train: negative learning rate");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
    throw std::invalid_argument("train: momentum must lie in [0,1)");
  }

  const int num_classes = output == OutputActivation::Softmax ? arch.back() : 2;
  for (int y : data.labels) {
    if (y < 0 || y >= num_classes) {
      throw std::invalid_argument("train: label " + std::to_string(y) + " out of range for " +
                                  std::to_string(num_classes) + " classes");
    }
  }
  for (const auto& f : data.features) {
    if (static_cast<int>(f.size()) != arch.front()) {
      throw std::invalid_argument("train: feature dimensionality " + std::to_string(f.size()) +
                                  " does not match architecture input " + std::to_string(arch.front()));
    }
  }

  FocalLossConfig focal = config.focal;
  if (focal.class_weights.weights.empty()) {
    focal.class_weights = ClassWeights::uniform(num_classes);
  }
  detail::check_focal_config(focal, num_classes - 1);

  TrainResult result{MlpModel(arch, output, config.seed), {}, 0};
  MlpModel& model = result.model;

  std::vector<DenseLayer> velocity;
  for (const DenseLayer& layer : model.layers()) {
    DenseLayer v;
    v.w.assign(layer.w.size(), std::vector<double>(layer.w[0].size(), 0.0));
    v.b.assign(layer.b.size(), 0.0);
    velocity.push_back(std::move(v));
  }

  const std::size_t n = data.features.size();
  SeededRng shuffle_rng(splitmix64(static_cast<std::uint64_t>(config.seed) ^ 0xd1b54a32d192ed03ull));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order;
    if (config.oversample) {
      order = oversample_schedule(data.labels,
                                  splitmix64(static_cast<std::uint64_t>(config.seed) +
                                             0x9e3779b97f4a7c15ull * (epoch + 1)),
                                  n);
    } else {
      order.resize(n);
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.below(i)]);
      }
    }

    double epoch_loss_sum = 0.0;
    const std::size_t num_layers = model.layers().size();

    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);

      std::vector<DenseLayer> grads;
      for (const DenseLayer& layer : model.layers()) {
        DenseLayer g;
        g.w.assign(layer.w.size(), std::vector<double>(layer.w[0].size(), 0.0));
        g.b.assign(layer.b.size(), 0.0);
        grads.push_back(std::move(g));
      }

      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const int y = data.labels[idx];
        const double w = focal.class_weights.weights[y];
        detail::ForwardCache cache = detail::forward_cached(model, data.features[idx]);
        const std::vector<double>& z_out = cache.pre_acts.back();

        double q;
        std::vector<double> delta(z_out.size());
        if (output == OutputActivation::Softmax) {
          const std::vector<double> p = softmax(z_out);
          q = p[y];
          const double coeff = detail::focal_coeff(q, w, focal.gamma);
          for (std::size_t c = 0; c < p.size(); ++c) {
            delta[c] = coeff * ((static_cast<int>(c) == y ? 1.0 : 0.0) - p[c]) * inv_b;
          }
        } else {
          const double s = sigmoid(z_out[0]);
          q = y == 1 ? s : 1.0 - s;
          const double coeff = detail::focal_coeff(q, w, focal.gamma);
          delta[0] = (y == 1 ? 1.0 : -1.0) * coeff * (1.0 - q) * inv_b;
        }

        double q_loss = q;
        if (q_loss < detail::kProbFloor) {
          q_loss = detail::kProbFloor;
          ++result.probability_floor_hits;
        }
        epoch_loss_sum += w * std::pow(1.0 - q_loss, focal.gamma) * (-std::log(q_loss));

        // Backward pass, accumulating into the batch gradient.
        std::vector<double> d = std::move(delta);
        for (std::size_t l = num_layers; l-- > 0;) {
          const DenseLayer& layer = model.layers()[l];
          const auto& a_prev = cache.activations[l];
          for (std::size_t o = 0; o < d.size(); ++o) {
            if (d[o] == 0.0) continue;
            auto& gw_row = grads[l].w[o];
            for (std::size_t i = 0; i < a_prev.size(); ++i) gw_row[i] += d[o] * a_prev[i];
            grads[l].b[o] += d[o];
          }
          if (l == 0) break;
          std::vector<double> d_prev(layer.w[0].size(), 0.0);
          for (std::size_t o = 0; o < d.size(); ++o) {
            if (d[o] == 0.0) continue;
            const auto& w_row = layer.w[o];
            for (std::size_t i = 0; i < w_row.size(); ++i) d_prev[i] += w_row[i] * d[o];
          }
          const auto& z_prev = cache.pre_acts[l - 1];
          for (std::size_t i = 0; i < d_prev.size(); ++i) {
            if (z_prev[i] <= 0.0) d_prev[i] = 0.0;  // ReLU derivative
          }
          d = std::move(d_prev);
        }
      }

      // Momentum update.
      for (std::size_t l = 0; l < num_layers; ++l) {
        DenseLayer& layer = model.layers()[l];
        DenseLayer& vel = velocity[l];
        const DenseLayer& g = grads[l];
        for (std::size_t o = 0; o < layer.w.size(); ++o) {
          for (std::size_t i = 0; i < layer.w[o].size(); ++i) {
            vel.w[o][i] = config.momentum * vel.w[o][i] - config.learning_rate * g.w[o][i];
            layer.w[o][i] += vel.w[o][i];
          }
          vel.b[o] = config.momentum * vel.b[o] - config.learning_rate * g.b[o];
          layer.b[o] += vel.b[o];
        }
      }
    }

    const double epoch_loss = epoch_loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      throw std::runtime_error("train: loss diverged (non-finite) at epoch " + std::to_string(epoch));
    }
    result.epoch_loss.push_back(epoch_loss);
  }
  return result;
}

}  // namespace reefdeploy
