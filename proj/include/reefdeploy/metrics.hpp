#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "reefdeploy/core.hpp"
#include "reefdeploy/decision.hpp"

namespace reefdeploy::metrics {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes, std::vector<std::string> class_names = {})
      : n_(num_classes), counts_(num_classes * num_classes, 0), names_(std::move(class_names)) {
    if (n_ == 0) throw std::invalid_argument("confusion matrix needs at least one class");
    if (!names_.empty() && names_.size() != n_) {
      throw std::invalid_argument("class name count does not match class count");
    }
    if (names_.empty()) {
      for (std::size_t i = 0; i < n_; ++i) names_.push_back("class_" + std::to_string(i));
    }
  }

  void add(int truth, int predicted, std::uint64_t count = 1) {
    check(truth);
    check(predicted);
    counts_[static_cast<std::size_t>(truth) * n_ + static_cast<std::size_t>(predicted)] += count;
  }

  std::uint64_t at(int truth, int predicted) const {
    check(truth);
    check(predicted);
    return counts_[static_cast<std::size_t>(truth) * n_ + static_cast<std::size_t>(predicted)];
  }

  std::size_t num_classes() const { return n_; }
  const std::vector<std::string>& class_names() const { return names_; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (std::uint64_t c : counts_) t += c;
    return t;
  }

  std::uint64_t row_sum(int truth) const {
    std::uint64_t t = 0;
    for (std::size_t p = 0; p < n_; ++p) t += at(truth, static_cast<int>(p));
    return t;
  }

  std::uint64_t col_sum(int predicted) const {
    std::uint64_t t = 0;
    for (std::size_t r = 0; r < n_; ++r) t += at(static_cast<int>(r), predicted);
    return t;
  }

  std::uint64_t diagonal() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < n_; ++i) t += at(static_cast<int>(i), static_cast<int>(i));
    return t;
  }

 private:
  void check(int c) const {
    if (c < 0 || static_cast<std::size_t>(c) >= n_) {
      throw std::out_of_range("class code " + std::to_string(c) + " outside [0," +
                              std::to_string(n_) + ")");
    }
  }

  std::size_t n_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::string> names_;
};

inline ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths,
                                 std::size_t num_classes, std::vector<std::string> class_names = {}) {
  if (truths.size() != predictions.size()) {
    throw std::invalid_argument("prediction count " + std::to_string(predictions.size()) +
                                " does not match truth count " + std::to_string(truths.size()));
  }
  if (truths.empty()) throw std::invalid_argument("no samples to score");
  ConfusionMatrix cm(num_classes, std::move(class_names));
  for (std::size_t i = 0; i < truths.size(); ++i) cm.add(truths[i], predictions[i]);
  return cm;
}

// All values are percentages. A zero denominator yields 0.
struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::uint64_t total = 0;
};

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

// Unweighted mean of per-class F1 percentages.
inline double macro_f1(std::span<const double> per_class_f1) {
  if (per_class_f1.empty()) throw std::invalid_argument("macro F1 of zero classes");
  double sum = 0.0;
  for (double f : per_class_f1) sum += f;
  return sum / static_cast<double>(per_class_f1.size());
}

inline MetricsReport report(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.total = cm.total();
  std::vector<double> f1s;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const int ci = static_cast<int>(c);
    const double tp = static_cast<double>(cm.at(ci, ci));
    const double precision = 100.0 * safe_ratio(tp, static_cast<double>(cm.col_sum(ci)));
    const double recall = 100.0 * safe_ratio(tp, static_cast<double>(cm.row_sum(ci)));
    const double f1 = safe_ratio(2.0 * precision * recall, precision + recall);
    r.per_class.push_back(ClassMetrics{cm.class_names()[c], precision, recall, f1, cm.row_sum(ci)});
    f1s.push_back(f1);
  }
  r.macro_f1 = macro_f1(f1s);
  r.accuracy = 100.0 * safe_ratio(static_cast<double>(cm.diagonal()), static_cast<double>(r.total));
  return r;
}

// Binary deploy/no-deploy metrics, Deploy as the positive class. The f1
// field is the macro F1 over both classes.
struct DeployMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::uint64_t deploy_truths = 0;
  std::uint64_t deploy_decisions = 0;
  std::uint64_t total = 0;
};

inline ConfusionMatrix deploy_confusion(std::span<const FrameDecision> decisions,
                                        std::span<const std::pair<std::string, FrameLabel>> truths) {
  if (decisions.size() != truths.size()) {
    throw std::invalid_argument("decision count " + std::to_string(decisions.size()) +
                                " does not match truth count " + std::to_string(truths.size()));
  }
  if (decisions.empty()) throw std::invalid_argument("no decisions to score");
  ConfusionMatrix cm(2, {"no_deploy", "deploy"});
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i].frame_id != truths[i].first) {
      throw std::invalid_argument("decision frame '" + decisions[i].frame_id +
                                  "' does not match truth frame '" + truths[i].first + "'");
    }
    cm.add(frame_label_code(truths[i].second), frame_label_code(decisions[i].decision));
  }
  return cm;
}

inline DeployMetrics deploy_metrics(std::span<const FrameDecision> decisions,
                                    std::span<const std::pair<std::string, FrameLabel>> truths) {
  const ConfusionMatrix cm = deploy_confusion(decisions, truths);
  const MetricsReport rep = report(cm);
  DeployMetrics m;
  m.precision = rep.per_class[1].precision;
  m.recall = rep.per_class[1].recall;
  m.accuracy = rep.accuracy;
  m.f1 = rep.macro_f1;
  m.deploy_truths = cm.row_sum(1);
  m.deploy_decisions = cm.col_sum(1);
  m.total = cm.total();
  return m;
}

struct PrPoint {
  double alpha = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::uint64_t deploy_decisions = 0;
};

struct PrCurve {
  DecisionRule rule = DecisionRule::ThresholdingWithPatches;
  std::vector<PrPoint> points;
};

// Sweep alpha over the given grid, re-deciding every frame at each value.
// Each grid's classification is computed once; only the threshold moves.
inline PrCurve pr_sweep(std::span<const GridClassification> grids,
                        std::span<const std::pair<std::string, FrameLabel>> truths,
                        std::span<const double> alphas, const DecisionConfig& base) {
  if (base.rule == DecisionRule::WholeImage) {
    throw std::invalid_argument("whole_image rule has a fixed 0.5 threshold; nothing to sweep");
  }
  if (alphas.empty()) throw std::invalid_argument("no alpha values to sweep");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0)) {
      throw std::invalid_argument("alpha must be in [0,1], got " + std::to_string(alphas[i]));
    }
    if (i > 0 && !(alphas[i] > alphas[i - 1])) {
      throw std::invalid_argument("alpha values must be strictly increasing");
    }
  }
  if (grids.size() != truths.size()) {
    throw std::invalid_argument("grid count " + std::to_string(grids.size()) +
                                " does not match truth count " + std::to_string(truths.size()));
  }
  PrCurve curve;
  curve.rule = base.rule;
  DecisionConfig config = base;
  for (double alpha : alphas) {
    config.alpha = alpha;
    const std::vector<FrameDecision> decisions = decide_batch(grids, config);
    const DeployMetrics m = deploy_metrics(decisions, truths);
    curve.points.push_back(PrPoint{alpha, m.precision, m.recall, m.f1, m.accuracy, m.deploy_decisions});
  }
  return curve;
}

struct AgreementResult {
  MetricsReport report;
  // agree[i] corresponds to decisions[i].
  std::vector<bool> agree;
};

// Engine decisions against ecologist frame labels, aligned by position with
// frame_id verification.
inline AgreementResult agreement(std::span<const FrameDecision> decisions,
                                 std::span<const std::pair<std::string, FrameLabel>> ecologist) {
  const ConfusionMatrix cm = deploy_confusion(decisions, ecologist);
  AgreementResult out;
  out.report = report(cm);
  out.agree.reserve(decisions.size());
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    out.agree.push_back(decisions[i].decision == ecologist[i].second);
  }
  return out;
}

inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(14) << "class" << std::right << std::setw(10) << "precision"
     << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(10) << "support" << "\n";
  for (const ClassMetrics& c : r.per_class) {
    os << std::left << std::setw(14) << c.name << std::right << std::setw(10) << c.precision
       << std::setw(10) << c.recall << std::setw(10) << c.f1 << std::setw(10) << c.support << "\n";
  }
  os << "macro F1: " << r.macro_f1 << "\n";
  os << "accuracy: " << r.accuracy << " (" << r.total << " samples)\n";
  return os.str();
}

inline json report_to_json(const MetricsReport& r) {
  json per = json::array();
  for (const ClassMetrics& c : r.per_class) {
    per.push_back({{"class", c.name},
                   {"precision", c.precision},
                   {"recall", c.recall},
                   {"f1", c.f1},
                   {"support", c.support}});
  }
  return json{{"per_class", per}, {"macro_f1", r.macro_f1}, {"accuracy", r.accuracy}, {"total", r.total}};
}

inline std::string pr_curve_csv(const PrCurve& curve) {
  std::ostringstream os;
  os << "alpha,precision,recall,f1,accuracy,deploy_decisions\n";
  for (const PrPoint& p : curve.points) {
    os << json(p.alpha).dump() << ',' << json(p.precision).dump() << ',' << json(p.recall).dump()
       << ',' << json(p.f1).dump() << ',' << json(p.accuracy).dump() << ',' << p.deploy_decisions
       << "\n";
  }
  return os.str();
}

}  // namespace reefdeploy::metrics
