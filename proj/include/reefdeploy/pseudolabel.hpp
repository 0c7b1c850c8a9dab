#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "reefdeploy/classify.hpp"
#include "reefdeploy/core.hpp"
#include "reefdeploy/jsonl.hpp"

namespace reefdeploy {

enum class LabelSource { ChatVlm, EmbeddingSimilarity };

inline std::string to_string(LabelSource s) {
  return s == LabelSource::ChatVlm ? "chat_vlm" : "embedding_similarity";
}

inline LabelSource label_source_from_string(const std::string& s) {
  if (s == "chat_vlm") return LabelSource::ChatVlm;
  if (s == "embedding_similarity") return LabelSource::EmbeddingSimilarity;
  throw std::invalid_argument("unknown label source '" + s + "'");
}

struct PseudoLabel {
  std::string frame_id;
  int patch_index = 0;
  PatchClass label = PatchClass::NoDeploy;
  double confidence = 0.0;
  LabelSource source = LabelSource::ChatVlm;
  // Verbatim model reply, kept as an audit trail; empty for similarity labels.
  std::string raw_response;
};

inline json pseudo_label_to_json(const PseudoLabel& p) {
  json obj{{"frame_id", p.frame_id},
           {"patch_index", p.patch_index},
           {"label", class_code(p.label)},
           {"confidence", p.confidence},
           {"source", to_string(p.source)}};
  if (!p.raw_response.empty()) obj["raw_response"] = p.raw_response;
  return obj;
}

inline PseudoLabel pseudo_label_from_json(const json& obj) {
  PseudoLabel p;
  p.frame_id = obj.at("frame_id").get<std::string>();
  p.patch_index = obj.at("patch_index").get<int>();
  p.label = patch_class_from_code(obj.at("label").get<int>());
  p.confidence = obj.at("confidence").get<double>();
  if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) {
    throw std::invalid_argument("confidence outside [0,1]: " + std::to_string(p.confidence));
  }
  p.source = label_source_from_string(obj.at("source").get<std::string>());
  p.raw_response = obj.value("raw_response", "");
  return p;
}

// The exact instruction text sent with every patch image. The class codes
// here mirror the on-disk convention except that the model-facing text
// numbers coral as 1 and bare substrate as 2, matching PatchClass.
inline std::string build_prompt() {
  return
      "You are a specialized agent in classifying underwater images. Your goal is to carefully "
      "inspect the image, and then classify it in one of the following classes: 0, 1, 2."
      "\n\n"
      "The class 1 corresponds to: mainly coral."
      "\n\n"
      "The class 2 corresponds to: rocky seafloor or substrate. It looks solid and has minimal "
      "coral."
      "\n\n"
      "The class 0 corresponds to: images that do not fit into class 1 or class 2, typically "
      "algae, sand, rubble, water or blurry images."
      "\n\n"
      "Pay attention to the image and only classify it as class 0 if you're absolutely certain "
      "the image cannot be described as class 1 or 2."
      "\n\n"
      "Always provide the output as a dictionary in the format {\"class\": 0, \"conf\": 0.5}, "
      "where the 'class' is an integer number corresponding to the best class: 0, 1, 2, and the "
      "'conf' is a decimal number between 0 and 1 to represent your confidence that the chosen "
      "class matches the image. If you think two classes could accurately describe the image, "
      "the confidence should be closer to 0.";
}

struct ParsedResponse {
  PatchClass label = PatchClass::NoDeploy;
  double confidence = 0.0;
};

class ResponseParseError : public std::runtime_error {
 public:
  enum class Kind { NoObject, ClassOutOfRange };

  ResponseParseError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Pulls the {"class": k, "conf": c} object out of a model reply. Tolerates
// surrounding prose, code fences and single-quoted keys; rejects replies
// with no such object or with a class outside {0, 1, 2}.
inline ParsedResponse parse_response(const std::string& text) {
  bool saw_out_of_range = false;
  int bad_class = 0;
  for (std::size_t open = text.find('{'); open != std::string::npos;
       open = text.find('{', open + 1)) {
    const std::size_t close = text.find('}', open);
    if (close == std::string::npos) break;
    std::string candidate = text.substr(open, close - open + 1);
    std::replace(candidate.begin(), candidate.end(), '\'', '"');
    const json obj = json::parse(candidate, nullptr, false);
    if (!obj.is_object() || !obj.contains("class") || !obj.contains("conf")) continue;
    if (!obj["class"].is_number() || !obj["conf"].is_number()) continue;
    const double raw_class = obj["class"].get<double>();
    const int k = static_cast<int>(raw_class);
    if (static_cast<double>(k) != raw_class || k < 0 || k >= kNumPatchClasses) {
      saw_out_of_range = true;
      bad_class = k;
      continue;
    }
    const double conf = std::clamp(obj["conf"].get<double>(), 0.0, 1.0);
    return ParsedResponse{patch_class_from_code(k), conf};
  }
  if (saw_out_of_range) {
    throw ResponseParseError(ResponseParseError::Kind::ClassOutOfRange,
                             "class out of range in response: " + std::to_string(bad_class));
  }
  throw ResponseParseError(ResponseParseError::Kind::NoObject,
                           "no {\"class\": ..., \"conf\": ...} object in response");
}

// One reference embedding per patch class, for zero-shot labeling by cosine
// similarity against patch embeddings.
struct PromptEmbeddings {
  std::array<std::string, kNumPatchClasses> prompts;
  std::array<std::vector<double>, kNumPatchClasses> embeddings;

  std::size_t dimensionality() const { return embeddings[0].size(); }
};

inline void validate(const PromptEmbeddings& pe) {
  const std::size_t dim = pe.embeddings[0].size();
  if (dim == 0) throw std::invalid_argument("empty prompt embedding");
  for (int c = 0; c < kNumPatchClasses; ++c) {
    const std::vector<double>& e = pe.embeddings[c];
    if (e.size() != dim) {
      throw std::invalid_argument("prompt embedding for class " + std::to_string(c) +
                                  " has dimensionality " + std::to_string(e.size()) +
                                  ", expected " + std::to_string(dim));
    }
    double norm_sq = 0.0;
    for (double v : e) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite prompt embedding value");
      norm_sq += v * v;
    }
    if (norm_sq == 0.0) {
      throw std::invalid_argument("prompt embedding for class " + std::to_string(c) +
                                  " has zero norm");
    }
  }
}

// File format: one JSON object per line, {"class": k, "prompt": text,
// "embedding": [..]}, exactly one line per class.
inline PromptEmbeddings load_prompt_embeddings(const std::filesystem::path& path) {
  PromptEmbeddings pe;
  std::array<bool, kNumPatchClasses> seen{};
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& obj) {
    const std::string at = path.string() + ":" + std::to_string(line_no);
    try {
      const int k = obj.at("class").get<int>();
      patch_class_from_code(k);
      if (seen[static_cast<std::size_t>(k)]) {
        throw std::invalid_argument("duplicate embedding for class " + std::to_string(k));
      }
      seen[static_cast<std::size_t>(k)] = true;
      pe.prompts[static_cast<std::size_t>(k)] = obj.value("prompt", "");
      pe.embeddings[static_cast<std::size_t>(k)] = obj.at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw std::runtime_error(at + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(at + ": " + e.what());
    }
  });
  for (int c = 0; c < kNumPatchClasses; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw std::runtime_error(path.string() + ": missing embedding for class " + std::to_string(c));
    }
  }
  validate(pe);
  return pe;
}

namespace detail {

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

// Zero-shot labels: argmax of cosine similarity against the class prompt
// embeddings, confidence from a softmax over the three similarities.
inline std::vector<PseudoLabel> label_patches_similarity(std::span<const PatchFeatures> patches,
                                                         const PromptEmbeddings& prompts) {
  validate(prompts);
  std::vector<PseudoLabel> out;
  out.reserve(patches.size());
  for (const PatchFeatures& pf : patches) {
    if (pf.values.size() != prompts.dimensionality()) {
      throw std::invalid_argument("frame '" + pf.frame_id + "' patch " +
                                  std::to_string(pf.patch_index) + ": embedding dimensionality " +
                                  std::to_string(pf.values.size()) + " does not match prompts (" +
                                  std::to_string(prompts.dimensionality()) + ")");
    }
    double norm_sq = 0.0;
    for (double v : pf.values) norm_sq += v * v;
    if (norm_sq == 0.0) {
      throw std::invalid_argument("frame '" + pf.frame_id + "' patch " +
                                  std::to_string(pf.patch_index) + ": zero-norm embedding");
    }
    std::array<double, kNumPatchClasses> sims{};
    for (int c = 0; c < kNumPatchClasses; ++c) {
      sims[static_cast<std::size_t>(c)] = detail::cosine(pf.values, prompts.embeddings[static_cast<std::size_t>(c)]);
    }
    int best = 0;
    for (int c = 1; c < kNumPatchClasses; ++c) {
      if (sims[static_cast<std::size_t>(c)] > sims[static_cast<std::size_t>(best)]) best = c;
    }
    const std::vector<double> soft = softmax(sims);
    out.push_back(PseudoLabel{pf.frame_id, pf.patch_index, patch_class_from_code(best),
                              soft[static_cast<std::size_t>(best)], LabelSource::EmbeddingSimilarity});
  }
  return out;
}

inline void write_pseudo_labels(std::span<const PseudoLabel> labels,
                                const std::filesystem::path& path) {
  std::string body;
  for (const PseudoLabel& p : labels) {
    body += pseudo_label_to_json(p).dump();
    body += '\n';
  }
  atomic_write_text(path, body);
}

inline std::vector<PseudoLabel> load_pseudo_labels(const std::filesystem::path& path) {
  std::vector<PseudoLabel> out;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& obj) {
    try {
      out.push_back(pseudo_label_from_json(obj));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace reefdeploy
