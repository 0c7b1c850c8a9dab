#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "reefdeploy/classify.hpp"
#include "reefdeploy/core.hpp"
#include "reefdeploy/decision.hpp"
#include "reefdeploy/geotrack.hpp"
#include "reefdeploy/http_transport.hpp"
#include "reefdeploy/jsonl.hpp"
#include "reefdeploy/learn.hpp"
#include "reefdeploy/metrics.hpp"
#include "reefdeploy/mlp.hpp"
#include "reefdeploy/pseudolabel.hpp"
#include "reefdeploy/stream.hpp"
#include "reefdeploy/tiler.hpp"
#include "reefdeploy/vlm_client.hpp"

namespace {

using namespace reefdeploy;

GridSpec parse_grid(const std::string& text) {
  const std::size_t x = text.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= text.size()) {
    throw std::invalid_argument("grid must look like ROWSxCOLS, e.g. 4x7, got '" + text + "'");
  }
  GridSpec grid;
  try {
    std::size_t used = 0;
    grid.rows = std::stoi(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("");
    grid.cols = std::stoi(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw std::invalid_argument("grid must look like ROWSxCOLS, e.g. 4x7, got '" + text + "'");
  }
  validate(grid);
  return grid;
}

// Width/height from a PNG or JPEG header; no pixel decoding.
std::pair<int, int> read_image_dims(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path.string());
  unsigned char head[26] = {};
  in.read(reinterpret_cast<char*>(head), sizeof(head));
  const std::streamsize got = in.gcount();
  auto be32 = [](const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
  };
  if (got >= 24 && head[0] == 0x89 && head[1] == 'P' && head[2] == 'N' && head[3] == 'G') {
    return {static_cast<int>(be32(head + 16)), static_cast<int>(be32(head + 20))};
  }
  if (got >= 2 && head[0] == 0xFF && head[1] == 0xD8) {
    in.clear();
    in.seekg(2);
    while (in) {
      int byte = in.get();
      if (byte != 0xFF) continue;
      int marker = in.get();
      while (marker == 0xFF) marker = in.get();
      if (marker == EOF) break;
      if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7) || marker == 0x01) continue;
      unsigned char len_bytes[2];
      in.read(reinterpret_cast<char*>(len_bytes), 2);
      if (!in) break;
      const int seg_len = (len_bytes[0] << 8) | len_bytes[1];
      const bool is_sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 &&
                          marker != 0xCC;
      if (is_sof) {
        unsigned char sof[5];
        in.read(reinterpret_cast<char*>(sof), 5);
        if (!in) break;
        const int h = (sof[1] << 8) | sof[2];
        const int w = (sof[3] << 8) | sof[4];
        return {w, h};
      }
      in.seekg(seg_len - 2, std::ios::cur);
    }
    throw std::runtime_error("no JPEG frame header in: " + path.string());
  }
  throw std::runtime_error("unrecognized image format (PNG and JPEG supported): " + path.string());
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument(what + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw std::invalid_argument(what + ": empty list");
  return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument(what + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

// Grid classifications for the given frames out of a predictions file.
std::vector<GridClassification> grids_from_predictions(const PredictionsFileBackend& backend,
                                                       const std::vector<std::string>& frame_ids,
                                                       const GridSpec& grid) {
  std::vector<GridClassification> grids;
  grids.reserve(frame_ids.size());
  for (const std::string& id : frame_ids) {
    FrameRecord frame;
    frame.frame_id = id;
    grids.push_back(classify_patches(backend, frame, grid));
  }
  return grids;
}

std::vector<std::pair<std::string, FrameLabel>> frame_truths(const DatasetManifest& manifest,
                                                             const std::vector<std::string>& ids) {
  std::vector<std::pair<std::string, FrameLabel>> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const FrameRecord* r = manifest.find(id);
    if (r == nullptr) throw std::runtime_error("frame '" + id + "' not in manifest");
    if (!r->ecologist_label) {
      throw std::runtime_error("frame '" + id + "' has no ecologist label");
    }
    out.emplace_back(id, *r->ecologist_label);
  }
  return out;
}

void echo_config(const std::string& command, const json& effective) {
  std::cerr << "config " << json{{"command", command}, {"effective", effective}}.dump() << "\n";
}

struct GlobalOpts {
  int seed = 0;
  bool deterministic = false;
  bool verbose = false;
};

void write_lines(const std::filesystem::path& path, const std::vector<json>& lines) {
  std::string body;
  for (const json& line : lines) {
    body += line.dump();
    body += '\n';
  }
  atomic_write_text(path, body);
}

// ---- tile ----------------------------------------------------------------

struct TileOpts {
  int width = 0;
  int height = 0;
  std::string image;
  std::string grid = "4x7";
  std::string output;
};

int cmd_tile(const TileOpts& opt, const GlobalOpts&) {
  const GridSpec grid = parse_grid(opt.grid);
  int w = opt.width;
  int h = opt.height;
  if (!opt.image.empty()) {
    std::tie(w, h) = read_image_dims(opt.image);
  } else if (w <= 0 || h <= 0) {
    throw std::invalid_argument("provide --image or both --width and --height");
  }
  echo_config("tile", json{{"width", w}, {"height", h}, {"grid", opt.grid}});
  const std::vector<PatchRect> rects = tile(w, h, grid);
  std::vector<json> lines;
  lines.reserve(rects.size());
  for (const PatchRect& r : rects) {
    const auto [row, col] = patch_row_col(r.index, grid);
    lines.push_back(json{{"index", r.index}, {"row", row}, {"col", col},
                         {"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}});
  }
  if (opt.output.empty()) {
    for (const json& line : lines) std::cout << line.dump() << "\n";
  } else {
    write_lines(opt.output, lines);
  }
  return 0;
}

// ---- decide ----------------------------------------------------------------

struct DecideOpts {
  std::string predictions;
  std::string manifest;
  std::string rule = "thresholding_with_patches";
  double alpha = 0.4;
  std::string convention = "deploy_vs_others";
  std::string model;
  std::string grid = "4x7";
  std::string output;
};

DecisionConfig decision_config_from(const std::string& rule, double alpha,
                                    const std::string& convention, const std::string& model_path) {
  DecisionConfig config;
  config.rule = decision_rule_from_string(rule);
  config.alpha = alpha;
  config.convention = ratio_convention_from_string(convention);
  if (config.rule == DecisionRule::SpatialPatchAggregation) {
    if (model_path.empty()) {
      throw std::invalid_argument("rule spatial_patch_aggregation requires --model");
    }
    config.aggregation_model = std::make_shared<MlpModel>(load_model(model_path));
  }
  return config;
}

int cmd_decide(const DecideOpts& opt, const GlobalOpts&) {
  const GridSpec grid = parse_grid(opt.grid);
  const DecisionConfig config =
      decision_config_from(opt.rule, opt.alpha, opt.convention, opt.model);
  echo_config("decide", json{{"predictions", opt.predictions}, {"rule", opt.rule},
                             {"alpha", opt.alpha}, {"convention", opt.convention},
                             {"grid", opt.grid}, {"output", opt.output}});
  const PredictionsFileBackend backend(opt.predictions);
  std::optional<DatasetManifest> manifest;
  if (!opt.manifest.empty()) manifest = load_manifest(opt.manifest, grid);

  std::vector<std::string> ids;
  if (manifest) {
    for (const FrameRecord& r : manifest->records()) ids.push_back(r.frame_id);
  } else {
    ids = config.rule == DecisionRule::WholeImage ? backend.frame_mode_ids()
                                                  : backend.patch_frame_ids();
  }
  if (ids.empty()) throw std::runtime_error("no frames to decide");

  std::vector<json> lines;
  lines.reserve(ids.size());
  for (const std::string& id : ids) {
    FrameRecord frame;
    frame.frame_id = id;
    const FrameRecord* rec = manifest ? manifest->find(id) : nullptr;
    FrameDecision d;
    if (config.rule == DecisionRule::WholeImage) {
      d = decide(classify_frame(backend, frame), config);
    } else {
      d = decide(classify_patches(backend, frame, grid), config);
    }
    lines.push_back(decision_to_json(d, rec));
  }
  write_lines(opt.output, lines);
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainOpts {
  std::string mode = "patch";
  std::string features;
  std::string labels;
  std::string manifest;
  std::string predictions;
  std::string grid = "4x7";
  std::string hidden;
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double gamma = 2.0;
  bool no_class_weights = false;
  bool oversample = false;
  std::string output;
  std::string loss_trace;
};

int cmd_train(const TrainOpts& opt, const GlobalOpts& global) {
  echo_config("train", json{{"mode", opt.mode}, {"features", opt.features},
                            {"labels", opt.labels}, {"manifest", opt.manifest},
                            {"predictions", opt.predictions}, {"hidden", opt.hidden},
                            {"epochs", opt.epochs}, {"batch_size", opt.batch_size},
                            {"learning_rate", opt.learning_rate}, {"momentum", opt.momentum},
                            {"gamma", opt.gamma}, {"class_weights", !opt.no_class_weights},
                            {"oversample", opt.oversample}, {"seed", global.seed},
                            {"output", opt.output}});
  const GridSpec grid = parse_grid(opt.grid);
  TrainingSet data;
  OutputActivation output = OutputActivation::Softmax;
  int num_classes = kNumPatchClasses;

  if (opt.mode == "patch" || opt.mode == "frame") {
    if (opt.features.empty()) throw std::invalid_argument("--features is required");
    const FeatureStore store(opt.features);
    if (opt.mode == "patch") {
      std::map<std::pair<std::string, int>, int> label_of;
      if (!opt.labels.empty()) {
        for (const PseudoLabel& p : load_pseudo_labels(opt.labels)) {
          label_of[{p.frame_id, p.patch_index}] = class_code(p.label);
        }
      } else if (!opt.manifest.empty()) {
        const DatasetManifest manifest = load_manifest(opt.manifest, grid);
        for (const FrameRecord& r : manifest.records()) {
          if (!r.patch_labels) continue;
          for (std::size_t i = 0; i < r.patch_labels->size(); ++i) {
            label_of[{r.frame_id, static_cast<int>(i)}] = class_code((*r.patch_labels)[i]);
          }
        }
      } else {
        throw std::invalid_argument("patch mode needs --labels or --manifest");
      }
      std::size_t unlabeled = 0;
      for (const PatchFeatures& pf : store.all_patch_features()) {
        auto it = label_of.find({pf.frame_id, pf.patch_index});
        if (it == label_of.end()) {
          ++unlabeled;
          continue;
        }
        data.features.push_back(pf.values);
        data.labels.push_back(it->second);
      }
      if (unlabeled > 0) {
        std::cerr << "note: " << unlabeled << " feature vectors have no label and were skipped\n";
      }
    } else {
      if (opt.manifest.empty()) throw std::invalid_argument("frame mode needs --manifest");
      const DatasetManifest manifest = load_manifest(opt.manifest, grid);
      for (const FrameRecord& r : manifest.records()) {
        if (!r.ecologist_label) continue;
        const std::vector<double>* values = store.frame_features(r.frame_id);
        if (values == nullptr) continue;
        data.features.push_back(*values);
        data.labels.push_back(frame_label_code(*r.ecologist_label));
      }
      output = OutputActivation::Sigmoid;
      num_classes = 2;
    }
  } else if (opt.mode == "aggregation") {
    if (opt.predictions.empty() || opt.manifest.empty()) {
      throw std::invalid_argument("aggregation mode needs --predictions and --manifest");
    }
    const PredictionsFileBackend backend(opt.predictions);
    const DatasetManifest manifest = load_manifest(opt.manifest, grid);
    for (const FrameRecord& r : manifest.records()) {
      if (!r.ecologist_label) continue;
      const GridClassification gc = classify_patches(backend, r, grid);
      std::vector<double> input;
      input.reserve(gc.distributions.size() * kNumPatchClasses);
      for (const ClassDistribution& d : gc.distributions) {
        for (int c = 0; c < kNumPatchClasses; ++c) input.push_back(d[c]);
      }
      data.features.push_back(std::move(input));
      data.labels.push_back(frame_label_code(*r.ecologist_label));
    }
    output = OutputActivation::Sigmoid;
    num_classes = 2;
  } else {
    throw std::invalid_argument("unknown train mode '" + opt.mode + "'");
  }

  if (data.features.empty()) throw std::runtime_error("no labeled training samples");

  TrainConfig config;
  config.epochs = opt.epochs;
  config.batch_size = opt.batch_size;
  config.learning_rate = opt.learning_rate;
  config.momentum = opt.momentum;
  config.seed = global.seed;
  config.oversample = opt.oversample;
  config.focal.gamma = opt.gamma;
  if (!opt.no_class_weights) {
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int y : data.labels) ++counts[static_cast<std::size_t>(y)];
    config.focal.class_weights = compute_class_weights(counts);
  }

  std::vector<int> arch{static_cast<int>(data.features.front().size())};
  if (!opt.hidden.empty()) {
    for (int h : parse_int_list(opt.hidden, "--hidden")) arch.push_back(h);
  }
  arch.push_back(output == OutputActivation::Sigmoid ? 1 : num_classes);

  const TrainResult result = train(data, arch, output, config);
  save_model(result.model, opt.output);
  if (!opt.loss_trace.empty()) {
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      csv += std::to_string(e + 1) + "," + json(result.epoch_loss[e]).dump() + "\n";
    }
    atomic_write_text(opt.loss_trace, csv);
  }
  if (!result.epoch_loss.empty()) {
    std::cout << "trained " << data.features.size() << " samples, " << result.epoch_loss.size()
              << " epochs, final loss " << result.epoch_loss.back() << "\n";
  } else {
    std::cout << "trained " << data.features.size() << " samples, 0 epochs (initialization only)\n";
  }
  return 0;
}

// ---- pseudolabel ------------------------------------------------------------

struct PseudolabelOpts {
  std::string mode;
  std::string features;
  std::string prompt_embeddings;
  std::string patch_list;
  std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
  std::string credential_env = "VLM_API_KEY";
  std::string model_name = "gpt-4o";
  int max_in_flight = 4;
  int retries = 2;
  int backoff_ms = 250;
  double confidence_floor = 0.0;
  std::string audit;
  std::string output;
  std::string rejects;
};

int cmd_pseudolabel(const PseudolabelOpts& opt, const GlobalOpts&) {
  echo_config("pseudolabel", json{{"mode", opt.mode}, {"output", opt.output}});
  std::vector<PseudoLabel> labels;
  std::vector<json> reject_lines;
  if (opt.mode == "similarity") {
    if (opt.features.empty() || opt.prompt_embeddings.empty()) {
      throw std::invalid_argument("similarity mode needs --features and --prompt-embeddings");
    }
    const FeatureStore store(opt.features);
    const PromptEmbeddings prompts = load_prompt_embeddings(opt.prompt_embeddings);
    labels = label_patches_similarity(store.all_patch_features(), prompts);
  } else if (opt.mode == "vlm") {
    if (opt.patch_list.empty()) throw std::invalid_argument("vlm mode needs --patch-list");
    std::vector<PatchImage> patches;
    for_each_jsonl_line(opt.patch_list, [&](std::size_t line_no, const json& obj) {
      try {
        PatchImage p;
        p.frame_id = obj.at("frame_id").get<std::string>();
        p.patch_index = obj.at("patch_index").get<int>();
        const std::string path = obj.at("path").get<std::string>();
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open patch image: " + path);
        std::ostringstream bytes;
        bytes << in.rdbuf();
        p.bytes = bytes.str();
        if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") p.mime = "image/png";
        patches.push_back(std::move(p));
      } catch (const json::exception& e) {
        throw std::runtime_error(opt.patch_list + ":" + std::to_string(line_no) + ": " + e.what());
      }
    });
    VlmClientConfig config;
    config.endpoint = opt.endpoint;
    config.credential_env = opt.credential_env;
    config.model = opt.model_name;
    config.max_in_flight = opt.max_in_flight;
    config.retries = opt.retries;
    config.backoff_ms = opt.backoff_ms;
    config.confidence_floor = opt.confidence_floor;
    HttpChatTransport transport(config);

    std::ofstream audit_out;
    std::function<void(const json&)> audit;
    if (!opt.audit.empty()) {
      audit_out.open(opt.audit);
      if (!audit_out) throw std::runtime_error("cannot open audit file: " + opt.audit);
      audit = [&audit_out](const json& line) { audit_out << line.dump() << "\n" << std::flush; };
    }
    const VlmRun run = label_patches_vlm(transport, patches, config, audit);
    labels = run.labels;
    for (const VlmReject& r : run.rejects) {
      reject_lines.push_back(json{{"frame_id", r.frame_id}, {"patch_index", r.patch_index},
                                  {"reason", r.reason}});
    }
    std::cout << "labeled " << run.labels.size() << "/" << patches.size() << " patches ("
              << run.requests_sent << " requests, " << run.retries_used << " retries)\n";
  } else {
    throw std::invalid_argument("mode must be 'vlm' or 'similarity'");
  }
  write_pseudo_labels(labels, opt.output);
  if (!opt.rejects.empty()) write_lines(opt.rejects, reject_lines);
  return 0;
}

// ---- eval ----------------------------------------------------------------

struct EvalOpts {
  std::string level;
  std::string predictions;
  std::string decisions;
  std::string manifest;
  std::string grid = "4x7";
  std::string output;
  std::string csv;
};

int cmd_eval(const EvalOpts& opt, const GlobalOpts&) {
  echo_config("eval", json{{"level", opt.level}, {"predictions", opt.predictions},
                           {"decisions", opt.decisions}, {"manifest", opt.manifest}});
  const GridSpec grid = parse_grid(opt.grid);
  if (opt.manifest.empty()) throw std::invalid_argument("--manifest is required");
  const DatasetManifest manifest = load_manifest(opt.manifest, grid);
  metrics::MetricsReport rep;

  if (opt.level == "patch") {
    if (opt.predictions.empty()) throw std::invalid_argument("patch level needs --predictions");
    const PredictionsFileBackend backend(opt.predictions);
    std::vector<int> preds;
    std::vector<int> truths;
    for (const FrameRecord& r : manifest.records()) {
      if (!r.patch_labels) continue;
      const GridClassification gc = classify_patches(backend, r, grid);
      for (std::size_t i = 0; i < r.patch_labels->size(); ++i) {
        truths.push_back(class_code((*r.patch_labels)[i]));
        preds.push_back(class_code(gc.predicted[i]));
      }
    }
    if (preds.empty()) throw std::runtime_error("no patch labels in manifest");
    rep = metrics::report(metrics::confusion(preds, truths, kNumPatchClasses,
                                             {"no_deploy", "coral", "deploy"}));
  } else if (opt.level == "frame") {
    if (opt.decisions.empty()) throw std::invalid_argument("frame level needs --decisions");
    const std::vector<FrameDecision> decisions = load_decisions(opt.decisions);
    std::vector<std::string> ids;
    ids.reserve(decisions.size());
    for (const FrameDecision& d : decisions) ids.push_back(d.frame_id);
    const auto truths = frame_truths(manifest, ids);
    rep = metrics::agreement(decisions, truths).report;
  } else {
    throw std::invalid_argument("level must be 'patch' or 'frame'");
  }

  std::cout << metrics::format_report(rep);
  if (!opt.output.empty()) {
    atomic_write_text(opt.output, metrics::report_to_json(rep).dump(2) + "\n");
  }
  if (!opt.csv.empty()) {
    std::string csv = "class,precision,recall,f1,support\n";
    for (const metrics::ClassMetrics& c : rep.per_class) {
      csv += c.name + "," + json(c.precision).dump() + "," + json(c.recall).dump() + "," +
             json(c.f1).dump() + "," + std::to_string(c.support) + "\n";
    }
    csv += "macro_f1," + json(rep.macro_f1).dump() + ",,,\n";
    csv += "accuracy," + json(rep.accuracy).dump() + ",,,\n";
    atomic_write_text(opt.csv, csv);
  }
  return 0;
}

// ---- sweep ----------------------------------------------------------------

struct SweepOpts {
  std::string predictions;
  std::string manifest;
  std::string rule = "thresholding_with_patches";
  std::string alphas = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  std::string convention = "deploy_vs_others";
  std::string model;
  std::string grid = "4x7";
  std::string output;
};

int cmd_sweep(const SweepOpts& opt, const GlobalOpts&) {
  echo_config("sweep", json{{"predictions", opt.predictions}, {"manifest", opt.manifest},
                            {"rule", opt.rule}, {"alphas", opt.alphas}, {"output", opt.output}});
  const GridSpec grid = parse_grid(opt.grid);
  const std::vector<double> alphas = parse_double_list(opt.alphas, "--alphas");
  const DecisionConfig base = decision_config_from(opt.rule, 0.0, opt.convention, opt.model);
  const PredictionsFileBackend backend(opt.predictions);
  const DatasetManifest manifest = load_manifest(opt.manifest, grid);

  std::vector<std::string> ids;
  for (const FrameRecord& r : manifest.records()) {
    if (r.ecologist_label) ids.push_back(r.frame_id);
  }
  if (ids.empty()) throw std::runtime_error("no ecologist labels in manifest");
  const std::vector<GridClassification> grids = grids_from_predictions(backend, ids, grid);
  const auto truths = frame_truths(manifest, ids);

  const metrics::PrCurve curve = metrics::pr_sweep(grids, truths, alphas, base);
  atomic_write_text(opt.output, metrics::pr_curve_csv(curve));
  std::cout << "swept " << alphas.size() << " alpha values over " << ids.size() << " frames\n";
  return 0;
}

// ---- map ----------------------------------------------------------------

struct MapOpts {
  std::string decisions;
  std::string manifest;
  std::string grid = "4x7";
  std::string output;
  std::string csv;
};

int cmd_map(const MapOpts& opt, const GlobalOpts&) {
  echo_config("map", json{{"decisions", opt.decisions}, {"manifest", opt.manifest},
                          {"output", opt.output}});
  const GridSpec grid = parse_grid(opt.grid);
  const DatasetManifest manifest = load_manifest(opt.manifest, grid);
  const std::vector<FrameDecision> decisions = load_decisions(opt.decisions);
  const GeoTrack track = bind_track(decisions, manifest);
  export_geojson(track, opt.output);
  if (!opt.csv.empty()) export_csv(track, opt.csv);
  std::cout << "exported " << track.entries.size() << " track points\n";
  return 0;
}

// ---- simulate ----------------------------------------------------------------

struct SimulateOpts {
  std::string manifest;
  std::string backend = "mock";
  std::string predictions;
  std::string model;
  std::string features;
  std::string rule = "thresholding_with_patches";
  double alpha = 0.4;
  std::string convention = "deploy_vs_others";
  std::string agg_model;
  std::string grid = "4x7";
  double fps = 10.0;
  std::string drop_policy = "latest_wins";
  std::size_t queue_capacity = 8;
  double duration_s = 0.0;
  std::uint64_t frame_budget = 0;
  double delay_ms = 0.0;
  bool virtual_clock = false;
  std::string output;
  std::string timing;
};

int cmd_simulate(const SimulateOpts& opt, const GlobalOpts& global) {
  const GridSpec grid = parse_grid(opt.grid);
  const bool use_virtual = opt.virtual_clock || global.deterministic;
  echo_config("simulate", json{{"manifest", opt.manifest}, {"backend", opt.backend},
                               {"rule", opt.rule}, {"alpha", opt.alpha}, {"fps", opt.fps},
                               {"drop_policy", opt.drop_policy}, {"delay_ms", opt.delay_ms},
                               {"clock", use_virtual ? "virtual" : "wall"},
                               {"seed", global.seed}, {"output", opt.output}});
  const DatasetManifest manifest = load_manifest(opt.manifest, grid);
  const DecisionConfig decision =
      decision_config_from(opt.rule, opt.alpha, opt.convention, opt.agg_model);

  std::unique_ptr<ClassifierBackend> backend;
  if (opt.backend == "mock") {
    backend = std::make_unique<MockBackend>(static_cast<std::uint64_t>(global.seed));
  } else if (opt.backend == "predictions") {
    if (opt.predictions.empty()) throw std::invalid_argument("backend predictions needs --predictions");
    backend = std::make_unique<PredictionsFileBackend>(opt.predictions);
  } else if (opt.backend == "native") {
    if (opt.model.empty() || opt.features.empty()) {
      throw std::invalid_argument("backend native needs --model and --features");
    }
    backend = std::make_unique<NativeBackend>(std::make_shared<MlpModel>(load_model(opt.model)),
                                              std::make_shared<FeatureStore>(opt.features));
  } else {
    throw std::invalid_argument("unknown backend '" + opt.backend + "'");
  }

  StreamConfig stream_config;
  stream_config.capture_fps = opt.fps;
  stream_config.grid = grid;
  stream_config.drop_policy = drop_policy_from_string(opt.drop_policy);
  stream_config.queue_capacity = opt.queue_capacity;
  if (opt.frame_budget > 0) stream_config.frame_budget = opt.frame_budget;
  if (opt.duration_s > 0.0) {
    stream_config.duration = std::chrono::nanoseconds(
        static_cast<std::int64_t>(opt.duration_s * 1e9));
  }

  WallClock wall;
  VirtualClock vclock;
  Clock& clock = use_virtual ? static_cast<Clock&>(vclock) : static_cast<Clock&>(wall);

  std::unique_ptr<DelayedBackend> delayed;
  const ClassifierBackend* active = backend.get();
  if (opt.delay_ms > 0.0) {
    delayed = std::make_unique<DelayedBackend>(
        *backend, clock,
        std::chrono::nanoseconds(static_cast<std::int64_t>(opt.delay_ms * 1e6)));
    active = delayed.get();
  }

  std::ofstream log;
  std::function<void(const FrameDecision&, const FrameRecord&)> on_decision;
  if (!opt.output.empty()) {
    log.open(opt.output);
    if (!log) throw std::runtime_error("cannot open output: " + opt.output);
    on_decision = [&log](const FrameDecision& d, const FrameRecord& r) {
      log << decision_to_json(d, &r).dump() << "\n" << std::flush;
    };
  }

  const StreamResult result =
      run_stream(manifest_source(manifest), *active, decision, stream_config, clock, on_decision);
  const StreamSummary summary = summarize(result.stats);
  std::cout << format_summary(summary);
  if (!opt.timing.empty()) {
    atomic_write_text(opt.timing, summary_to_json(summary).dump(2) + "\n");
  }
  if (result.error) {
    throw std::runtime_error("stream aborted: " + *result.error);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seafloor imagery decision engine for coral reseeding device dispensing"};
  app.require_subcommand(1);
  app.set_config("--config")->expected(0, 1);
  app.allow_config_extras(CLI::config_extras_mode::error);

  GlobalOpts global;
  app.add_option("--seed", global.seed, "Seed for every stochastic component");
  app.add_flag("--deterministic", global.deterministic,
               "Suppress wall-clock dependence in outputs (virtual clock in simulate)");
  app.add_flag("--verbose", global.verbose, "Extra progress output on stderr");

  TileOpts tile_opt;
  CLI::App* tile_cmd = app.add_subcommand("tile", "Print the patch grid of a frame");
  tile_cmd->add_option("--width", tile_opt.width, "Frame width in pixels");
  tile_cmd->add_option("--height", tile_opt.height, "Frame height in pixels");
  tile_cmd->add_option("--image", tile_opt.image, "Read dimensions from a PNG/JPEG file");
  tile_cmd->add_option("--grid", tile_opt.grid, "Patch grid ROWSxCOLS")->capture_default_str();
  tile_cmd->add_option("--output", tile_opt.output, "Write patch rects as JSONL");

  DecideOpts decide_opt;
  CLI::App* decide_cmd = app.add_subcommand("decide", "Frame decisions from classifier outputs");
  decide_cmd->add_option("--predictions", decide_opt.predictions, "Predictions JSONL")->required();
  decide_cmd->add_option("--manifest", decide_opt.manifest, "Dataset manifest JSONL");
  decide_cmd->add_option("--rule", decide_opt.rule, "Decision rule")->capture_default_str();
  decide_cmd->add_option("--alpha", decide_opt.alpha, "Deployment threshold")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  decide_cmd->add_option("--ratio-convention", decide_opt.convention,
                         "deploy_vs_others or deploy_vs_total")->capture_default_str();
  decide_cmd->add_option("--model", decide_opt.model, "Aggregation model checkpoint");
  decide_cmd->add_option("--grid", decide_opt.grid, "Patch grid ROWSxCOLS")->capture_default_str();
  decide_cmd->add_option("--output", decide_opt.output, "Decision log JSONL")->required();

  TrainOpts train_opt;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a native head or aggregation network");
  train_cmd->add_option("--mode", train_opt.mode, "patch, frame or aggregation")
      ->capture_default_str();
  train_cmd->add_option("--features", train_opt.features, "Feature JSONL");
  train_cmd->add_option("--labels", train_opt.labels, "Pseudo-label JSONL");
  train_cmd->add_option("--manifest", train_opt.manifest, "Dataset manifest JSONL");
  train_cmd->add_option("--predictions", train_opt.predictions,
                        "Predictions JSONL (aggregation mode)");
  train_cmd->add_option("--grid", train_opt.grid, "Patch grid ROWSxCOLS")->capture_default_str();
  train_cmd->add_option("--hidden", train_opt.hidden, "Hidden layer sizes, comma separated");
  train_cmd->add_option("--epochs", train_opt.epochs, "Training epochs")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--batch-size", train_opt.batch_size, "Mini-batch size")
      ->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--learning-rate", train_opt.learning_rate, "Learning rate")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--momentum", train_opt.momentum, "Momentum in [0,1)")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  train_cmd->add_option("--gamma", train_opt.gamma, "Focal focusing parameter")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_flag("--no-class-weights", train_opt.no_class_weights,
                      "Disable inverse-frequency class weights");
  train_cmd->add_flag("--oversample", train_opt.oversample, "Weighted oversampling per epoch");
  train_cmd->add_option("--output", train_opt.output, "Model checkpoint path")->required();
  train_cmd->add_option("--loss-trace", train_opt.loss_trace, "Per-epoch loss CSV");

  PseudolabelOpts pseudo_opt;
  CLI::App* pseudo_cmd = app.add_subcommand("pseudolabel", "Generate patch labels without annotation");
  pseudo_cmd->add_option("--mode", pseudo_opt.mode, "vlm or similarity")->required();
  pseudo_cmd->add_option("--features", pseudo_opt.features, "Patch embedding JSONL");
  pseudo_cmd->add_option("--prompt-embeddings", pseudo_opt.prompt_embeddings,
                         "Class prompt embedding JSONL");
  pseudo_cmd->add_option("--patch-list", pseudo_opt.patch_list,
                         "JSONL of {frame_id, patch_index, path} patch images");
  pseudo_cmd->add_option("--endpoint", pseudo_opt.endpoint, "Chat-completions endpoint URL")
      ->capture_default_str();
  pseudo_cmd->add_option("--credential-env", pseudo_opt.credential_env,
                         "Environment variable holding the API credential")->capture_default_str();
  pseudo_cmd->add_option("--model-name", pseudo_opt.model_name, "Model name sent to the endpoint")
      ->capture_default_str();
  pseudo_cmd->add_option("--max-in-flight", pseudo_opt.max_in_flight, "Concurrent requests")
      ->check(CLI::PositiveNumber)->capture_default_str();
  pseudo_cmd->add_option("--retries", pseudo_opt.retries, "Retries per patch")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  pseudo_cmd->add_option("--backoff-ms", pseudo_opt.backoff_ms, "Base retry backoff")
      ->check(CLI::PositiveNumber)->capture_default_str();
  pseudo_cmd->add_option("--confidence-floor", pseudo_opt.confidence_floor,
                         "Reject labels below this confidence")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  pseudo_cmd->add_option("--audit", pseudo_opt.audit, "Request/response audit JSONL");
  pseudo_cmd->add_option("--output", pseudo_opt.output, "Pseudo-label JSONL")->required();
  pseudo_cmd->add_option("--rejects", pseudo_opt.rejects, "Rejected patches JSONL");

  EvalOpts eval_opt;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score predictions or decisions against labels");
  eval_cmd->add_option("--level", eval_opt.level, "patch or frame")->required();
  eval_cmd->add_option("--predictions", eval_opt.predictions, "Predictions JSONL (patch level)");
  eval_cmd->add_option("--decisions", eval_opt.decisions, "Decision log JSONL (frame level)");
  eval_cmd->add_option("--manifest", eval_opt.manifest, "Dataset manifest JSONL")->required();
  eval_cmd->add_option("--grid", eval_opt.grid, "Patch grid ROWSxCOLS")->capture_default_str();
  eval_cmd->add_option("--output", eval_opt.output, "Report JSON path");
  eval_cmd->add_option("--csv", eval_opt.csv, "Report CSV path");

  SweepOpts sweep_opt;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Precision-recall sweep over alpha");
  sweep_cmd->add_option("--predictions", sweep_opt.predictions, "Predictions JSONL")->required();
  sweep_cmd->add_option("--manifest", sweep_opt.manifest, "Dataset manifest JSONL")->required();
  sweep_cmd->add_option("--rule", sweep_opt.rule, "Decision rule")->capture_default_str();
  sweep_cmd->add_option("--alphas", sweep_opt.alphas, "Alpha values, comma separated ascending")
      ->capture_default_str();
  sweep_cmd->add_option("--ratio-convention", sweep_opt.convention,
                        "deploy_vs_others or deploy_vs_total")->capture_default_str();
  sweep_cmd->add_option("--model", sweep_opt.model, "Aggregation model checkpoint");
  sweep_cmd->add_option("--grid", sweep_opt.grid, "Patch grid ROWSxCOLS")->capture_default_str();
  sweep_cmd->add_option("--output", sweep_opt.output, "PR curve CSV")->required();

  MapOpts map_opt;
  CLI::App* map_cmd = app.add_subcommand("map", "Export a GeoJSON deployment track");
  map_cmd->add_option("--decisions", map_opt.decisions, "Decision log JSONL")->required();
  map_cmd->add_option("--manifest", map_opt.manifest, "Dataset manifest JSONL")->required();
  map_cmd->add_option("--grid", map_opt.grid, "Patch grid ROWSxCOLS")->capture_default_str();
  map_cmd->add_option("--output", map_opt.output, "GeoJSON path")->required();
  map_cmd->add_option("--csv", map_opt.csv, "CSV track path");

  SimulateOpts sim_opt;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Replay a manifest through the live pipeline");
  sim_cmd->add_option("--manifest", sim_opt.manifest, "Dataset manifest JSONL")->required();
  sim_cmd->add_option("--backend", sim_opt.backend, "mock, predictions or native")
      ->capture_default_str();
  sim_cmd->add_option("--predictions", sim_opt.predictions, "Predictions JSONL");
  sim_cmd->add_option("--model", sim_opt.model, "Native model checkpoint");
  sim_cmd->add_option("--features", sim_opt.features, "Feature JSONL for the native backend");
  sim_cmd->add_option("--rule", sim_opt.rule, "Decision rule")->capture_default_str();
  sim_cmd->add_option("--alpha", sim_opt.alpha, "Deployment threshold")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sim_cmd->add_option("--ratio-convention", sim_opt.convention,
                      "deploy_vs_others or deploy_vs_total")->capture_default_str();
  sim_cmd->add_option("--agg-model", sim_opt.agg_model, "Aggregation model checkpoint");
  sim_cmd->add_option("--grid", sim_opt.grid, "Patch grid ROWSxCOLS")->capture_default_str();
  sim_cmd->add_option("--fps", sim_opt.fps, "Capture rate")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--drop-policy", sim_opt.drop_policy, "latest_wins or process_all")
      ->capture_default_str();
  sim_cmd->add_option("--queue-capacity", sim_opt.queue_capacity, "Pending frame capacity")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--duration-s", sim_opt.duration_s, "Stop offering frames after this long");
  sim_cmd->add_option("--frame-budget", sim_opt.frame_budget, "Stop after this many frames");
  sim_cmd->add_option("--delay-ms", sim_opt.delay_ms, "Artificial per-frame backend delay");
  sim_cmd->add_flag("--virtual-clock", sim_opt.virtual_clock,
                    "Run on the simulated clock instead of wall time");
  sim_cmd->add_option("--output", sim_opt.output, "Streamed decision log JSONL");
  sim_cmd->add_option("--timing", sim_opt.timing, "Timing summary JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (tile_cmd->parsed()) return cmd_tile(tile_opt, global);
    if (decide_cmd->parsed()) return cmd_decide(decide_opt, global);
    if (train_cmd->parsed()) return cmd_train(train_opt, global);
    if (pseudo_cmd->parsed()) return cmd_pseudolabel(pseudo_opt, global);
    if (eval_cmd->parsed()) return cmd_eval(eval_opt, global);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_opt, global);
    if (map_cmd->parsed()) return cmd_map(map_opt, global);
    if (sim_cmd->parsed()) return cmd_simulate(sim_opt, global);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
