#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "reefdeploy/jsonl.hpp"
#include "reefdeploy/pseudolabel.hpp"

namespace reefdeploy {

struct VlmClientConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
  std::string model = "gpt-4o";
  // Name of the environment variable holding the bearer credential.
  std::string credential_env = "VLM_API_KEY";
  int max_in_flight = 4;
  // Extra attempts after the first, for transport errors, HTTP 429/5xx and
  // unparseable replies.
  int retries = 2;
  int backoff_ms = 250;
  // Labels below this confidence are rejected rather than emitted.
  double confidence_floor = 0.0;
  int timeout_s = 60;
};

inline void validate(const VlmClientConfig& cfg) {
  if (cfg.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be at least 1");
  if (cfg.retries < 0) throw std::invalid_argument("retries must be non-negative");
  if (cfg.backoff_ms < 1) throw std::invalid_argument("backoff_ms must be positive");
  if (!(cfg.confidence_floor >= 0.0 && cfg.confidence_floor <= 1.0)) {
    throw std::invalid_argument("confidence_floor must be in [0,1]");
  }
}

// One patch crop to be labeled, as encoded image bytes.
struct PatchImage {
  std::string frame_id;
  int patch_index = 0;
  std::string bytes;
  std::string mime = "image/jpeg";
};

struct ChatResponse {
  int status = 0;
  std::string body;
};

// Transport seam: production uses HTTP, tests substitute a canned one.
// send() must be safe to call from several threads at once.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual ChatResponse send(const json& request_body) = 0;
};

struct VlmReject {
  std::string frame_id;
  int patch_index = 0;
  std::string reason;
};

struct VlmRun {
  std::vector<PseudoLabel> labels;
  std::vector<VlmReject> rejects;
  std::uint64_t requests_sent = 0;
  std::uint64_t retries_used = 0;
};

namespace detail {

inline std::string base64_encode(const std::string& data) {
  static const char* table = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve(((data.size() + 2) / 3) * 4);
  std::size_t i = 0;
  for (; i + 3 <= data.size(); i += 3) {
    const std::uint32_t n = (static_cast<std::uint8_t>(data[i]) << 16) |
                            (static_cast<std::uint8_t>(data[i + 1]) << 8) |
                            static_cast<std::uint8_t>(data[i + 2]);
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += table[(n >> 6) & 63];
    out += table[n & 63];
  }
  const std::size_t rest = data.size() - i;
  if (rest == 1) {
    const std::uint32_t n = static_cast<std::uint8_t>(data[i]) << 16;
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t n = (static_cast<std::uint8_t>(data[i]) << 16) |
                            (static_cast<std::uint8_t>(data[i + 1]) << 8);
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += table[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

}  // namespace detail

// Chat-completions request for one patch: the fixed instruction text plus
// the patch image as a base64 data URL, temperature 0.
inline json build_chat_request(const PatchImage& patch, const VlmClientConfig& cfg) {
  const std::string data_url =
      "data:" + patch.mime + ";base64," + detail::base64_encode(patch.bytes);
  return json{
      {"model", cfg.model},
      {"temperature", 0},
      {"messages",
       json::array({json{{"role", "user"},
                         {"content", json::array({json{{"type", "text"}, {"text", build_prompt()}},
                                                  json{{"type", "image_url"},
                                                       {"image_url", json{{"url", data_url}}}}})}}})}};
}

// choices[0].message.content of a chat-completions reply.
inline std::string extract_chat_content(const std::string& body) {
  const json obj = json::parse(body, nullptr, false);
  if (obj.is_discarded()) throw std::runtime_error("response body is not JSON");
  try {
    return obj.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw std::runtime_error("response body lacks choices[0].message.content");
  }
}

// Labels every patch through the transport, at most max_in_flight requests
// in flight, retrying transient failures with exponential backoff. Every
// input patch lands in exactly one of labels or rejects, in input order.
inline VlmRun label_patches_vlm(
    ChatTransport& transport, std::span<const PatchImage> patches, const VlmClientConfig& cfg,
    const std::function<void(const json&)>& audit = {}) {
  validate(cfg);

  struct Slot {
    std::optional<PseudoLabel> label;
    std::optional<VlmReject> reject;
  };
  std::vector<Slot> slots(patches.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::uint64_t> requests{0};
  std::atomic<std::uint64_t> retries_used{0};
  std::mutex audit_mu;

  auto work = [&]() {
    for (std::size_t i = next.fetch_add(1); i < patches.size(); i = next.fetch_add(1)) {
      const PatchImage& patch = patches[i];
      const json request = build_chat_request(patch, cfg);
      std::string failure;
      for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
        if (attempt > 0) {
          retries_used.fetch_add(1);
          const auto delay = std::chrono::milliseconds(cfg.backoff_ms) * (1 << (attempt - 1));
          std::this_thread::sleep_for(std::min(delay, std::chrono::milliseconds(10000)));
        }
        ChatResponse response;
        requests.fetch_add(1);
        try {
          response = transport.send(request);
        } catch (const std::exception& e) {
          failure = std::string("transport error: ") + e.what();
          continue;
        }
        if (audit) {
          std::lock_guard<std::mutex> lock(audit_mu);
          audit(json{{"frame_id", patch.frame_id},
                     {"patch_index", patch.patch_index},
                     {"attempt", attempt},
                     {"status", response.status},
                     {"body", response.body}});
        }
        if (response.status == 429 || response.status >= 500) {
          failure = "HTTP " + std::to_string(response.status);
          continue;
        }
        if (response.status == 401 || response.status == 403) {
          failure = "authorization failed (HTTP " + std::to_string(response.status) + ")";
          break;
        }
        if (response.status != 200) {
          failure = "HTTP " + std::to_string(response.status);
          break;
        }
        try {
          const std::string content = extract_chat_content(response.body);
          const ParsedResponse parsed = parse_response(content);
          if (parsed.confidence < cfg.confidence_floor) {
            slots[i].reject = VlmReject{patch.frame_id, patch.patch_index,
                                        "confidence " + std::to_string(parsed.confidence) +
                                            " below floor " + std::to_string(cfg.confidence_floor)};
          } else {
            slots[i].label = PseudoLabel{patch.frame_id, patch.patch_index, parsed.label,
                                         parsed.confidence, LabelSource::ChatVlm, content};
          }
          failure.clear();
          break;
        } catch (const ResponseParseError& e) {
          failure = e.what();
          continue;
        } catch (const std::exception& e) {
          failure = e.what();
          continue;
        }
      }
      if (!slots[i].label && !slots[i].reject) {
        slots[i].reject = VlmReject{patch.frame_id, patch.patch_index,
                                    "gave up after " + std::to_string(cfg.retries + 1) +
                                        " attempts: " + failure};
      }
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.max_in_flight), std::max<std::size_t>(patches.size(), 1));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();

  VlmRun run;
  run.requests_sent = requests.load();
  run.retries_used = retries_used.load();
  for (Slot& slot : slots) {
    if (slot.label) {
      run.labels.push_back(std::move(*slot.label));
    } else {
      run.rejects.push_back(std::move(*slot.reject));
    }
  }
  return run;
}

}  // namespace reefdeploy
