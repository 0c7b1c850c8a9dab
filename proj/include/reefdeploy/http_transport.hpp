#pragma once

#include <cstdlib>
#include <stdexcept>
#include <string>

#include <httplib.h>

#include "reefdeploy/vlm_client.hpp"

namespace reefdeploy {

// HTTP implementation of ChatTransport. The bearer credential is read from
// the configured environment variable at construction and sent only as a
// request header; it never appears in request bodies or audit output.
class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(const VlmClientConfig& cfg) : timeout_s_(cfg.timeout_s) {
    const std::string& url = cfg.endpoint;
    const std::string scheme_sep = "://";
    const std::size_t scheme_end = url.find(scheme_sep);
    if (scheme_end == std::string::npos) {
      throw std::invalid_argument("endpoint must be an http URL: " + url);
    }
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http") {
      throw std::invalid_argument("unsupported endpoint scheme '" + scheme +
                                  "' (only plain http is built in)");
    }
    const std::size_t host_start = scheme_end + scheme_sep.size();
    const std::size_t path_start = url.find('/', host_start);
    base_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);

    const char* credential = std::getenv(cfg.credential_env.c_str());
    if (credential == nullptr || *credential == '\0') {
      throw std::runtime_error("credential environment variable not set: " + cfg.credential_env);
    }
    bearer_ = credential;
  }

  ChatResponse send(const json& request_body) override {
    httplib::Client client(base_);
    client.set_connection_timeout(timeout_s_, 0);
    client.set_read_timeout(timeout_s_, 0);
    httplib::Headers headers{{"Authorization", "Bearer " + bearer_}};
    const httplib::Result result =
        client.Post(path_, headers, request_body.dump(), "application/json");
    if (!result) {
      throw std::runtime_error("request to " + base_ + path_ +
                               " failed: " + httplib::to_string(result.error()));
    }
    return ChatResponse{result->status, result->body};
  }

 private:
  std::string base_;
  std::string path_;
  std::string bearer_;
  int timeout_s_;
};

}  // namespace reefdeploy
