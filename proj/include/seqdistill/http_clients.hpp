// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "seqdistill/common.hpp"
#include "seqdistill/encoder.hpp"
#include "seqdistill/profile.hpp"

namespace seqdistill {

struct EndpointOptions {
  std::string endpoint;  // e.g. http://host:8080/v1/chat/completions
  std::string model_id;
  std::string auth_env;  // environment variable holding the bearer token
  int timeout_ms = 30000;
};

namespace detail {

struct ParsedUrl {
  std::string host_port;  // scheme://host:port
  std::string path;
};

inline ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL missing scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline httplib::Headers auth_headers(const std::string& auth_env) {
  httplib::Headers headers;
  if (!auth_env.empty()) {
    if (const char* token = std::getenv(auth_env.c_str()); token && *token) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  return headers;
}

inline nlohmann::json post_json(const EndpointOptions& opts, const nlohmann::json& body) {
  const ParsedUrl url = parse_url(opts.endpoint);
  httplib::Client cli(url.host_port);
  cli.set_connection_timeout(0, opts.timeout_ms * 1000);
  cli.set_read_timeout(opts.timeout_ms / 1000, (opts.timeout_ms % 1000) * 1000);
  auto res = cli.Post(url.path, auth_headers(opts.auth_env), body.dump(), "application/json");
  if (!res) throw ServiceError("request to " + opts.endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw ServiceError("endpoint " + opts.endpoint + " returned HTTP " + std::to_string(res->status));
  const auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded()) throw ServiceError("endpoint returned invalid JSON");
  return j;
}

}  // namespace detail

// Chat-completion client speaking the common `{"model", "messages"}` /
// `choices[0].message.content` shape. Auth token comes from the environment,
// never from config files.
class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(EndpointOptions opts) : opts_(std::move(opts)) {
    if (opts_.endpoint.empty()) throw ConfigError("LLM endpoint is empty");
    if (opts_.model_id.empty()) opts_.model_id = "gemma-2-9b-it";
  }

  std::string generator_id() const override { return opts_.model_id; }

  std::string complete(const std::string& prompt) override {
    const nlohmann::json body{{"model", opts_.model_id},
                              {"messages", {{{"role", "user"}, {"content", prompt}}}}};
    const auto j = detail::post_json(opts_, body);
    try {
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ServiceError("chat completion response missing choices[0].message.content");
    }
  }

 private:
  EndpointOptions opts_;
};

// Embedding client speaking `{"model", "input"}` / `data[0].embedding`.
class HttpTextEncoder : public TextEncoder {
 public:
  HttpTextEncoder(EndpointOptions opts, int output_dim) : opts_(std::move(opts)), dim_(output_dim) {
    if (opts_.endpoint.empty()) throw ConfigError("encoder endpoint is empty");
    if (opts_.model_id.empty()) opts_.model_id = "multilingual-e5-large";
    if (dim_ < 1) throw ConfigError("encoder output_dim must be positive");
  }

  std::string encoder_id() const override { return opts_.model_id; }
  int output_dim() const override { return dim_; }

  Vector encode(const std::string& text) override {
    const nlohmann::json body{{"model", opts_.model_id}, {"input", text}};
    const auto j = detail::post_json(opts_, body);
    std::vector<double> values;
    try {
      values = j.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw ServiceError("embedding response missing data[0].embedding");
    }
    if (static_cast<int>(values.size()) != dim_)
      throw ServiceError("embedding has dimension " + std::to_string(values.size()) + ", expected " +
                         std::to_string(dim_));
    Vector v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = values[static_cast<std::size_t>(i)];
    return v;
  }

 private:
  EndpointOptions opts_;
  int dim_;
};

}  // namespace seqdistill
