// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// JSON-over-HTTP deblocking service. `Service::handle` is transport-free so it
// can be exercised directly; `serve` binds it to an HTTP listener.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <iostream>
#include <memory>
#include <string>

#include "json.hpp"
#include "tgjar/core/digest.hpp"
#include "tgjar/core/error.hpp"
#include "tgjar/data/image_io.hpp"
#include "tgjar/metrics/psnr.hpp"
#include "tgjar/model/inference.hpp"

// After Eigen: <resolv.h> (pulled in here) defines a `_res` macro.
#include "httplib.h"

namespace tgjar::app {

inline constexpr std::size_t kMaxRequestBytes = 16u << 20;

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

namespace detail {

// Client-side problem with the request; carries the HTTP status to report.
struct RequestError : Error {
  int status;
  RequestError(int s, const std::string& what) : Error(what), status(s) {}
};

inline std::string strip_data_url(const std::string& s) {
  const auto comma = s.find(',');
  if (s.starts_with("data:") && comma != std::string::npos) return s.substr(comma + 1);
  return s;
}

inline Image<float> decode_field(const nlohmann::json& body, const char* key) {
  if (!body.contains(key) || !body.at(key).is_string()) {
    throw RequestError(400, std::string("field '") + key + "' must be a base64 PNG string");
  }
  std::string bytes;
  try {
    bytes = base64_decode(strip_data_url(body.at(key).get<std::string>()));
  } catch (const DomainError& e) {
    throw RequestError(400, std::string("field '") + key + "': " + e.what());
  }
  try {
    return data::decode_image<float>(bytes);
  } catch (const LoadError& e) {
    throw RequestError(422, std::string("field '") + key + "' is not a decodable image: " + e.what());
  }
}

inline jpeg::QualityFactor read_qf(const nlohmann::json& body) {
  const auto& v = body.at("qf");
  if (!v.is_number_integer()) throw RequestError(400, "field 'qf' must be an integer");
  try {
    return jpeg::QualityFactor(v.get<int>());
  } catch (const DomainError& e) {
    throw RequestError(400, e.what());
  }
}

inline std::string png_b64(const Image<float>& img) { return base64_encode(data::encode_png(img)); }

}  // namespace detail

class Service {
 public:
  explicit Service(model::LoadedModel model)
      : model_(std::move(model)), perceptual_(model::perceptual_for(model_)) {}

  const model::LoadedModel& model() const { return model_; }

  // Routes one request. `attention` mirrors the ?attention=1 query flag.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body,
                      bool attention = false) const {
    try {
      if (body.size() > kMaxRequestBytes) throw detail::RequestError(413, "request body exceeds 16 MB");
      if (path == "/api/info") {
        if (method != "GET") throw detail::RequestError(405, "use GET for /api/info");
        return ok(info());
      }
      if (path == "/api/degrade" || path == "/api/deblock") {
        if (method != "POST") throw detail::RequestError(405, "use POST for " + path);
        const nlohmann::json req = parse(body);
        return ok(path == "/api/degrade" ? degrade(req) : deblock(req, attention));
      }
      throw detail::RequestError(404, "no such endpoint: " + path);
    } catch (const detail::RequestError& e) {
      return error(e.status, e.what());
    } catch (const std::exception& e) {
      return internal_error(e.what());
    }
  }

  nlohmann::json info() const {
    return {{"model_config", model_.config},
            {"config_hash", model_.config_hash},
            {"vocab_size", model_.vocab.size()},
            {"checkpoint_hash", model_.file_hash},
            {"step", model_.meta.value("step", 0)}};
  }

  nlohmann::json degrade(const nlohmann::json& req) const {
    const Image<float> img = detail::decode_field(req, "image");
    if (!req.contains("qf")) throw detail::RequestError(400, "field 'qf' is required");
    const Image<float> c = model::degrade_any_size(img, detail::read_qf(req));
    return {{"compressed", detail::png_b64(c)}, {"width", c.dim(2)}, {"height", c.dim(1)}};
  }

  nlohmann::json deblock(const nlohmann::json& req, bool attention) const {
    if (req.contains("checkpoint_id") && !req.at("checkpoint_id").is_null()) {
      const auto& id = req.at("checkpoint_id");
      if (!id.is_string() || (id.get<std::string>() != model_.file_hash && id.get<std::string>() != model_.config_hash)) {
        throw detail::RequestError(400, "checkpoint_id does not name the loaded checkpoint");
      }
    }
    if (!req.contains("caption") || !req.at("caption").is_string()) {
      throw detail::RequestError(400, "field 'caption' must be a string");
    }
    model::Caption caption;
    try {
      caption = model_.vocab.encode(req.at("caption").get<std::string>(), model_.config.text.max_len);
    } catch (const DomainError&) {
      throw detail::RequestError(422, "caption is empty");
    }
    const Image<float> input = data::quantize_8bit(detail::decode_field(req, "image"));
    const bool degrade_first = req.contains("qf") && !req.at("qf").is_null();
    const Image<float> compressed = degrade_first ? model::degrade_any_size(input, detail::read_qf(req)) : input;

    const model::DeblockResult r = model::deblock(model_, compressed, caption, attention);
    nlohmann::json out = {{"deblocked", detail::png_b64(r.image)},
                          {"compressed", detail::png_b64(compressed)},
                          {"width", compressed.dim(2)},
                          {"height", compressed.dim(1)},
                          {"tokens", token_strings(caption)}};
    if (req.contains("reference") && !req.at("reference").is_null()) {
      const Image<float> ref = data::quantize_8bit(detail::decode_field(req, "reference"));
      if (ref.shape() != compressed.shape()) throw detail::RequestError(400, "reference size differs from image size");
      out["metrics"] = {{"psnr_compressed", metrics::psnr_report(ref, compressed)},
                        {"psnr_deblocked", metrics::psnr_report(ref, r.image)},
                        {"perceptual_compressed", metrics::perceptual_distance(perceptual_, ref, compressed)},
                        {"perceptual_deblocked", metrics::perceptual_distance(perceptual_, ref, r.image)}};
    }
    if (attention) out["attention"] = attention_json(r, caption);
    return out;
  }

 private:
  static nlohmann::json parse(const std::string& body) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw detail::RequestError(400, "request body must be a JSON object");
    return j;
  }

  static HttpResponse ok(const nlohmann::json& j) { return {200, j.dump()}; }

  static HttpResponse error(int status, const std::string& message) {
    return {status, nlohmann::json{{"error", message}}.dump()};
  }

  // Details go to stderr under an id; the client only sees the id.
  HttpResponse internal_error(const std::string& what) const {
    const auto now = std::chrono::steady_clock::now().time_since_epoch().count();
    const std::string id = sha256_hex(std::to_string(now) + ":" + std::to_string(++errors_)).substr(0, 12);
    std::cerr << nlohmann::json{{"level", "error"}, {"error_id", id}, {"message", what}}.dump() << '\n';
    return {500, nlohmann::json{{"error", "internal error"}, {"error_id", id}}.dump()};
  }

  std::vector<std::string> token_strings(const model::Caption& c) const {
    std::vector<std::string> out;
    for (std::size_t id : c.tokens) out.push_back(model_.vocab.token(id));
    return out;
  }

  // One grayscale PNG per word and stage, each scaled to its own maximum.
  nlohmann::json attention_json(const model::DeblockResult& r, const model::Caption& caption) const {
    const auto words = token_strings(caption);
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& st : r.attention) {
      nlohmann::json maps = nlohmann::json::array();
      const std::size_t hw = st.height * st.width;
      for (std::size_t t = 0; t < st.maps.dim(0); ++t) {
        Tensor<float> m({st.height, st.width});
        float peak = 0;
        for (std::size_t i = 0; i < hw; ++i) peak = std::max(peak, st.maps[t * hw + i]);
        for (std::size_t i = 0; i < hw; ++i) m[i] = peak > 0 ? st.maps[t * hw + i] / peak : 0.0f;
        maps.push_back({{"word", words.at(t)}, {"png", base64_encode(data::encode_gray_png(m))}});
      }
      stages.push_back({{"height", st.height}, {"width", st.width}, {"maps", std::move(maps)}});
    }
    return stages;
  }

  model::LoadedModel model_;
  metrics::PerceptualExtractor<float> perceptual_;
  mutable std::atomic<std::uint64_t> errors_{0};
};

// HTTP listener routing the API endpoints to `service`, which must outlive it.
inline std::unique_ptr<httplib::Server> make_server(const Service& service) {
  auto server = std::make_unique<httplib::Server>();
  server->set_payload_max_length(kMaxRequestBytes);
  auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = service.handle(req.method, req.path, req.body, req.get_param_value("attention") == "1");
    res.status = r.status;
    res.set_content(r.body, r.content_type);
    res.set_header("Access-Control-Allow-Origin", "*");
  };
  server->Get("/api/info", bridge);
  server->Post("/api/degrade", bridge);
  server->Post("/api/deblock", bridge);
  server->Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.status = 204;
  });
  return server;
}

// Blocks serving on host:port; returns false when the port cannot be bound.
inline bool serve(const Service& service, const std::string& host, int port, std::ostream& log = std::cerr) {
  auto server = make_server(service);
  if (!server->bind_to_port(host, port)) return false;
  log << nlohmann::json{{"level", "info"}, {"message", "listening"}, {"host", host}, {"port", port}}.dump() << '\n';
  return server->listen_after_bind();
}

}  // namespace tgjar::app
