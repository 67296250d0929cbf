#include "dvhkit/service.hpp"

#include "httplib.h"
#include "json.hpp"

#include "dvhkit/error.hpp"
#include "dvhkit/version.hpp"

namespace dvhkit {

using json = nlohmann::ordered_json;

namespace {

HttpResponse error_response(int status, ErrorCode code, const std::string& message) {
  json j;
  j["error"] = std::string(to_string(code));
  j["message"] = message;
  return {status, j.dump()};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownAlgorithm: return 404;
    case ErrorCode::InvalidFeatures:
    case ErrorCode::InvalidConfig: return 400;
    default: return 500;
  }
}

}  // namespace

PredictionService::PredictionService(ModelBundle bundle, std::map<Organ, ConfidenceBand> bands,
                                     ConstraintSet constraints)
    : bundle_(std::move(bundle)), context_(bundle_) {
  // band files given on the command line replace the bundle's own
  for (auto& [organ, band] : bands) context_.bands[organ] = std::move(band);
  context_.constraints = std::move(constraints);
}

PredictionService::PredictionService(ModelBundle bundle) : bundle_(std::move(bundle)), context_(bundle_) {}

std::string PredictionService::models_json() const {
  json root;
  root["version"] = kVersion;
  root["format_version"] = bundle_.format_version;
  root["fingerprint"] = bundle_.fingerprint;
  root["created_at"] = bundle_.created_at;
  root["seed"] = bundle_.seed;
  json organs = json::object();
  for (const auto organ : kOrgans) {
    auto list = json::array();
    for (const auto id : bundle_.algorithms(organ)) {
      json entry;
      entry["algorithm"] = std::string(to_string(id));
      if (is_ensemble(id)) {
        auto members = json::array();
        for (const auto m : bundle_.ensembles.at({id, organ})) members.push_back(std::string(to_string(m)));
        entry["members"] = members;
      } else {
        json hp = json::object();
        for (const auto& [k, v] : bundle_.find(id, organ)->hyperparams) hp[k] = v;
        entry["hyperparams"] = hp;
      }
      list.push_back(entry);
    }
    organs[std::string(to_string(organ))] = list;
  }
  root["organs"] = organs;
  return root.dump();
}

std::string PredictionService::constraints_json() const {
  json root = json::object();
  for (const auto organ : kOrgans) {
    auto list = json::array();
    const auto it = context_.constraints.per_organ.find(organ);
    if (it != context_.constraints.per_organ.end()) {
      for (const auto& c : it->second) list.push_back({{"dose_cgy", c.dose_cgy}, {"max_volume_pct", c.max_volume_pct}});
    }
    root[std::string(to_string(organ))] = list;
  }
  return root.dump();
}

HttpResponse PredictionService::handle(std::string_view method, std::string_view path, std::string_view body) const {
  try {
    if (path == "/api/health") {
      if (method != "GET") return error_response(405, ErrorCode::InvalidConfig, "use GET");
      return {200, json{{"status", "ok"}, {"version", kVersion}}.dump()};
    }
    if (path == "/api/models") {
      if (method != "GET") return error_response(405, ErrorCode::InvalidConfig, "use GET");
      return {200, models_json()};
    }
    if (path == "/api/constraints") {
      if (method != "GET") return error_response(405, ErrorCode::InvalidConfig, "use GET");
      return {200, constraints_json()};
    }
    if (path == "/api/predict") {
      if (method != "POST") return error_response(405, ErrorCode::InvalidConfig, "use POST");
      return {200, predict_json(context_, parse_predict_request(body))};
    }
    return error_response(404, ErrorCode::InvalidConfig, "no route " + std::string(path));
  } catch (const Error& e) {
    return error_response(status_for(e.code()), e.code(), e.what());
  } catch (const std::exception& e) {
    return error_response(500, ErrorCode::Io, e.what());
  }
}

struct PredictionService::Server {
  httplib::Server http;
  bool bound = false;
};

PredictionService::~PredictionService() = default;

int PredictionService::bind(const std::string& host, int port) {
  server_ = std::make_unique<Server>();
  auto& http = server_->http;
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const auto out = handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  http.Get(R"(/api/.*)", route);
  http.Post(R"(/api/.*)", route);
  // the dashboard may be served from another origin
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  int bound = -1;
  if (port == 0) {
    bound = http.bind_to_any_port(host);
  } else if (http.bind_to_port(host, port)) {
    bound = port;
  }
  server_->bound = bound > 0;
  return server_->bound ? bound : -1;
}

bool PredictionService::run() {
  if (!server_ || !server_->bound) return false;
  return server_->http.listen_after_bind();
}

bool PredictionService::serve(const std::string& host, int port) { return bind(host, port) > 0 && run(); }

void PredictionService::stop() {
  if (server_) server_->http.stop();
}

}  // namespace dvhkit
