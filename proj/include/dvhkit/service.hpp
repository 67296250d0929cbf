#pragma once

// JSON-over-HTTP prediction API. Routing is separate from the socket layer
// so tests can drive handle() directly.

#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "dvhkit/pipeline.hpp"

namespace dvhkit {

struct HttpResponse {
  int status = 200;
  std::string body;
};

class PredictionService {
 public:
  /// The bundle is copied in and never mutated afterwards; handle() is
  /// safe to call from several threads.
  PredictionService(ModelBundle bundle, std::map<Organ, ConfidenceBand> bands, ConstraintSet constraints);
  explicit PredictionService(ModelBundle bundle);

  PredictionService(const PredictionService&) = delete;
  PredictionService& operator=(const PredictionService&) = delete;

  HttpResponse handle(std::string_view method, std::string_view path, std::string_view body) const;

  ~PredictionService();

  /// Binds the listening socket; port 0 picks a free one. Returns the bound
  /// port, or -1 on failure.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop(). False if nothing is bound.
  bool run();
  /// bind + run.
  bool serve(const std::string& host, int port);
  /// Safe from another thread once bind() has returned.
  void stop();

  const PredictionContext& context() const noexcept { return context_; }

 private:
  std::string models_json() const;
  std::string constraints_json() const;

  ModelBundle bundle_;
  PredictionContext context_;
  struct Server;
  std::unique_ptr<Server> server_;
};

}  // namespace dvhkit
