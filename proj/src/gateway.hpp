#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "budget.hpp"
#include "error.hpp"
#include "profile_store.hpp"
#include "selector.hpp"

namespace cnnselect {

/// A request body failed validation; `field` names the offending member.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message)
      : Error(ErrorCode::validation, "field '" + field + "': " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct ExecResult {
  double exec_ms = 0.0;
  std::string label;
};

/// Executes an inference on one hosted model. The gateway never holds a
/// store lock while a backend runs.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual ExecResult execute(const ModelProfile& model, std::uint64_t payload_bytes, Rng& rng) = 0;
};

/// Sleeps for a time drawn from the model's profile (scaled by time_scale)
/// and returns a label derived from the model name and payload size.
class MockBackend : public ModelBackend {
 public:
  explicit MockBackend(double time_scale = 1.0) : time_scale_(time_scale) {}
  ExecResult execute(const ModelProfile& model, std::uint64_t payload_bytes, Rng& rng) override;

 private:
  double time_scale_;
};

struct GatewayConfig {
  std::uint64_t seed = 0;
  bool test_mode = false;        // per-request generators derive from (seed, counter)
  bool freeze_profiles = false;  // skip observe() after execution
  bool allow_create = true;      // PUT of an unknown model creates it, else 409
  double device_time_ms = 200.0;
  double threshold_ms = 30.0;
  SelectorConfig selector;
  NetworkProfile network{"default", 0.0, 63.0 / 330.0, {}};
  double network_alpha = 0.2;
  unsigned http_threads = 16;
};

struct InferenceRequest {
  double sla_ms = 0.0;
  std::uint64_t payload_bytes = 0;
  std::optional<double> t_input_ms;
  std::optional<double> threshold_ms;
};

/// Throws ValidationError naming the first bad field.
InferenceRequest parse_inference_request(const nlohmann::json& body);

struct InferenceResponse {
  std::string model;
  std::string label;
  SelectionDecision decision;
  double t_input_est_ms = 0.0;
  double exec_ms = 0.0;
  double server_ms = 0.0;
  bool sla_met_server_side = false;
};

nlohmann::json to_json(const InferenceResponse& response);

class Gateway {
 public:
  Gateway(GatewayConfig cfg, std::shared_ptr<ProfileStore> store,
          std::unique_ptr<ModelBackend> backend = std::make_unique<MockBackend>());
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Throws Error(no_models) when the store is empty, ValidationError on a
  /// threshold outside [0, device_time_ms].
  InferenceResponse handle_infer(const InferenceRequest& request);

  std::vector<ModelProfile> list_models() const;

  /// Upserts from a profile-file record (percent accuracies). Missing fields
  /// keep their current values for existing models. Returns the stored
  /// profile and whether it was created. Throws Error(conflict) for unknown
  /// models when creation is disabled.
  std::pair<ModelProfile, bool> put_profile(const std::string& name, const nlohmann::json& fields);

  /// `name value` per line.
  std::string metrics_text() const;

  /// Starts serving in a background thread; returns the bound port
  /// (pass 0 for an ephemeral one). Throws Error(io) when binding fails.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  ProfileStore& store() { return *store_; }
  NetworkEstimator& network() { return network_; }

 private:
  struct Metrics;
  struct Http;

  Rng request_rng();
  void record(const InferenceResponse& response);
  void setup_routes();

  GatewayConfig cfg_;
  std::shared_ptr<ProfileStore> store_;
  std::unique_ptr<ModelBackend> backend_;
  NetworkEstimator network_;
  std::atomic<std::uint64_t> counter_{0};
  std::unique_ptr<Metrics> metrics_;
  std::unique_ptr<Http> http_;
  std::thread server_thread_;
};

}  // namespace cnnselect
