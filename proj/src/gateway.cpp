#include "gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

#include <httplib.h>

#include "random.hpp"

namespace cnnselect {

namespace {

using nlohmann::json;

constexpr const char* kLabels[] = {
    "n01440764 tench",         "n01530575 brambling",   "n02085620 chihuahua",
    "n02123045 tabby cat",     "n02504458 elephant",    "n03028079 church",
    "n03417042 garbage truck", "n03888257 parachute",   "n04037443 racer",
    "n07747607 orange",        "n07753592 banana",      "n09472597 volcano"};

std::uint64_t fnv1a(std::string_view text, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const double pos = q * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, samples.size() - 1);
  return samples[lo] + (pos - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

std::string metric_number(double v) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << v;
  return out.str();
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation:
    case ErrorCode::domain:
    case ErrorCode::parse: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict:
    case ErrorCode::duplicate_name: return 409;
    case ErrorCode::no_models:
    case ErrorCode::estimation_unavailable: return 503;
    default: return 500;
  }
}

}  // namespace

ExecResult MockBackend::execute(const ModelProfile& model, std::uint64_t payload_bytes, Rng& rng) {
  std::normal_distribution<double> normal(model.mean_ms, model.std_ms);
  double exec = model.mean_ms;
  if (model.std_ms > 0.0) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      exec = normal(rng);
      if (exec > 0.0) break;
    }
    if (exec <= 0.0) exec = model.mean_ms;
  }
  if (time_scale_ > 0.0) {
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(exec * time_scale_));
  }
  const auto hash = fnv1a(std::to_string(payload_bytes), fnv1a(model.name));
  return ExecResult{exec, kLabels[hash % std::size(kLabels)]};
}

InferenceRequest parse_inference_request(const json& body) {
  if (!body.is_object()) throw ValidationError("body", "must be a JSON object");
  for (const auto& [key, _] : body.items()) {
    if (key != "sla_ms" && key != "payload_bytes" && key != "t_input_ms" && key != "threshold_ms")
      throw ValidationError(key, "unknown field");
  }
  InferenceRequest req;
  auto it = body.find("sla_ms");
  if (it == body.end()) throw ValidationError("sla_ms", "is required");
  if (!it->is_number()) throw ValidationError("sla_ms", "must be a number");
  req.sla_ms = it->get<double>();
  if (!(req.sla_ms > 0.0) || !std::isfinite(req.sla_ms))
    throw ValidationError("sla_ms", "must be > 0");

  it = body.find("payload_bytes");
  if (it != body.end()) {
    if (!it->is_number_integer() || (!it->is_number_unsigned() && it->get<std::int64_t>() < 0))
      throw ValidationError("payload_bytes", "must be a non-negative integer");
    req.payload_bytes = it->get<std::uint64_t>();
  }
  for (const char* key : {"t_input_ms", "threshold_ms"}) {
    it = body.find(key);
    if (it == body.end() || it->is_null()) continue;
    if (!it->is_number()) throw ValidationError(key, "must be a number");
    const double v = it->get<double>();
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(key, "must be >= 0");
    (std::string_view(key) == "t_input_ms" ? req.t_input_ms : req.threshold_ms) = v;
  }
  return req;
}

json to_json(const InferenceResponse& r) {
  return json{{"model", r.model},
              {"label", r.label},
              {"decision", to_json(r.decision)},
              {"timings",
               {{"t_input_est_ms", r.t_input_est_ms},
                {"exec_ms", r.exec_ms},
                {"server_ms", r.server_ms}}},
              {"sla_met_server_side", r.sla_met_server_side}};
}

struct Gateway::Metrics {
  static constexpr std::size_t kWindow = 4096;

  struct PerModel {
    std::uint64_t requests = 0;
    std::uint64_t misses = 0;
    std::deque<double> server_ms;
  };

  mutable std::mutex mutex;
  std::uint64_t requests = 0;
  std::uint64_t misses = 0;
  std::uint64_t fallbacks = 0;
  std::uint64_t errors = 0;
  std::deque<double> server_ms;
  std::map<std::string, PerModel> models;
};

struct Gateway::Http {
  httplib::Server server;
};

Gateway::Gateway(GatewayConfig cfg, std::shared_ptr<ProfileStore> store,
                 std::unique_ptr<ModelBackend> backend)
    : cfg_(std::move(cfg)),
      store_(std::move(store)),
      backend_(std::move(backend)),
      network_(cfg_.network_alpha, cfg_.network),
      metrics_(std::make_unique<Metrics>()),
      http_(std::make_unique<Http>()) {
  validate(cfg_.selector);
  if (!(cfg_.device_time_ms > 0.0)) throw Error(ErrorCode::config, "device_time_ms must be > 0");
  if (!(cfg_.threshold_ms >= 0.0 && cfg_.threshold_ms <= cfg_.device_time_ms))
    throw Error(ErrorCode::config, "threshold_ms must lie in [0, device_time_ms]");
  setup_routes();
}

Gateway::~Gateway() { stop(); }

Rng Gateway::request_rng() {
  const std::uint64_t n = counter_.fetch_add(1);
  if (cfg_.test_mode) return Rng(mix64(cfg_.seed ^ mix64(n)));
  std::random_device entropy;
  return Rng((static_cast<std::uint64_t>(entropy()) << 32) ^ entropy() ^ mix64(n));
}

InferenceResponse Gateway::handle_infer(const InferenceRequest& request) {
  const auto started = std::chrono::steady_clock::now();
  if (!(request.sla_ms > 0.0)) throw ValidationError("sla_ms", "must be > 0");

  const double threshold = request.threshold_ms.value_or(cfg_.threshold_ms);
  if (threshold > cfg_.device_time_ms)
    throw ValidationError("threshold_ms", "must lie in [0, device_time_ms]");

  double t_input = 0.0;
  if (request.t_input_ms) {
    t_input = *request.t_input_ms;
    if (request.payload_bytes > 0) network_.record(request.payload_bytes, t_input);
  } else {
    t_input = network_.estimate(request.payload_bytes);
  }

  RequestContext ctx{request.sla_ms, 0.0, t_input, cfg_.device_time_ms, threshold};
  const BudgetRange range = compute_budget(ctx);

  const auto snapshot = store_->snapshot();
  Rng rng = request_rng();
  InferenceResponse response;
  response.decision = select(snapshot, range, cfg_.selector, rng);

  const auto chosen = std::find_if(snapshot.begin(), snapshot.end(), [&](const ModelProfile& m) {
    return m.name == response.decision.chosen;
  });
  const ExecResult exec = backend_->execute(*chosen, request.payload_bytes, rng);
  if (!cfg_.freeze_profiles && exec.exec_ms > 0.0) store_->observe(chosen->name, exec.exec_ms);

  response.model = chosen->name;
  response.label = exec.label;
  response.t_input_est_ms = t_input;
  response.exec_ms = exec.exec_ms;
  response.server_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  response.sla_met_server_side = 2.0 * t_input + response.server_ms <= request.sla_ms;
  record(response);
  return response;
}

void Gateway::record(const InferenceResponse& r) {
  std::lock_guard lock(metrics_->mutex);
  auto push = [](std::deque<double>& window, double v) {
    window.push_back(v);
    if (window.size() > Metrics::kWindow) window.pop_front();
  };
  metrics_->requests += 1;
  if (!r.sla_met_server_side) metrics_->misses += 1;
  if (r.decision.fallback) metrics_->fallbacks += 1;
  push(metrics_->server_ms, r.server_ms);
  auto& m = metrics_->models[r.model];
  m.requests += 1;
  if (!r.sla_met_server_side) m.misses += 1;
  push(m.server_ms, r.server_ms);
}

std::vector<ModelProfile> Gateway::list_models() const { return store_->snapshot(); }

std::pair<ModelProfile, bool> Gateway::put_profile(const std::string& name, const json& fields) {
  if (!fields.is_object()) throw ValidationError("body", "must be a JSON object");
  if (fields.contains("name") && fields["name"] != name)
    throw ValidationError("name", "must match the model named in the path");

  const auto existing = store_->find(name);
  if (!existing && !cfg_.allow_create)
    throw Error(ErrorCode::conflict, "model \"" + name + "\" does not exist");

  json record = json::object();
  if (existing) {
    const ModelProfile current[] = {*existing};
    record = json::parse(save_profiles(current))[0];
  }
  for (const auto& [key, value] : fields.items()) record[key] = value;
  record["name"] = name;

  std::vector<ModelProfile> parsed;
  try {
    parsed = load_profiles(json::array({record}).dump());
  } catch (const Error& e) {
    throw Error(ErrorCode::validation, e.what());
  }
  parsed.front().loaded = existing ? existing->loaded : true;
  const bool created = store_->upsert(parsed.front());
  return {parsed.front(), created};
}

std::string Gateway::metrics_text() const {
  std::lock_guard lock(metrics_->mutex);
  const auto& m = *metrics_;
  std::ostringstream out;
  out << "requests_total " << m.requests << "\n";
  out << "sla_miss_total " << m.misses << "\n";
  out << "fallback_total " << m.fallbacks << "\n";
  out << "error_total " << m.errors << "\n";
  std::vector<double> all(m.server_ms.begin(), m.server_ms.end());
  out << "server_ms_p50 " << metric_number(percentile(all, 0.50)) << "\n";
  out << "server_ms_p99 " << metric_number(percentile(all, 0.99)) << "\n";
  for (const auto& [name, pm] : m.models) {
    const std::string label = "{model=\"" + name + "\"}";
    std::vector<double> samples(pm.server_ms.begin(), pm.server_ms.end());
    out << "model_requests_total" << label << " " << pm.requests << "\n";
    out << "model_sla_miss_total" << label << " " << pm.misses << "\n";
    out << "model_server_ms_p50" << label << " " << metric_number(percentile(samples, 0.50)) << "\n";
    out << "model_server_ms_p99" << label << " " << metric_number(percentile(samples, 0.99)) << "\n";
  }
  return out.str();
}

void Gateway::setup_routes() {
  auto& server = http_->server;
  const unsigned threads = std::max(1u, cfg_.http_threads);
  server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  auto fail = [this](httplib::Response& res, int status, const std::string& message,
                     const std::string& field = "") {
    json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    res.status = status;
    res.set_content(body.dump(), "application/json");
    std::lock_guard lock(metrics_->mutex);
    metrics_->errors += 1;
  };

  server.Post("/v1/infer", [this, fail](const httplib::Request& req, httplib::Response& res) {
    try {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error&) {
        throw ValidationError("body", "malformed JSON");
      }
      const auto response = handle_infer(parse_inference_request(body));
      res.set_content(to_json(response).dump(), "application/json");
    } catch (const ValidationError& e) {
      fail(res, 400, e.what(), e.field());
    } catch (const Error& e) {
      fail(res, status_for(e.code()), e.what());
    } catch (const std::exception& e) {
      fail(res, 500, e.what());
    }
  });

  server.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(save_profiles(list_models()), "application/json");
  });

  server.Put(R"(/v1/models/(.+))", [this, fail](const httplib::Request& req,
                                                httplib::Response& res) {
    try {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error&) {
        throw ValidationError("body", "malformed JSON");
      }
      const auto [profile, created] = put_profile(req.matches[1].str(), body);
      const ModelProfile one[] = {profile};
      res.status = created ? 201 : 200;
      res.set_content(json::parse(save_profiles(one))[0].dump(), "application/json");
    } catch (const ValidationError& e) {
      fail(res, 400, e.what(), e.field());
    } catch (const Error& e) {
      fail(res, status_for(e.code()), e.what());
    }
  });

  server.Get("/v1/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(metrics_text(), "text/plain");
  });
}

int Gateway::start(const std::string& host, int port) {
  auto& server = http_->server;
  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::io, "cannot bind " + host);
  } else if (!server.bind_to_port(host, port)) {
    throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
  }
  server_thread_ = std::thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  return bound;
}

void Gateway::listen(const std::string& host, int port) {
  if (!http_->server.listen(host, port)) {
    throw Error(ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void Gateway::stop() {
  if (http_) http_->server.stop();
  if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace cnnselect
