// extern "C" surface over the C++ core. Exceptions never cross this
// boundary: each entry point maps them onto a cns_status and records the
// message for cns_last_error().

#include "cnnselect/cnnselect.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include <json.hpp>

#include "budget.hpp"
#include "error.hpp"
#include "gateway.hpp"
#include "profile_store.hpp"
#include "selector.hpp"
#include "simulator.hpp"

struct cns_store {
  std::shared_ptr<cnnselect::ProfileStore> store;
};

struct cns_rng {
  cnnselect::Rng rng;
};

struct cns_report {
  cnnselect::SimulationReport report;
};

struct cns_gateway {
  std::unique_ptr<cnnselect::Gateway> gateway;
};

namespace {

using namespace cnnselect;

thread_local std::string last_error;

cns_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return CNS_E_PARSE;
    case ErrorCode::duplicate_name: return CNS_E_DUPLICATE_NAME;
    case ErrorCode::not_found: return CNS_E_NOT_FOUND;
    case ErrorCode::domain: return CNS_E_DOMAIN;
    case ErrorCode::no_models: return CNS_E_NO_MODELS;
    case ErrorCode::estimation_unavailable: return CNS_E_ESTIMATION_UNAVAILABLE;
    case ErrorCode::config: return CNS_E_CONFIG;
    case ErrorCode::insufficient_policies: return CNS_E_INSUFFICIENT_POLICIES;
    case ErrorCode::validation: return CNS_E_VALIDATION;
    case ErrorCode::conflict: return CNS_E_CONFLICT;
    case ErrorCode::io: return CNS_E_IO;
  }
  return CNS_E_INTERNAL;
}

cns_status fail(cns_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

template <typename F>
cns_status guarded(F&& body) {
  try {
    last_error.clear();
    return body();
  } catch (const ValidationError& e) {
    return fail(CNS_E_VALIDATION, e.what());
  } catch (const Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(CNS_E_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CNS_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CNS_E_INTERNAL, e.what());
  } catch (...) {
    return fail(CNS_E_INTERNAL, "unknown error");
  }
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

ProfileFormat to_format(cns_format f) {
  return f == CNS_FORMAT_CSV ? ProfileFormat::csv : ProfileFormat::json;
}

std::string_view view(const char* text, size_t len) { return std::string_view(text, len); }

#define CNS_REQUIRE(cond)                                                  \
  do {                                                                     \
    if (!(cond)) return fail(CNS_E_INVALID_ARGUMENT, "invalid argument: " #cond); \
  } while (0)

GatewayConfig gateway_config(const nlohmann::json& doc, std::string& profiles_path,
                             double& time_scale) {
  GatewayConfig cfg;
  if (!doc.is_object()) throw Error(ErrorCode::config, "gateway config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "profiles_path") profiles_path = value.get<std::string>();
    else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else if (key == "test_mode") cfg.test_mode = value.get<bool>();
    else if (key == "freeze_profiles") cfg.freeze_profiles = value.get<bool>();
    else if (key == "allow_create") cfg.allow_create = value.get<bool>();
    else if (key == "device_time_ms") cfg.device_time_ms = value.get<double>();
    else if (key == "threshold_ms") cfg.threshold_ms = value.get<double>();
    else if (key == "accuracy_metric") {
      const auto m = value.get<std::string>();
      if (m != "top1" && m != "top5") throw Error(ErrorCode::config, "accuracy_metric must be top1 or top5");
      cfg.selector.accuracy_metric = m == "top1" ? AccuracyMetric::top1 : AccuracyMetric::top5;
    } else if (key == "include_base_in_exploration") {
      cfg.selector.include_base_in_exploration = value.get<bool>();
    } else if (key == "denominator_epsilon_ms") {
      cfg.selector.denominator_epsilon_ms = value.get<double>();
    } else if (key == "network_profile_path") {
      if (!value.is_null()) cfg.network = load_network_profile_file(value.get<std::string>());
    } else if (key == "http_threads") {
      cfg.http_threads = value.get<unsigned>();
    } else if (key == "time_scale") {
      time_scale = value.get<double>();
    } else {
      throw Error(ErrorCode::config, "unknown gateway config key '" + key + "'");
    }
  }
  cfg.selector.rng_seed = cfg.seed;
  return cfg;
}

}  // namespace

extern "C" {

const char* cns_version(void) { return version_string(); }

const char* cns_status_string(cns_status status) {
  switch (status) {
    case CNS_OK: return "ok";
    case CNS_E_INVALID_ARGUMENT: return "invalid argument";
    case CNS_E_PARSE: return "parse error";
    case CNS_E_DUPLICATE_NAME: return "duplicate name";
    case CNS_E_NOT_FOUND: return "not found";
    case CNS_E_DOMAIN: return "domain error";
    case CNS_E_NO_MODELS: return "no models";
    case CNS_E_ESTIMATION_UNAVAILABLE: return "estimation unavailable";
    case CNS_E_CONFIG: return "config error";
    case CNS_E_INSUFFICIENT_POLICIES: return "insufficient policies";
    case CNS_E_VALIDATION: return "validation error";
    case CNS_E_CONFLICT: return "conflict";
    case CNS_E_IO: return "i/o error";
    case CNS_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* cns_last_error(void) { return last_error.c_str(); }

void cns_string_free(char* s) { std::free(s); }

cns_status cns_store_new(cns_store** out) {
  CNS_REQUIRE(out);
  return guarded([&] {
    *out = new cns_store{std::make_shared<ProfileStore>()};
    return CNS_OK;
  });
}

cns_status cns_store_load(const char* text, size_t len, cns_format format, cns_store** out) {
  CNS_REQUIRE(out && (text || len == 0));
  return guarded([&] {
    const auto profiles = load_profiles(view(text ? text : "", len), to_format(format));
    *out = new cns_store{std::make_shared<ProfileStore>(profiles)};
    return CNS_OK;
  });
}

cns_status cns_store_load_file(const char* path, cns_store** out) {
  CNS_REQUIRE(path && out);
  return guarded([&] {
    const auto profiles = load_profiles_file(path);
    *out = new cns_store{std::make_shared<ProfileStore>(profiles)};
    return CNS_OK;
  });
}

void cns_store_free(cns_store* store) { delete store; }

size_t cns_store_size(const cns_store* store) { return store ? store->store->size() : 0; }

cns_status cns_store_observe(cns_store* store, const char* name, double elapsed_ms,
                             char** profile_json) {
  CNS_REQUIRE(store && name);
  return guarded([&] {
    const ModelProfile updated = store->store->observe(name, elapsed_ms);
    if (profile_json) {
      const ModelProfile one[] = {updated};
      *profile_json = duplicate(nlohmann::json::parse(save_profiles(one))[0].dump());
    }
    return CNS_OK;
  });
}

cns_status cns_store_upsert(cns_store* store, const char* record_json) {
  CNS_REQUIRE(store && record_json);
  return guarded([&] {
    const auto record = nlohmann::json::parse(record_json);
    const auto parsed = load_profiles(nlohmann::json::array({record}).dump());
    store->store->upsert(parsed.front());
    return CNS_OK;
  });
}

cns_status cns_store_set_pseudo_count(cns_store* store, uint64_t count) {
  CNS_REQUIRE(store);
  return guarded([&] {
    store->store->set_pseudo_count(count);
    return CNS_OK;
  });
}

cns_status cns_store_save(const cns_store* store, cns_format format, char** out) {
  CNS_REQUIRE(store && out);
  return guarded([&] {
    *out = duplicate(save_profiles(store->store->snapshot(), to_format(format)));
    return CNS_OK;
  });
}

cns_status cns_profiles_validate(const char* text, size_t len, cns_format format,
                                 char** report) {
  CNS_REQUIRE(text || len == 0);
  return guarded([&] {
    const auto violations = validate_profiles(view(text ? text : "", len), to_format(format));
    std::string listing;
    for (const auto& v : violations) listing += v.describe() + "\n";
    if (report) *report = duplicate(listing);
    if (violations.empty()) return CNS_OK;
    return fail(CNS_E_VALIDATION, violations.front().describe());
  });
}

cns_status cns_profiles_convert(const char* text, size_t len, cns_format from, cns_format to,
                                char** out) {
  CNS_REQUIRE((text || len == 0) && out);
  return guarded([&] {
    const auto profiles = load_profiles(view(text ? text : "", len), to_format(from));
    *out = duplicate(save_profiles(profiles, to_format(to)));
    return CNS_OK;
  });
}

cns_status cns_profiles_show(const char* text, size_t len, cns_format format, char** out) {
  CNS_REQUIRE((text || len == 0) && out);
  return guarded([&] {
    const auto profiles = load_profiles(view(text ? text : "", len), to_format(format));
    *out = duplicate(profiles_table(profiles));
    return CNS_OK;
  });
}

cns_status cns_compute_budget(const cns_request_context* ctx, cns_budget_range* out) {
  CNS_REQUIRE(ctx && out);
  return guarded([&] {
    const RequestContext c{ctx->sla_ms, ctx->arrival_ms, ctx->input_transfer_ms,
                           ctx->device_time_ms, ctx->threshold_ms};
    validate(c);
    const BudgetRange r = compute_budget(c);
    *out = cns_budget_range{r.budget_ms, r.upper_ms, r.lower_ms};
    return CNS_OK;
  });
}

int cns_should_downscale(double t_downscale_ms, double t_upload_small_ms,
                         double t_upload_orig_ms) {
  return should_downscale(t_downscale_ms, t_upload_small_ms, t_upload_orig_ms) ? 1 : 0;
}

void cns_selector_config_init(cns_selector_config* cfg) {
  if (!cfg) return;
  const SelectorConfig defaults;
  cfg->accuracy_metric = CNS_TOP1;
  cfg->include_base_in_exploration = defaults.include_base_in_exploration ? 1 : 0;
  cfg->denominator_epsilon_ms = defaults.denominator_epsilon_ms;
  cfg->rng_seed = defaults.rng_seed;
}

cns_status cns_rng_new(uint64_t seed, cns_rng** out) {
  CNS_REQUIRE(out);
  return guarded([&] {
    *out = new cns_rng{Rng(seed)};
    return CNS_OK;
  });
}

void cns_rng_free(cns_rng* rng) { delete rng; }

cns_status cns_select(const cns_store* store, const cns_budget_range* range,
                      const cns_selector_config* cfg, cns_rng* rng, char** decision_json) {
  CNS_REQUIRE(store && range && cfg && decision_json);
  return guarded([&] {
    SelectorConfig sc;
    sc.accuracy_metric = cfg->accuracy_metric == CNS_TOP5 ? AccuracyMetric::top5 : AccuracyMetric::top1;
    sc.include_base_in_exploration = cfg->include_base_in_exploration != 0;
    sc.denominator_epsilon_ms = cfg->denominator_epsilon_ms;
    sc.rng_seed = cfg->rng_seed;
    validate(sc);
    Rng local(sc.rng_seed);
    Rng& gen = rng ? rng->rng : local;
    const BudgetRange r{range->budget_ms, range->upper_ms, range->lower_ms};
    const auto decision = select(store->store->snapshot(), r, sc, gen);
    *decision_json = duplicate(to_json(decision).dump());
    return CNS_OK;
  });
}

cns_status cns_sla_sweep(double min_ms, double max_ms, double step_ms, double* out,
                         size_t capacity, size_t* count) {
  CNS_REQUIRE(count && (out || capacity == 0));
  return guarded([&] {
    const auto values = sla_sweep(min_ms, max_ms, step_ms);
    *count = values.size();
    for (size_t i = 0; i < values.size() && i < capacity; ++i) out[i] = values[i];
    return CNS_OK;
  });
}

cns_status cns_simulate(const char* config_json, int device_fallback, cns_report** out) {
  CNS_REQUIRE(config_json && out);
  return guarded([&] {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::config, std::string("config is not valid JSON: ") + e.what());
    }
    SimulationConfig cfg = config_from_json(doc);
    auto report = device_fallback ? simulate_device_fallback(std::move(cfg))
                                  : run_simulation(std::move(cfg));
    *out = new cns_report{std::move(report)};
    return CNS_OK;
  });
}

cns_status cns_report_load(const char* json_text, size_t len, cns_report** out) {
  CNS_REQUIRE(json_text && out);
  return guarded([&] {
    *out = new cns_report{report_from_json(view(json_text, len))};
    return CNS_OK;
  });
}

void cns_report_free(cns_report* report) { delete report; }

cns_status cns_report_csv(const cns_report* report, char** out) {
  CNS_REQUIRE(report && out);
  return guarded([&] {
    *out = duplicate(report_csv(report->report));
    return CNS_OK;
  });
}

cns_status cns_report_usage_csv(const cns_report* report, char** out) {
  CNS_REQUIRE(report && out);
  return guarded([&] {
    *out = duplicate(usage_csv(report->report));
    return CNS_OK;
  });
}

cns_status cns_report_json(const cns_report* report, char** out) {
  CNS_REQUIRE(report && out);
  return guarded([&] {
    *out = duplicate(report_json(report->report));
    return CNS_OK;
  });
}

cns_status cns_report_summary(const cns_report* report, char** out) {
  CNS_REQUIRE(report && out);
  return guarded([&] {
    *out = duplicate(report_summary(report->report));
    return CNS_OK;
  });
}

cns_status cns_compare(const cns_report* report, const char* baseline, const char* candidate,
                       char** csv_out) {
  CNS_REQUIRE(report && baseline && candidate && csv_out);
  return guarded([&] {
    *csv_out = duplicate(comparison_csv(compare_policies(report->report, baseline, candidate)));
    return CNS_OK;
  });
}

cns_status cns_gateway_new(const char* config_json, cns_gateway** out) {
  CNS_REQUIRE(out);
  return guarded([&] {
    nlohmann::json doc = nlohmann::json::object();
    if (config_json && *config_json) {
      try {
        doc = nlohmann::json::parse(config_json);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::config, std::string("config is not valid JSON: ") + e.what());
      }
    }
    std::string profiles_path;
    double time_scale = 1.0;
    GatewayConfig cfg;
    try {
      cfg = gateway_config(doc, profiles_path, time_scale);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::config, std::string("bad gateway config: ") + e.what());
    }
    auto store = std::make_shared<ProfileStore>();
    if (!profiles_path.empty()) {
      store = std::make_shared<ProfileStore>(load_profiles_file(profiles_path));
    }
    *out = new cns_gateway{std::make_unique<Gateway>(cfg, store,
                                                     std::make_unique<MockBackend>(time_scale))};
    return CNS_OK;
  });
}

void cns_gateway_free(cns_gateway* gateway) { delete gateway; }

cns_status cns_gateway_start(cns_gateway* gateway, const char* host, int port, int* bound_port) {
  CNS_REQUIRE(gateway && host);
  return guarded([&] {
    const int bound = gateway->gateway->start(host, port);
    if (bound_port) *bound_port = bound;
    return CNS_OK;
  });
}

cns_status cns_gateway_listen(cns_gateway* gateway, const char* host, int port) {
  CNS_REQUIRE(gateway && host);
  return guarded([&] {
    gateway->gateway->listen(host, port);
    return CNS_OK;
  });
}

void cns_gateway_stop(cns_gateway* gateway) {
  if (gateway) gateway->gateway->stop();
}

cns_status cns_gateway_infer(cns_gateway* gateway, const char* request_json,
                             char** response_json) {
  CNS_REQUIRE(gateway && request_json && response_json);
  return guarded([&] {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(request_json);
    } catch (const nlohmann::json::parse_error&) {
      throw ValidationError("body", "malformed JSON");
    }
    const auto response = gateway->gateway->handle_infer(parse_inference_request(body));
    *response_json = duplicate(to_json(response).dump());
    return CNS_OK;
  });
}

}  // extern "C"
