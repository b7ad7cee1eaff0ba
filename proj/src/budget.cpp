#include "budget.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace cnnselect {

void validate(const RequestContext& ctx) {
  if (!(ctx.sla_ms > 0.0)) throw Error(ErrorCode::domain, "sla_ms must be > 0");
  if (!(ctx.input_transfer_ms >= 0.0))
    throw Error(ErrorCode::domain, "input_transfer_ms must be >= 0");
  if (!(ctx.device_time_ms > 0.0)) throw Error(ErrorCode::domain, "device_time_ms must be > 0");
  if (!(ctx.threshold_ms >= 0.0 && ctx.threshold_ms <= ctx.device_time_ms))
    throw Error(ErrorCode::domain, "threshold_ms must lie in [0, device_time_ms]");
}

BudgetRange compute_budget(const RequestContext& ctx) {
  validate(ctx);
  const double budget = ctx.sla_ms - 2.0 * ctx.input_transfer_ms;
  return BudgetRange{budget, budget, budget - ctx.threshold_ms};
}

bool should_downscale(double t_downscale_ms, double t_upload_small_ms, double t_upload_orig_ms) {
  return t_downscale_ms + t_upload_small_ms <= t_upload_orig_ms;
}

NetworkProfile parse_network_profile(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text.begin(), json_text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("network profile: ") + e.what());
  }
  auto require_number = [&](const char* key) {
    if (!doc.contains(key) || !doc[key].is_number())
      throw Error(ErrorCode::parse, std::string("network profile: '") + key + "' must be a number");
    return doc[key].get<double>();
  };
  if (!doc.is_object()) throw Error(ErrorCode::parse, "network profile must be a JSON object");
  NetworkProfile p;
  if (!doc.contains("name") || !doc["name"].is_string())
    throw Error(ErrorCode::parse, "network profile: 'name' must be a string");
  p.name = doc["name"].get<std::string>();
  p.fixed_overhead_ms = require_number("fixed_overhead_ms");
  p.per_kb_ms = require_number("per_kb_ms");
  if (p.fixed_overhead_ms < 0.0 || p.per_kb_ms < 0.0)
    throw Error(ErrorCode::parse, "network profile: overhead and rate must be >= 0");

  const auto& jitter = doc.value("jitter_model", nlohmann::json(nullptr));
  if (jitter.is_null()) {
    p.jitter.kind = JitterModel::Kind::none;
  } else if (jitter.is_object() && jitter.contains("type") && jitter["type"].is_string()) {
    const auto type = jitter["type"].get<std::string>();
    if (type == "none") {
      p.jitter.kind = JitterModel::Kind::none;
    } else if (type == "lognormal") {
      p.jitter.kind = JitterModel::Kind::lognormal;
      p.jitter.cv = jitter.value("cv", 0.3);
    } else if (type == "normal") {
      p.jitter.kind = JitterModel::Kind::normal;
      p.jitter.std_ms = jitter.value("std_ms", 0.0);
    } else {
      throw Error(ErrorCode::parse, "network profile: unknown jitter type '" + type + "'");
    }
    if (p.jitter.cv < 0.0 || p.jitter.std_ms < 0.0)
      throw Error(ErrorCode::parse, "network profile: jitter parameters must be >= 0");
  } else {
    throw Error(ErrorCode::parse, "network profile: 'jitter_model' must be null or {\"type\": ...}");
  }
  return p;
}

NetworkProfile load_network_profile_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open network profile '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_network_profile(buffer.str());
}

std::string save_network_profile(const NetworkProfile& profile) {
  nlohmann::ordered_json doc;
  doc["name"] = profile.name;
  doc["fixed_overhead_ms"] = profile.fixed_overhead_ms;
  doc["per_kb_ms"] = profile.per_kb_ms;
  switch (profile.jitter.kind) {
    case JitterModel::Kind::none: doc["jitter_model"] = {{"type", "none"}}; break;
    case JitterModel::Kind::normal:
      doc["jitter_model"] = {{"type", "normal"}, {"std_ms", profile.jitter.std_ms}};
      break;
    case JitterModel::Kind::lognormal:
      doc["jitter_model"] = {{"type", "lognormal"}, {"cv", profile.jitter.cv}};
      break;
  }
  return doc.dump(2) + "\n";
}

NetworkEstimator::NetworkEstimator(double alpha, std::optional<NetworkProfile> fallback)
    : alpha_(alpha), fallback_(std::move(fallback)) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw Error(ErrorCode::domain, "EWMA alpha must lie in (0, 1]");
}

void NetworkEstimator::record(std::uint64_t payload_bytes, double transfer_ms) {
  if (!(transfer_ms >= 0.0)) throw Error(ErrorCode::domain, "transfer time must be >= 0");
  const double x = static_cast<double>(payload_bytes) / 1000.0;
  const double y = transfer_ms;
  std::lock_guard lock(mutex_);
  if (count_ == 0) {
    mx_ = x;
    my_ = y;
    mxx_ = x * x;
    mxy_ = x * y;
  } else {
    const double keep = 1.0 - alpha_;
    mx_ = keep * mx_ + alpha_ * x;
    my_ = keep * my_ + alpha_ * y;
    mxx_ = keep * mxx_ + alpha_ * x * x;
    mxy_ = keep * mxy_ + alpha_ * x * y;
  }
  ++count_;
}

bool NetworkEstimator::has_history() const {
  std::lock_guard lock(mutex_);
  return count_ > 0;
}

NetworkEstimator::Fit NetworkEstimator::fit() const {
  std::lock_guard lock(mutex_);
  return fit_locked();
}

NetworkEstimator::Fit NetworkEstimator::fit_locked() const {
  if (count_ == 0) {
    if (!fallback_) {
      throw Error(ErrorCode::estimation_unavailable,
                  "no transfer observations and no default network profile");
    }
    return Fit{fallback_->fixed_overhead_ms, fallback_->per_kb_ms / 1000.0};
  }

  const double var_x = mxx_ - mx_ * mx_;
  double overhead = 0.0;
  double per_kb = 0.0;
  if (var_x > 1e-9 * std::max(mxx_, 1.0)) {
    per_kb = (mxy_ - mx_ * my_) / var_x;
    overhead = my_ - per_kb * mx_;
    if (overhead < 0.0) {
      overhead = 0.0;
      per_kb = mxy_ / mxx_;
    }
    if (per_kb < 0.0) {
      per_kb = 0.0;
      overhead = my_;
    }
  } else {
    overhead = fallback_ ? fallback_->fixed_overhead_ms : 0.0;
    if (mx_ > 0.0 && my_ >= overhead) {
      per_kb = (my_ - overhead) / mx_;
    } else {
      overhead = my_;
      per_kb = fallback_ ? fallback_->per_kb_ms : 0.0;
    }
  }
  return Fit{overhead, per_kb / 1000.0};
}

double NetworkEstimator::estimate(std::uint64_t payload_bytes) const {
  const Fit f = fit();
  return f.overhead_ms + f.per_byte_ms * static_cast<double>(payload_bytes);
}

}  // namespace cnnselect
