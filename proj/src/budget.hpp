#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace cnnselect {

/// Timing inputs of one inference request, all in milliseconds.
struct RequestContext {
  double sla_ms = 0.0;
  double arrival_ms = 0.0;  // bookkeeping only, no formula uses it
  double input_transfer_ms = 0.0;
  double device_time_ms = 0.0;
  double threshold_ms = 0.0;
};

/// Throws Error(domain) unless sla > 0, transfer >= 0, device time > 0 and
/// 0 <= threshold <= device time.
void validate(const RequestContext& ctx);

/// Execution-time window for a request. upper_ms (T_U) is the outer
/// feasibility bound, lower_ms (T_L) the exploration anchor.
struct BudgetRange {
  double budget_ms = 0.0;
  double upper_ms = 0.0;
  double lower_ms = 0.0;

  static BudgetRange from_limits(double upper_ms, double lower_ms) {
    return BudgetRange{upper_ms, upper_ms, lower_ms};
  }
};

/// The response is assumed no larger than the request, so the round trip is
/// bounded by twice the upload time. Non-positive budgets are returned as-is.
BudgetRange compute_budget(const RequestContext& ctx);

/// Downscaling before upload pays off only when resize + smaller upload does
/// not exceed uploading the original.
bool should_downscale(double t_downscale_ms, double t_upload_small_ms, double t_upload_orig_ms);

struct JitterModel {
  enum class Kind { none, normal, lognormal };
  Kind kind = Kind::lognormal;
  double cv = 0.3;      // lognormal coefficient of variation
  double std_ms = 0.0;  // normal standard deviation
};

struct NetworkProfile {
  std::string name;
  double fixed_overhead_ms = 0.0;
  double per_kb_ms = 0.0;  // 1 KB = 1000 bytes
  JitterModel jitter;
};

NetworkProfile parse_network_profile(std::string_view json_text);
NetworkProfile load_network_profile_file(const std::string& path);
std::string save_network_profile(const NetworkProfile& profile);

/// Estimates one-way upload time from recent (payload, transfer time)
/// observations with an exponentially weighted least-squares fit of
/// `overhead + rate * bytes`. With a single payload size the overhead comes
/// from the fallback profile (or 0) and only the rate is learned.
class NetworkEstimator {
 public:
  struct Fit {
    double overhead_ms = 0.0;
    double per_byte_ms = 0.0;
  };

  explicit NetworkEstimator(double alpha = 0.2,
                            std::optional<NetworkProfile> fallback = std::nullopt);

  void record(std::uint64_t payload_bytes, double transfer_ms);
  bool has_history() const;

  /// Throws Error(estimation_unavailable) with no history and no fallback.
  Fit fit() const;
  double estimate(std::uint64_t payload_bytes) const;

 private:
  Fit fit_locked() const;

  double alpha_;
  std::optional<NetworkProfile> fallback_;
  mutable std::mutex mutex_;
  std::uint64_t count_ = 0;
  // EWMA moments with x in KB and y in ms.
  double mx_ = 0.0, my_ = 0.0, mxx_ = 0.0, mxy_ = 0.0;
};

}  // namespace cnnselect
