#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "profile_store.hpp"
#include "selector.hpp"

namespace cnnselect {

struct TraceRow {
  double t_input_ms = 0.0;
  std::optional<double> t_output_ms;
};

/// Parses `t_input_ms[,t_output_ms]` rows. A non-numeric first line is
/// treated as a header.
std::vector<TraceRow> parse_trace_csv(std::string_view text);

/// Source of per-request upload times. Text form:
///   fixed:<ms> | normal:<mean>:<std> | lognormal:<mean>:<cv> | trace:<path>
struct NetworkModel {
  enum class Kind { fixed, normal, lognormal, trace };
  Kind kind = Kind::lognormal;
  double mean_ms = 63.0;
  double spread = 0.3;  // std_ms for normal, coefficient of variation for lognormal
  std::string trace_path;
  std::vector<TraceRow> trace;

  static NetworkModel parse(std::string_view spec);
  std::string describe() const;
};

enum class Policy { cnnselect, greedy, fastest, oracle, cnnselect_device };

const char* to_string(Policy policy);
std::optional<Policy> parse_policy(std::string_view name);

enum class ExecDistribution { normal, lognormal };

struct SimulationConfig {
  std::string profiles_path;          // takes precedence over `profiles`
  std::vector<ModelProfile> profiles;
  std::optional<std::uint64_t> pseudo_count;
  NetworkModel network;
  std::vector<double> sla_sweep;
  std::uint64_t requests_per_sla = 10000;
  std::vector<Policy> policies = {Policy::cnnselect, Policy::greedy, Policy::fastest,
                                  Policy::oracle};
  std::size_t lru_capacity = 0;       // 0 means every model stays loaded
  ExecDistribution exec_distribution = ExecDistribution::normal;
  double device_time_ms = 200.0;      // infinity disables the device path
  double threshold_ms = 30.0;
  std::optional<double> threshold_fraction;  // of device_time_ms, overrides threshold_ms
  double output_ratio = 0.1;          // T_output / T_input when the trace has none
  std::optional<std::string> device_model;   // accuracy on the device path; default fastest
  SelectorConfig selector;
  std::uint64_t seed = 42;
  unsigned threads = 0;               // 0 picks hardware concurrency

  double resolved_threshold_ms() const;
};

/// Throws Error(config) on unknown keys or out-of-range values.
SimulationConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SimulationConfig& cfg);

/// Resolves file references (profiles, trace) and checks invariants.
/// Throws Error(config) or the loader's error.
void validate(SimulationConfig& cfg);

/// min, min+step, ... up to max inclusive (with a small tolerance).
std::vector<double> sla_sweep(double min_ms, double max_ms, double step_ms);

struct LatencySummary {
  double mean = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p99 = 0.0;
};

/// Linear interpolation between order statistics. Sorts `samples`.
LatencySummary summarize_latency(std::vector<double>& samples);

struct UsageEntry {
  std::string model;  // "on-device" for requests served by the device path
  double fraction = 0.0;
};

struct CellResult {
  double sla_ms = 0.0;
  std::string policy;
  std::uint64_t requests = 0;
  std::uint64_t misses = 0;
  double miss_rate = 0.0;
  double accuracy = 0.0;
  LatencySummary latency;
  std::vector<UsageEntry> usage;  // sorted by model name, non-zero entries only
  std::uint64_t fallbacks = 0;
  std::uint64_t device_requests = 0;

  std::string modal_model() const;
};

struct SimulationReport {
  nlohmann::json metadata;
  std::vector<CellResult> cells;  // sla-major, policy order as configured

  const CellResult* find(double sla_ms, std::string_view policy) const;
  std::vector<std::string> policies() const;
};

/// Per-cell generator seed. Cells are independent, so the report does not
/// depend on the worker count:
///   seed_cell = mix(seed ^ mix(bits(sla_ms)) ^ mix(policy_stream + 1))
/// where mix is the SplitMix64 finalizer and policy_stream is the Policy's
/// ordinal (the device variant shares cnnselect's stream).
std::uint64_t cell_seed(std::uint64_t seed, double sla_ms, Policy policy);

SimulationReport run_simulation(SimulationConfig cfg);

/// run_simulation with the cnnselect_device column added: a request whose
/// selected model cannot finish under T_U runs on the device instead when
/// that is projected to finish sooner.
SimulationReport simulate_device_fallback(SimulationConfig cfg);

std::string report_csv(const SimulationReport& report);
std::string usage_csv(const SimulationReport& report);
std::string report_json(const SimulationReport& report);
/// Fixed-width table: one row per (sla, policy) with miss rate, accuracy,
/// mean/p99 latency and the modal model.
std::string report_summary(const SimulationReport& report);
SimulationReport report_from_json(std::string_view text);

struct ComparisonRow {
  std::optional<double> sla_ms;  // empty for the max-over-sla summary row
  double latency_reduction_pct = 0.0;
  double accuracy_delta = 0.0;
  double miss_rate_delta = 0.0;
};

struct ComparisonTable {
  std::string baseline;
  std::string candidate;
  std::vector<ComparisonRow> rows;
  ComparisonRow summary;
};

/// Candidate vs baseline per SLA. Deltas are candidate minus baseline; the
/// latency reduction is relative to the baseline mean. Throws
/// Error(insufficient_policies) for single-policy reports.
ComparisonTable compare_policies(const SimulationReport& report,
                                 std::string_view baseline = "greedy",
                                 std::string_view candidate = "cnnselect");
std::string comparison_csv(const ComparisonTable& table);

/// Build identifier embedded in report metadata.
const char* version_string();

}  // namespace cnnselect
