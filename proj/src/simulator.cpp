#include "simulator.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <list>
#include <set>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "error.hpp"
#include "random.hpp"

#ifndef CNNSELECT_VERSION
#define CNNSELECT_VERSION "0.1.0"
#endif

namespace cnnselect {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config, std::string("cannot open ") + what + " '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string num(double value, const char* format = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

std::string sla_text(double sla) { return num(sla, "%.10g"); }

double parse_number(std::string_view text, std::string_view context) {
  auto v = csv::parse_double(text);
  if (!v) {
    throw Error(ErrorCode::config,
                "invalid number '" + std::string(text) + "' in '" + std::string(context) + "'");
  }
  return *v;
}

std::vector<std::string_view> split_colon(std::string_view text, std::size_t max_parts) {
  std::vector<std::string_view> parts;
  while (parts.size() + 1 < max_parts) {
    auto pos = text.find(':');
    if (pos == std::string_view::npos) break;
    parts.push_back(text.substr(0, pos));
    text.remove_prefix(pos + 1);
  }
  parts.push_back(text);
  return parts;
}

// Lognormal parameters matching a target mean and coefficient of variation.
std::pair<double, double> lognormal_params(double mean, double cv) {
  const double s2 = std::log1p(cv * cv);
  return {std::log(mean) - s2 / 2.0, std::sqrt(s2)};
}

const char* kPolicyNames[] = {"cnnselect", "greedy", "fastest", "oracle", "cnnselect_device"};

// Least-recently-used set of resident models.
class ResidentModels {
 public:
  explicit ResidentModels(std::size_t capacity) : capacity_(capacity) {}

  bool is_hot(std::size_t model) const {
    return capacity_ == 0 || std::find(order_.begin(), order_.end(), model) != order_.end();
  }

  void touch(std::size_t model) {
    if (capacity_ == 0) return;
    order_.remove(model);
    order_.push_front(model);
    while (order_.size() > capacity_) order_.pop_back();
  }

 private:
  std::size_t capacity_;
  std::list<std::size_t> order_;
};

class CellRunner {
 public:
  CellRunner(const SimulationConfig& cfg, const std::vector<ModelProfile>& truth, double sla,
             Policy policy)
      : cfg_(cfg),
        truth_(truth),
        sla_(sla),
        policy_(policy),
        rng_(cell_seed(cfg.seed, sla, policy)),
        learned_(truth),
        resident_(cfg.lru_capacity) {}

  CellResult run() {
    const AccuracyMetric metric = cfg_.selector.accuracy_metric;
    const double threshold = cfg_.resolved_threshold_ms();
    const std::size_t device_model =
        cfg_.device_model ? index_of(*cfg_.device_model) : fastest_select(truth_);

    std::vector<std::uint64_t> counts(truth_.size(), 0);
    std::vector<double> latencies;
    latencies.reserve(cfg_.requests_per_sla);
    CellResult out;
    out.sla_ms = sla_;
    out.policy = to_string(policy_);
    out.requests = cfg_.requests_per_sla;
    double accuracy_sum = 0.0;
    double arrival = 0.0;

    for (std::uint64_t r = 0; r < cfg_.requests_per_sla; ++r) {
      const auto [t_in, t_out] = sample_network(r);
      RequestContext ctx{sla_, arrival, t_in, cfg_.device_time_ms, threshold};
      const BudgetRange range = compute_budget(ctx);

      std::size_t chosen = 0;
      std::optional<double> realized;
      bool on_device = false;
      switch (policy_) {
        case Policy::cnnselect:
        case Policy::cnnselect_device: {
          const auto snapshot = learned_.snapshot();
          const auto decision = select(snapshot, range, cfg_.selector, rng_);
          if (decision.fallback) ++out.fallbacks;
          chosen = index_of(decision.chosen);
          if (policy_ == Policy::cnnselect_device) {
            const auto& m = snapshot[chosen];
            const double projected_exec = m.mean_ms + m.std_ms;
            const double projected_cloud = 2.0 * t_in + projected_exec;
            on_device = projected_exec >= range.upper_ms && cfg_.device_time_ms < projected_cloud;
          }
          break;
        }
        case Policy::greedy:
          // Greedy sees only the SLA, not the time spent on the network.
          chosen = greedy_select(truth_, BudgetRange::from_limits(sla_, sla_), metric);
          break;
        case Policy::fastest: chosen = fastest_select(truth_); break;
        case Policy::oracle: {
          std::optional<std::size_t> best;
          double best_e2e = kInf;
          std::size_t quickest = 0;
          std::vector<double> times(truth_.size());
          for (std::size_t i = 0; i < truth_.size(); ++i) {
            times[i] = sample_exec(i);
            const double e2e = t_in + times[i] + t_out;
            if (e2e < best_e2e) {
              best_e2e = e2e;
              quickest = i;
            }
            if (e2e <= sla_ &&
                (!best || truth_[i].accuracy(metric) > truth_[*best].accuracy(metric))) {
              best = i;
            }
          }
          chosen = best.value_or(quickest);
          realized = times[chosen];
          break;
        }
      }

      double e2e = 0.0;
      double accuracy = 0.0;
      if (on_device) {
        e2e = cfg_.device_time_ms;
        accuracy = truth_[device_model].accuracy(metric);
        ++out.device_requests;
      } else {
        const bool hot = resident_.is_hot(chosen);
        const double exec = realized ? *realized : sample_exec(chosen);
        resident_.touch(chosen);
        if (hot && (policy_ == Policy::cnnselect || policy_ == Policy::cnnselect_device)) {
          learned_.observe(truth_[chosen].name, std::max(exec, 1e-9));
        }
        e2e = t_in + exec + t_out;
        accuracy = truth_[chosen].accuracy(metric);
        ++counts[chosen];
      }
      if (e2e > sla_) ++out.misses;
      accuracy_sum += accuracy;
      latencies.push_back(e2e);
      arrival += e2e;
    }

    const double n = static_cast<double>(cfg_.requests_per_sla);
    out.miss_rate = static_cast<double>(out.misses) / n;
    out.accuracy = accuracy_sum / n;
    out.latency = summarize_latency(latencies);
    for (std::size_t i = 0; i < truth_.size(); ++i) {
      if (counts[i] > 0) {
        out.usage.push_back({truth_[i].name, static_cast<double>(counts[i]) / n});
      }
    }
    if (out.device_requests > 0) {
      out.usage.push_back({"on-device", static_cast<double>(out.device_requests) / n});
    }
    std::sort(out.usage.begin(), out.usage.end(),
              [](const UsageEntry& a, const UsageEntry& b) { return a.model < b.model; });
    return out;
  }

 private:
  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < truth_.size(); ++i) {
      if (truth_[i].name == name) return i;
    }
    throw Error(ErrorCode::not_found, "unknown model \"" + name + "\"");
  }

  std::pair<double, double> sample_network(std::uint64_t request) {
    const auto& net = cfg_.network;
    double t_in = 0.0;
    std::optional<double> t_out;
    switch (net.kind) {
      case NetworkModel::Kind::fixed: t_in = net.mean_ms; break;
      case NetworkModel::Kind::normal: t_in = truncated_normal(net.mean_ms, net.spread); break;
      case NetworkModel::Kind::lognormal: {
        const auto [m, s] = lognormal_params(net.mean_ms, net.spread);
        t_in = std::exp(m + s * normal_(rng_));
        break;
      }
      case NetworkModel::Kind::trace: {
        const auto& row = net.trace[request % net.trace.size()];
        t_in = row.t_input_ms;
        t_out = row.t_output_ms;
        break;
      }
    }
    return {t_in, t_out.value_or(cfg_.output_ratio * t_in)};
  }

  double truncated_normal(double mean, double std) {
    if (std <= 0.0) return std::max(mean, 0.0);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double x = mean + std * normal_(rng_);
      if (x > 0.0) return x;
    }
    return std::max(mean, 0.0);
  }

  double sample_exec(std::size_t model) {
    const auto& m = truth_[model];
    double mean = m.mean_ms;
    double std = m.std_ms;
    if (!resident_.is_hot(model) && m.cold_start_mean_ms) {
      mean = *m.cold_start_mean_ms;
      std = m.cold_start_std_ms.value_or(0.0);
    }
    if (cfg_.exec_distribution == ExecDistribution::lognormal && std > 0.0) {
      const auto [mu, s] = lognormal_params(mean, std / mean);
      return std::exp(mu + s * normal_(rng_));
    }
    return truncated_normal(mean, std);
  }

  const SimulationConfig& cfg_;
  const std::vector<ModelProfile>& truth_;
  double sla_;
  Policy policy_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  ProfileStore learned_;
  ResidentModels resident_;
};

json usage_json(const CellResult& cell) {
  json usage = json::object();
  for (const auto& u : cell.usage) usage[u.model] = u.fraction;
  return usage;
}

}  // namespace

const char* version_string() { return "cnnselect " CNNSELECT_VERSION; }

std::vector<TraceRow> parse_trace_csv(std::string_view text) {
  std::vector<TraceRow> rows;
  auto lines = csv::lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = csv::split_line(lines[i]);
    if (!fields || fields->empty() || fields->size() > 2) {
      throw Error(ErrorCode::parse, "trace line " + std::to_string(i + 1) +
                                        ": expected t_input_ms[,t_output_ms]");
    }
    auto t_in = csv::parse_double((*fields)[0]);
    if (!t_in) {
      if (i == 0 && rows.empty()) continue;  // header
      throw Error(ErrorCode::parse, "trace line " + std::to_string(i + 1) + ": bad t_input_ms");
    }
    TraceRow row{*t_in, std::nullopt};
    if (fields->size() == 2 && !(*fields)[1].empty()) {
      row.t_output_ms = csv::parse_double((*fields)[1]);
      if (!row.t_output_ms) {
        throw Error(ErrorCode::parse, "trace line " + std::to_string(i + 1) + ": bad t_output_ms");
      }
    }
    if (row.t_input_ms < 0.0 || (row.t_output_ms && *row.t_output_ms < 0.0)) {
      throw Error(ErrorCode::parse, "trace line " + std::to_string(i + 1) + ": negative time");
    }
    rows.push_back(row);
  }
  return rows;
}

NetworkModel NetworkModel::parse(std::string_view spec) {
  NetworkModel m;
  auto kind_end = spec.find(':');
  const std::string_view kind = spec.substr(0, kind_end);
  if (kind == "trace") {
    if (kind_end == std::string_view::npos || kind_end + 1 >= spec.size())
      throw Error(ErrorCode::config, "network 'trace' needs a path: trace:<file>");
    m.kind = Kind::trace;
    m.trace_path = std::string(spec.substr(kind_end + 1));
    return m;
  }
  auto parts = split_colon(spec, 3);
  if (kind == "fixed" && parts.size() == 2) {
    m.kind = Kind::fixed;
    m.mean_ms = parse_number(parts[1], spec);
    m.spread = 0.0;
  } else if (kind == "normal" && parts.size() == 3) {
    m.kind = Kind::normal;
    m.mean_ms = parse_number(parts[1], spec);
    m.spread = parse_number(parts[2], spec);
  } else if (kind == "lognormal" && (parts.size() == 2 || parts.size() == 3)) {
    m.kind = Kind::lognormal;
    m.mean_ms = parse_number(parts[1], spec);
    m.spread = parts.size() == 3 ? parse_number(parts[2], spec) : 0.3;
  } else {
    throw Error(ErrorCode::config,
                "bad network model '" + std::string(spec) +
                    "' (expected fixed:<ms>, normal:<mean>:<std>, lognormal:<mean>[:<cv>], "
                    "trace:<file>)");
  }
  if (!(m.mean_ms >= 0.0) || !(m.spread >= 0.0))
    throw Error(ErrorCode::config, "network parameters must be >= 0");
  if (m.kind == Kind::lognormal && !(m.mean_ms > 0.0))
    throw Error(ErrorCode::config, "lognormal network mean must be > 0");
  return m;
}

std::string NetworkModel::describe() const {
  switch (kind) {
    case Kind::fixed: return "fixed:" + num(mean_ms, "%.10g");
    case Kind::normal: return "normal:" + num(mean_ms, "%.10g") + ":" + num(spread, "%.10g");
    case Kind::lognormal:
      return "lognormal:" + num(mean_ms, "%.10g") + ":" + num(spread, "%.10g");
    case Kind::trace: return "trace:" + trace_path;
  }
  return "";
}

const char* to_string(Policy policy) { return kPolicyNames[static_cast<int>(policy)]; }

std::optional<Policy> parse_policy(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    if (name == kPolicyNames[i]) return static_cast<Policy>(i);
  }
  return std::nullopt;
}

double SimulationConfig::resolved_threshold_ms() const {
  return threshold_fraction ? *threshold_fraction * device_time_ms : threshold_ms;
}

SimulationConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::config, "simulation config must be a JSON object");
  static const std::set<std::string> known = {
      "profiles_path", "profiles",         "pseudo_count",      "network",
      "sla_ms",        "requests_per_sla", "policies",          "cold_start",
      "exec_distribution", "device_time_ms", "threshold_ms",    "threshold_fraction",
      "output_ratio",  "device_model",     "accuracy_metric",   "include_base_in_exploration",
      "denominator_epsilon_ms", "seed",    "threads"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw Error(ErrorCode::config, "unknown config key '" + key + "'");
  }

  SimulationConfig cfg;
  try {
    if (doc.contains("profiles_path")) cfg.profiles_path = doc["profiles_path"].get<std::string>();
    if (doc.contains("profiles")) cfg.profiles = load_profiles(doc["profiles"].dump());
    if (doc.contains("pseudo_count") && !doc["pseudo_count"].is_null())
      cfg.pseudo_count = doc["pseudo_count"].get<std::uint64_t>();
    if (doc.contains("network")) cfg.network = NetworkModel::parse(doc["network"].get<std::string>());
    if (doc.contains("sla_ms")) cfg.sla_sweep = doc["sla_ms"].get<std::vector<double>>();
    if (doc.contains("requests_per_sla"))
      cfg.requests_per_sla = doc["requests_per_sla"].get<std::uint64_t>();
    if (doc.contains("policies")) {
      cfg.policies.clear();
      for (const auto& p : doc["policies"]) {
        auto policy = parse_policy(p.get<std::string>());
        if (!policy) throw Error(ErrorCode::config, "unknown policy '" + p.get<std::string>() + "'");
        cfg.policies.push_back(*policy);
      }
    }
    if (doc.contains("cold_start")) {
      const auto mode = doc["cold_start"].get<std::string>();
      if (mode == "always_hot") {
        cfg.lru_capacity = 0;
      } else if (mode.rfind("lru:", 0) == 0) {
        const double cap = parse_number(std::string_view(mode).substr(4), mode);
        if (!(cap >= 1.0) || cap != std::floor(cap))
          throw Error(ErrorCode::config, "lru capacity must be a positive integer");
        cfg.lru_capacity = static_cast<std::size_t>(cap);
      } else {
        throw Error(ErrorCode::config, "cold_start must be always_hot or lru:<capacity>");
      }
    }
    if (doc.contains("exec_distribution")) {
      const auto dist = doc["exec_distribution"].get<std::string>();
      if (dist == "normal") cfg.exec_distribution = ExecDistribution::normal;
      else if (dist == "lognormal") cfg.exec_distribution = ExecDistribution::lognormal;
      else throw Error(ErrorCode::config, "exec_distribution must be normal or lognormal");
    }
    if (doc.contains("device_time_ms"))
      cfg.device_time_ms = doc["device_time_ms"].is_null() ? kInf : doc["device_time_ms"].get<double>();
    if (doc.contains("threshold_ms")) cfg.threshold_ms = doc["threshold_ms"].get<double>();
    if (doc.contains("threshold_fraction") && !doc["threshold_fraction"].is_null())
      cfg.threshold_fraction = doc["threshold_fraction"].get<double>();
    if (doc.contains("output_ratio")) cfg.output_ratio = doc["output_ratio"].get<double>();
    if (doc.contains("device_model") && !doc["device_model"].is_null())
      cfg.device_model = doc["device_model"].get<std::string>();
    if (doc.contains("accuracy_metric")) {
      const auto metric = doc["accuracy_metric"].get<std::string>();
      if (metric == "top1") cfg.selector.accuracy_metric = AccuracyMetric::top1;
      else if (metric == "top5") cfg.selector.accuracy_metric = AccuracyMetric::top5;
      else throw Error(ErrorCode::config, "accuracy_metric must be top1 or top5");
    }
    if (doc.contains("include_base_in_exploration"))
      cfg.selector.include_base_in_exploration = doc["include_base_in_exploration"].get<bool>();
    if (doc.contains("denominator_epsilon_ms"))
      cfg.selector.denominator_epsilon_ms = doc["denominator_epsilon_ms"].get<double>();
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
    cfg.selector.rng_seed = cfg.seed;
    if (doc.contains("threads")) cfg.threads = doc["threads"].get<unsigned>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("bad simulation config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    throw Error(ErrorCode::config, e.what());
  }
  return cfg;
}

json to_json(const SimulationConfig& cfg) {
  json out;
  if (!cfg.profiles_path.empty()) {
    out["profiles_path"] = cfg.profiles_path;
  } else {
    out["profiles"] = json::parse(save_profiles(cfg.profiles));
  }
  out["pseudo_count"] = cfg.pseudo_count ? json(*cfg.pseudo_count) : json(nullptr);
  out["network"] = cfg.network.describe();
  out["sla_ms"] = cfg.sla_sweep;
  out["requests_per_sla"] = cfg.requests_per_sla;
  json policies = json::array();
  for (auto p : cfg.policies) policies.push_back(to_string(p));
  out["policies"] = policies;
  out["cold_start"] =
      cfg.lru_capacity == 0 ? std::string("always_hot") : "lru:" + std::to_string(cfg.lru_capacity);
  out["exec_distribution"] =
      cfg.exec_distribution == ExecDistribution::normal ? "normal" : "lognormal";
  out["device_time_ms"] = std::isinf(cfg.device_time_ms) ? json(nullptr) : json(cfg.device_time_ms);
  out["threshold_ms"] = cfg.threshold_ms;
  out["threshold_fraction"] = cfg.threshold_fraction ? json(*cfg.threshold_fraction) : json(nullptr);
  out["output_ratio"] = cfg.output_ratio;
  out["device_model"] = cfg.device_model ? json(*cfg.device_model) : json(nullptr);
  out["accuracy_metric"] = cfg.selector.accuracy_metric == AccuracyMetric::top1 ? "top1" : "top5";
  out["include_base_in_exploration"] = cfg.selector.include_base_in_exploration;
  out["denominator_epsilon_ms"] = cfg.selector.denominator_epsilon_ms;
  out["seed"] = cfg.seed;
  return out;
}

void validate(SimulationConfig& cfg) {
  if (!cfg.profiles_path.empty()) {
    try {
      cfg.profiles = load_profiles_file(cfg.profiles_path);
    } catch (const Error& e) {
      throw Error(ErrorCode::config, e.what());
    }
  }
  if (cfg.profiles.empty()) throw Error(ErrorCode::config, "no model profiles configured");
  if (cfg.pseudo_count) {
    for (auto& p : cfg.profiles) {
      p.observation_count = *cfg.pseudo_count;
      if (*cfg.pseudo_count < 2) p.std_ms = 0.0;
    }
  }
  // Stable by name, matching ProfileStore snapshots.
  std::sort(cfg.profiles.begin(), cfg.profiles.end(),
            [](const ModelProfile& a, const ModelProfile& b) { return a.name < b.name; });
  ProfileStore check(cfg.profiles);

  if (cfg.requests_per_sla == 0) throw Error(ErrorCode::config, "requests_per_sla must be > 0");
  if (cfg.sla_sweep.empty()) throw Error(ErrorCode::config, "at least one SLA value is required");
  for (double sla : cfg.sla_sweep) {
    if (!(sla > 0.0) || !std::isfinite(sla)) throw Error(ErrorCode::config, "SLA values must be > 0");
  }
  if (cfg.policies.empty()) throw Error(ErrorCode::config, "at least one policy is required");
  if (!(cfg.device_time_ms > 0.0)) throw Error(ErrorCode::config, "device_time_ms must be > 0");
  if (cfg.threshold_fraction) {
    if (!(*cfg.threshold_fraction >= 0.0 && *cfg.threshold_fraction <= 1.0))
      throw Error(ErrorCode::config, "threshold_fraction must lie in [0, 1]");
    if (std::isinf(cfg.device_time_ms))
      throw Error(ErrorCode::config, "threshold_fraction needs a finite device_time_ms");
  }
  const double threshold = cfg.resolved_threshold_ms();
  if (!(threshold >= 0.0 && threshold <= cfg.device_time_ms))
    throw Error(ErrorCode::config, "threshold must lie in [0, device_time_ms]");
  if (!(cfg.output_ratio >= 0.0)) throw Error(ErrorCode::config, "output_ratio must be >= 0");
  if (cfg.device_model && !check.contains(*cfg.device_model))
    throw Error(ErrorCode::config, "device_model '" + *cfg.device_model + "' is not in the store");
  try {
    validate(cfg.selector);
  } catch (const Error& e) {
    throw Error(ErrorCode::config, e.what());
  }
  if (cfg.network.kind == NetworkModel::Kind::trace && cfg.network.trace.empty()) {
    try {
      cfg.network.trace = parse_trace_csv(read_file(cfg.network.trace_path, "trace file"));
    } catch (const Error& e) {
      throw Error(ErrorCode::config, e.what());
    }
    if (cfg.network.trace.empty())
      throw Error(ErrorCode::config, "trace file '" + cfg.network.trace_path + "' has no rows");
  }
}

std::vector<double> sla_sweep(double min_ms, double max_ms, double step_ms) {
  if (!(min_ms > 0.0) || !(max_ms >= min_ms) || !(step_ms > 0.0)) {
    throw Error(ErrorCode::config, "sweep needs 0 < min <= max and step > 0");
  }
  std::vector<double> out;
  const double tolerance = step_ms * 1e-9;
  for (std::uint64_t k = 0;; ++k) {
    const double value = min_ms + static_cast<double>(k) * step_ms;
    if (value > max_ms + tolerance) break;
    out.push_back(value);
  }
  return out;
}

LatencySummary summarize_latency(std::vector<double>& samples) {
  LatencySummary s;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(samples.size());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return samples[lo] + frac * (samples[hi] - samples[lo]);
  };
  s.p25 = quantile(0.25);
  s.p50 = quantile(0.50);
  s.p75 = quantile(0.75);
  s.p99 = quantile(0.99);
  return s;
}

std::string CellResult::modal_model() const {
  const UsageEntry* best = nullptr;
  for (const auto& u : usage) {
    if (!best || u.fraction > best->fraction) best = &u;
  }
  return best ? best->model : std::string();
}

const CellResult* SimulationReport::find(double sla_ms, std::string_view policy) const {
  for (const auto& c : cells) {
    if (c.sla_ms == sla_ms && c.policy == policy) return &c;
  }
  return nullptr;
}

std::vector<std::string> SimulationReport::policies() const {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.policy) == out.end()) out.push_back(c.policy);
  }
  return out;
}

std::uint64_t cell_seed(std::uint64_t seed, double sla_ms, Policy policy) {
  const auto stream = static_cast<std::uint64_t>(
      policy == Policy::cnnselect_device ? Policy::cnnselect : policy);
  return mix64(seed ^ mix64(std::bit_cast<std::uint64_t>(sla_ms)) ^ mix64(stream + 1));
}

SimulationReport run_simulation(SimulationConfig cfg) {
  validate(cfg);

  struct Cell {
    double sla;
    Policy policy;
  };
  std::vector<Cell> cells;
  for (double sla : cfg.sla_sweep) {
    for (Policy p : cfg.policies) cells.push_back({sla, p});
  }

  std::vector<CellResult> results(cells.size());
  unsigned workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(cells.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = CellRunner(cfg, cfg.profiles, cells[i].sla, cells[i].policy).run();
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  SimulationReport report;
  report.cells = std::move(results);
  report.metadata["version"] = version_string();
  report.metadata["seed"] = cfg.seed;
  report.metadata["config"] = to_json(cfg);
  return report;
}

SimulationReport simulate_device_fallback(SimulationConfig cfg) {
  if (std::find(cfg.policies.begin(), cfg.policies.end(), Policy::cnnselect_device) ==
      cfg.policies.end()) {
    cfg.policies.push_back(Policy::cnnselect_device);
  }
  return run_simulation(std::move(cfg));
}

std::string report_csv(const SimulationReport& report) {
  std::string out = "sla_ms,policy,miss_rate,accuracy,lat_mean,lat_p25,lat_p50,lat_p75,lat_p99\n";
  for (const auto& c : report.cells) {
    out += sla_text(c.sla_ms) + ',' + c.policy + ',' + num(c.miss_rate) + ',' + num(c.accuracy) +
           ',' + num(c.latency.mean) + ',' + num(c.latency.p25) + ',' + num(c.latency.p50) + ',' +
           num(c.latency.p75) + ',' + num(c.latency.p99) + '\n';
  }
  return out;
}

std::string usage_csv(const SimulationReport& report) {
  std::string out = "sla_ms,policy,model,fraction\n";
  for (const auto& c : report.cells) {
    for (const auto& u : c.usage) {
      out += sla_text(c.sla_ms) + ',' + c.policy + ',' + csv::quote(u.model) + ',' +
             num(u.fraction) + '\n';
    }
  }
  return out;
}

std::string report_json(const SimulationReport& report) {
  json results = json::array();
  for (const auto& c : report.cells) {
    results.push_back({{"sla_ms", c.sla_ms},
                       {"policy", c.policy},
                       {"requests", c.requests},
                       {"misses", c.misses},
                       {"miss_rate", c.miss_rate},
                       {"accuracy", c.accuracy},
                       {"lat_mean", c.latency.mean},
                       {"lat_p25", c.latency.p25},
                       {"lat_p50", c.latency.p50},
                       {"lat_p75", c.latency.p75},
                       {"lat_p99", c.latency.p99},
                       {"fallbacks", c.fallbacks},
                       {"device_requests", c.device_requests},
                       {"usage", usage_json(c)}});
  }
  json doc{{"metadata", report.metadata}, {"results", results}};
  return doc.dump(2) + "\n";
}

std::string report_summary(const SimulationReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%10s  %-17s %9s %9s %10s %10s  %s\n", "sla_ms", "policy",
                "miss_rate", "accuracy", "lat_mean", "lat_p99", "modal_model");
  out += line;
  for (const auto& c : report.cells) {
    std::snprintf(line, sizeof line, "%10s  %-17s %9.4f %9.4f %10.2f %10.2f  %s\n",
                  sla_text(c.sla_ms).c_str(), c.policy.c_str(), c.miss_rate, c.accuracy,
                  c.latency.mean, c.latency.p99, c.modal_model().c_str());
    out += line;
  }
  return out;
}

SimulationReport report_from_json(std::string_view text) {
  SimulationReport report;
  try {
    const json doc = json::parse(text.begin(), text.end());
    report.metadata = doc.value("metadata", json::object());
    for (const auto& r : doc.at("results")) {
      CellResult c;
      c.sla_ms = r.at("sla_ms").get<double>();
      c.policy = r.at("policy").get<std::string>();
      c.requests = r.value("requests", std::uint64_t{0});
      c.misses = r.value("misses", std::uint64_t{0});
      c.miss_rate = r.at("miss_rate").get<double>();
      c.accuracy = r.at("accuracy").get<double>();
      c.latency = {r.at("lat_mean").get<double>(), r.at("lat_p25").get<double>(),
                   r.at("lat_p50").get<double>(), r.at("lat_p75").get<double>(),
                   r.at("lat_p99").get<double>()};
      c.fallbacks = r.value("fallbacks", std::uint64_t{0});
      c.device_requests = r.value("device_requests", std::uint64_t{0});
      const json usage = r.value("usage", json::object());
      for (const auto& [model, fraction] : usage.items()) {
        c.usage.push_back({model, fraction.get<double>()});
      }
      report.cells.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad report JSON: ") + e.what());
  }
  return report;
}

ComparisonTable compare_policies(const SimulationReport& report, std::string_view baseline,
                                 std::string_view candidate) {
  const auto policies = report.policies();
  if (policies.size() < 2) {
    throw Error(ErrorCode::insufficient_policies, "comparison needs a report with >= 2 policies");
  }
  for (auto name : {baseline, candidate}) {
    if (std::find(policies.begin(), policies.end(), name) == policies.end())
      throw Error(ErrorCode::config, "policy '" + std::string(name) + "' is not in the report");
  }

  ComparisonTable table;
  table.baseline = baseline;
  table.candidate = candidate;
  bool first = true;
  for (const auto& base : report.cells) {
    if (base.policy != baseline) continue;
    const CellResult* cand = report.find(base.sla_ms, candidate);
    if (!cand) continue;
    ComparisonRow row;
    row.sla_ms = base.sla_ms;
    row.latency_reduction_pct =
        base.latency.mean > 0.0
            ? (base.latency.mean - cand->latency.mean) / base.latency.mean * 100.0
            : 0.0;
    row.accuracy_delta = cand->accuracy - base.accuracy;
    row.miss_rate_delta = cand->miss_rate - base.miss_rate;
    if (first) {
      table.summary = row;
      first = false;
    } else {
      table.summary.latency_reduction_pct =
          std::max(table.summary.latency_reduction_pct, row.latency_reduction_pct);
      table.summary.accuracy_delta = std::max(table.summary.accuracy_delta, row.accuracy_delta);
      table.summary.miss_rate_delta = std::max(table.summary.miss_rate_delta, row.miss_rate_delta);
    }
    table.rows.push_back(row);
  }
  table.summary.sla_ms.reset();
  return table;
}

std::string comparison_csv(const ComparisonTable& table) {
  std::string out = "sla_ms,baseline,candidate,latency_reduction_pct,accuracy_delta,miss_rate_delta\n";
  auto line = [&](const ComparisonRow& r) {
    out += (r.sla_ms ? sla_text(*r.sla_ms) : std::string("max")) + ',' + table.baseline + ',' +
           table.candidate + ',' + num(r.latency_reduction_pct) + ',' + num(r.accuracy_delta) +
           ',' + num(r.miss_rate_delta) + '\n';
  };
  for (const auto& r : table.rows) line(r);
  line(table.summary);
  return out;
}

}  // namespace cnnselect
