// cnnselect command-line front end. Talks to the library only through the
// C API.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad flags or configuration.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "cnnselect/cnnselect.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CliFailure {
  int code;
  std::string message;
};

using owned_string = std::unique_ptr<char, decltype(&cns_string_free)>;

owned_string take(char* s) { return owned_string(s, &cns_string_free); }

void check(cns_status status, const char* what) {
  if (status == CNS_OK) return;
  const int code = status == CNS_E_CONFIG ? kExitUsage : kExitRuntime;
  throw CliFailure{code, std::string(what) + ": " + cns_last_error()};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliFailure{kExitRuntime, "cannot open '" + path + "'"};
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliFailure{kExitRuntime, "cannot write '" + path + "'"};
  out << content;
  if (!out) throw CliFailure{kExitRuntime, "failed writing '" + path + "'"};
}

cns_format format_of(const std::string& path, const std::string& override_format = "") {
  const std::string ext =
      override_format.empty() ? std::filesystem::path(path).extension().string() : "." + override_format;
  if (ext == ".csv") return CNS_FORMAT_CSV;
  if (ext == ".json") return CNS_FORMAT_JSON;
  throw CliFailure{kExitUsage, "cannot tell the format of '" + path + "' (use .json or .csv)"};
}

struct SimFlags {
  std::string profiles = "fixtures/paper_models.json";
  std::string network = "lognormal:63:0.3";
  std::uint64_t requests = 10000;
  std::vector<std::string> policies = {"cnnselect", "greedy", "fastest", "oracle"};
  std::string cold_start = "always_hot";
  std::string exec_dist = "normal";
  std::string device_time = "200";
  double threshold = 30.0;
  std::optional<double> threshold_fraction;
  double output_ratio = 0.1;
  std::string device_model;
  std::string metric = "top1";
  bool literal_exploration = false;
  double epsilon = 0.1;
  std::optional<std::uint64_t> pseudo_count;
  std::uint64_t seed = 42;
  unsigned threads = 0;
  bool device_fallback = false;
  std::string out = "report.csv";
  std::string usage_out;
  std::string json_out;
  bool quiet = false;
};

void add_sim_flags(CLI::App& cmd, SimFlags& f) {
  cmd.add_option("--profiles", f.profiles, "Profile file (.json or .csv)");
  cmd.add_option("--network", f.network,
                 "Network model: fixed:<ms> | normal:<mean>:<std> | lognormal:<mean>[:<cv>] | "
                 "trace:<csv>");
  cmd.add_option("--requests", f.requests, "Requests per SLA point")->check(CLI::PositiveNumber);
  cmd.add_option("--policy", f.policies, "Policies to run (repeatable)")
      ->check(CLI::IsMember({"cnnselect", "greedy", "fastest", "oracle", "cnnselect_device"}));
  cmd.add_option("--cold-start", f.cold_start, "always_hot or lru:<capacity>");
  cmd.add_option("--exec-dist", f.exec_dist, "Execution-time distribution")
      ->check(CLI::IsMember({"normal", "lognormal"}));
  cmd.add_option("--device-time", f.device_time, "On-device inference time T_D in ms, or 'inf'");
  cmd.add_option("--threshold", f.threshold, "Profile-uncertainty threshold in ms")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--threshold-fraction", f.threshold_fraction,
                 "Threshold as a fraction of T_D (overrides --threshold)")
      ->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--output-ratio", f.output_ratio, "T_output / T_input when the trace has none")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--device-model", f.device_model,
                 "Model whose accuracy the device path reports (default: fastest)");
  cmd.add_option("--metric", f.metric, "Accuracy metric")->check(CLI::IsMember({"top1", "top5"}));
  cmd.add_flag("--literal-exploration", f.literal_exploration,
               "Do not force the base model into the eligible set");
  cmd.add_option("--epsilon", f.epsilon, "Utility denominator clamp in ms")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--pseudo-count", f.pseudo_count, "Override every profile's observation count");
  cmd.add_option("--seed", f.seed, "Random seed");
  cmd.add_option("--threads", f.threads, "Worker threads (0 = hardware concurrency)");
  cmd.add_flag("--device-fallback", f.device_fallback, "Add the cnnselect_device column");
  cmd.add_option("--out", f.out, "Report CSV path");
  cmd.add_option("--usage-out", f.usage_out, "Usage CSV path (default: usage.csv beside --out)");
  cmd.add_option("--json-out", f.json_out, "Optional JSON report path");
  cmd.add_flag("--quiet", f.quiet, "Do not print the summary table");
}

std::string sim_config_json(const SimFlags& f, const std::vector<double>& slas) {
  nlohmann::json cfg;
  cfg["profiles_path"] = f.profiles;
  cfg["network"] = f.network;
  cfg["sla_ms"] = slas;
  cfg["requests_per_sla"] = f.requests;
  cfg["policies"] = f.policies;
  cfg["cold_start"] = f.cold_start;
  cfg["exec_distribution"] = f.exec_dist;
  if (f.device_time == "inf") {
    cfg["device_time_ms"] = nullptr;
  } else {
    try {
      std::size_t used = 0;
      cfg["device_time_ms"] = std::stod(f.device_time, &used);
      if (used != f.device_time.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw CliFailure{kExitUsage, "--device-time must be a number or 'inf'"};
    }
  }
  cfg["threshold_ms"] = f.threshold;
  if (f.threshold_fraction) cfg["threshold_fraction"] = *f.threshold_fraction;
  cfg["output_ratio"] = f.output_ratio;
  if (!f.device_model.empty()) cfg["device_model"] = f.device_model;
  cfg["accuracy_metric"] = f.metric;
  cfg["include_base_in_exploration"] = !f.literal_exploration;
  cfg["denominator_epsilon_ms"] = f.epsilon;
  if (f.pseudo_count) cfg["pseudo_count"] = *f.pseudo_count;
  cfg["seed"] = f.seed;
  cfg["threads"] = f.threads;
  return cfg.dump();
}

using report_ptr = std::unique_ptr<cns_report, decltype(&cns_report_free)>;

report_ptr simulate(const SimFlags& f, const std::vector<double>& slas) {
  cns_report* raw = nullptr;
  check(cns_simulate(sim_config_json(f, slas).c_str(), f.device_fallback ? 1 : 0, &raw),
        "simulation failed");
  return report_ptr(raw, &cns_report_free);
}

void write_reports(const SimFlags& f, const cns_report* report) {
  char* text = nullptr;
  check(cns_report_csv(report, &text), "report");
  write_file(f.out, take(text).get());

  std::string usage_path = f.usage_out;
  if (usage_path.empty()) {
    usage_path = (std::filesystem::path(f.out).parent_path() / "usage.csv").string();
  }
  check(cns_report_usage_csv(report, &text), "usage report");
  write_file(usage_path, take(text).get());

  if (!f.json_out.empty()) {
    check(cns_report_json(report, &text), "json report");
    write_file(f.json_out, take(text).get());
  }
  if (!f.quiet) {
    check(cns_report_summary(report, &text), "summary");
    std::cout << take(text).get();
  }
}

std::vector<double> sweep_points(double min, double max, double step) {
  std::size_t count = 0;
  check(cns_sla_sweep(min, max, step, nullptr, 0, &count), "bad sweep");
  std::vector<double> points(count);
  check(cns_sla_sweep(min, max, step, points.data(), points.size(), &count), "bad sweep");
  return points;
}

int run_serve(const std::string& host, int port, const nlohmann::json& cfg) {
  // Block termination signals before any server thread exists so that only
  // the sigwait below receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  cns_gateway* raw = nullptr;
  check(cns_gateway_new(cfg.dump().c_str(), &raw), "gateway");
  std::unique_ptr<cns_gateway, decltype(&cns_gateway_free)> gateway(raw, &cns_gateway_free);
  int bound = 0;
  check(cns_gateway_start(gateway.get(), host.c_str(), port, &bound), "cannot start server");
  std::cout << "cnnselect gateway listening on " << host << ":" << bound << std::endl;

  int received = 0;
  sigwait(&signals, &received);
  std::cout << "shutting down" << std::endl;
  cns_gateway_stop(gateway.get());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cnnselect: SLA-aware model selection simulator and inference gateway"};
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", std::string(cns_version()));
  app.require_subcommand(1);

  SimFlags sim;
  std::vector<double> slas = {200.0};
  auto* simulate_cmd = app.add_subcommand("simulate", "Replay request streams at given SLAs");
  add_sim_flags(*simulate_cmd, sim);
  simulate_cmd->add_option("--sla", slas, "SLA target in ms (repeatable)")
      ->check(CLI::PositiveNumber);

  SimFlags sweep;
  double sla_min = 25.0, sla_max = 500.0, sla_step = 25.0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Replay request streams over an SLA range");
  add_sim_flags(*sweep_cmd, sweep);
  sweep_cmd->add_option("--sla-min", sla_min, "First SLA in ms")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--sla-max", sla_max, "Last SLA in ms")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--sla-step", sla_step, "SLA increment in ms")->check(CLI::PositiveNumber);

  SimFlags cmp;
  std::string cmp_report;
  std::string baseline = "greedy";
  std::string candidate = "cnnselect";
  std::string cmp_out;
  double cmp_min = 25.0, cmp_max = 500.0, cmp_step = 25.0;
  auto* compare_cmd = app.add_subcommand(
      "compare", "Per-SLA deltas between two policies (from --report or a fresh sweep)");
  add_sim_flags(*compare_cmd, cmp);
  compare_cmd->add_option("--report", cmp_report, "JSON report written by --json-out");
  compare_cmd->add_option("--baseline", baseline, "Baseline policy");
  compare_cmd->add_option("--candidate", candidate, "Candidate policy");
  compare_cmd->add_option("--comparison-out", cmp_out, "Write the comparison CSV here");
  compare_cmd->add_option("--sla-min", cmp_min, "First SLA in ms")->check(CLI::PositiveNumber);
  compare_cmd->add_option("--sla-max", cmp_max, "Last SLA in ms")->check(CLI::PositiveNumber);
  compare_cmd->add_option("--sla-step", cmp_step, "SLA increment in ms")->check(CLI::PositiveNumber);

  std::string host = "0.0.0.0";
  int port = 8080;
  std::string serve_profiles = "fixtures/paper_models.json";
  std::uint64_t serve_seed = 0;
  bool test_mode = false, freeze = false, no_create = false;
  double serve_device = 200.0, serve_threshold = 30.0, time_scale = 1.0;
  std::string serve_metric = "top1", network_profile;
  unsigned http_threads = 16;
  auto* serve_cmd = app.add_subcommand("serve", "Run the mock inference gateway");
  serve_cmd->add_option("--host", host, "Listen address");
  serve_cmd->add_option("--port", port, "Listen port")->envname("CNNSELECT_PORT")
      ->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--profiles", serve_profiles, "Profile file")->envname("CNNSELECT_PROFILES");
  serve_cmd->add_option("--seed", serve_seed, "Server seed")->envname("CNNSELECT_SEED");
  serve_cmd->add_flag("--test-mode", test_mode, "Derive per-request generators from the seed");
  serve_cmd->add_flag("--freeze-profiles", freeze, "Do not update profiles from observations");
  serve_cmd->add_flag("--no-create", no_create, "PUT of an unknown model answers 409");
  serve_cmd->add_option("--device-time", serve_device, "On-device inference time T_D in ms")
      ->check(CLI::PositiveNumber);
  serve_cmd->add_option("--threshold", serve_threshold, "Default threshold in ms")
      ->check(CLI::NonNegativeNumber);
  serve_cmd->add_option("--metric", serve_metric, "Accuracy metric")
      ->check(CLI::IsMember({"top1", "top5"}));
  serve_cmd->add_option("--network-profile", network_profile,
                        "Network profile JSON used before any transfer is observed");
  serve_cmd->add_option("--http-threads", http_threads, "Request worker threads")
      ->check(CLI::PositiveNumber);
  serve_cmd->add_option("--time-scale", time_scale, "Scale applied to mock execution sleeps")
      ->check(CLI::NonNegativeNumber);

  auto* profiles_cmd = app.add_subcommand("profiles", "Validate, convert or show profile files");
  profiles_cmd->require_subcommand(1);
  std::string validate_path, show_path, convert_in, convert_out, convert_to;
  auto* validate_cmd = profiles_cmd->add_subcommand("validate", "Check a profile file");
  validate_cmd->add_option("file", validate_path, "Profile file")->required();
  auto* convert_cmd = profiles_cmd->add_subcommand("convert", "Convert between JSON and CSV");
  convert_cmd->add_option("input", convert_in, "Input profile file")->required();
  convert_cmd->add_option("output", convert_out, "Output file ('-' for stdout)")->required();
  convert_cmd->add_option("--to", convert_to, "Output format (default: from the extension)")
      ->check(CLI::IsMember({"json", "csv"}));
  auto* show_cmd = profiles_cmd->add_subcommand("show", "Print a profile table");
  show_cmd->add_option("file", show_path, "Profile file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*simulate_cmd) {
      auto report = simulate(sim, slas);
      write_reports(sim, report.get());
    } else if (*sweep_cmd) {
      if (sla_max < sla_min) throw CliFailure{kExitUsage, "--sla-max must be >= --sla-min"};
      auto report = simulate(sweep, sweep_points(sla_min, sla_max, sla_step));
      write_reports(sweep, report.get());
    } else if (*compare_cmd) {
      report_ptr report(nullptr, &cns_report_free);
      if (!cmp_report.empty()) {
        const std::string text = read_file(cmp_report);
        cns_report* raw = nullptr;
        check(cns_report_load(text.data(), text.size(), &raw), "cannot load report");
        report.reset(raw);
      } else {
        if (cmp_max < cmp_min) throw CliFailure{kExitUsage, "--sla-max must be >= --sla-min"};
        report = simulate(cmp, sweep_points(cmp_min, cmp_max, cmp_step));
      }
      char* text = nullptr;
      check(cns_compare(report.get(), baseline.c_str(), candidate.c_str(), &text), "compare");
      const auto table = take(text);
      if (!cmp_out.empty()) write_file(cmp_out, table.get());
      std::cout << table.get();
    } else if (*serve_cmd) {
      nlohmann::json cfg{{"profiles_path", serve_profiles},
                         {"seed", serve_seed},
                         {"test_mode", test_mode},
                         {"freeze_profiles", freeze},
                         {"allow_create", !no_create},
                         {"device_time_ms", serve_device},
                         {"threshold_ms", serve_threshold},
                         {"accuracy_metric", serve_metric},
                         {"http_threads", http_threads},
                         {"time_scale", time_scale}};
      if (!network_profile.empty()) cfg["network_profile_path"] = network_profile;
      return run_serve(host, port, cfg);
    } else if (*validate_cmd) {
      const std::string text = read_file(validate_path);
      char* listing = nullptr;
      const cns_status status =
          cns_profiles_validate(text.data(), text.size(), format_of(validate_path), &listing);
      const auto owned = take(listing);
      if (status == CNS_OK) {
        std::cout << validate_path << ": ok\n";
        return 0;
      }
      if (status != CNS_E_VALIDATION) check(status, "validate");
      std::cerr << validate_path << ": invalid\n" << (owned ? owned.get() : "");
      return kExitRuntime;
    } else if (*convert_cmd) {
      const std::string text = read_file(convert_in);
      const cns_format to = convert_to.empty() ? format_of(convert_out) : format_of("", convert_to);
      char* out = nullptr;
      check(cns_profiles_convert(text.data(), text.size(), format_of(convert_in), to, &out),
            "convert");
      const auto owned = take(out);
      if (convert_out == "-") {
        std::cout << owned.get();
      } else {
        write_file(convert_out, owned.get());
      }
    } else if (*show_cmd) {
      const std::string text = read_file(show_path);
      char* out = nullptr;
      check(cns_profiles_show(text.data(), text.size(), format_of(show_path), &out), "show");
      std::cout << take(out).get();
    }
  } catch (const CliFailure& f) {
    std::cerr << "error: " << f.message << "\n";
    if (f.code == kExitUsage) std::cerr << "run with --help for usage\n";
    return f.code;
  }
  return 0;
}
