// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gateway.hpp"
#include "oracle.hpp"
#include "profile_store.hpp"
#include "selector.hpp"
#include "simulator.hpp"
#include "support.hpp"

#ifndef CNNSELECT_CLI
#define CNNSELECT_CLI "cnnselect"
#endif

using namespace cnnselect;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

bool close(double a, double b, double tol = 1e-9) {
  return std::fabs(a - b) <= tol * std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
}

SimulationConfig table_sim(std::vector<double> slas, std::uint64_t seed = 42) {
  SimulationConfig cfg;
  cfg.profiles_path = testing::fixture("paper_models.json");
  cfg.network = NetworkModel::parse("fixed:63");
  cfg.sla_sweep = std::move(slas);
  cfg.requests_per_sla = 10000;
  cfg.seed = seed;
  return cfg;
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(20240601);
  std::uniform_int_distribution<int> count(2, 8);
  std::uniform_real_distribution<double> acc(0.2, 0.95), mu(10, 200), sigma(0, 20),
      upper(-50, 300), thr(0, 80);
  int mismatches = 0;
  std::string first;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ModelProfile> ps;
    const int n = count(gen);
    for (int i = 0; i < n; ++i)
      ps.push_back(testing::make("m" + std::to_string(i), acc(gen), mu(gen), sigma(gen)));
    const double tu = upper(gen);
    const double tl = tu - thr(gen);
    const auto range = BudgetRange::from_limits(tu, tl);
    const SelectorConfig cfg;
    const auto expect = oracle::select(testing::to_oracle(ps), tu, tl, cfg.denominator_epsilon_ms);

    bool ok = true;
    const auto base = stage1_base(ps, range, cfg);
    ok &= base.fallback == expect.fallback && ps[base.index].name == expect.base;
    Rng rng(trial);
    const auto d = select(ps, range, cfg, rng);
    auto eligible = d.eligible_set;
    std::sort(eligible.begin(), eligible.end());
    ok &= eligible == expect.eligible;
    if (!expect.fallback) {
      ok &= d.exploration_range.has_value() && close(d.exploration_range->low_ms, expect.lo) &&
            close(d.exploration_range->high_ms, expect.hi);
      for (const auto& [name, u] : expect.utility)
        ok &= d.utilities.count(name) && close(d.utilities.at(name), u);
    }
    for (const auto& [name, p] : expect.prob)
      ok &= d.probabilities.count(name) && close(d.probabilities.at(name), p);
    ok &= d.probabilities.size() == expect.prob.size();
    if (!ok && mismatches++ == 0) first = "trial " + std::to_string(trial);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mismatches == 0 && secs < 10.0;
  o.detail = std::to_string(mismatches) + " mismatches in 1000 stores" +
             (first.empty() ? "" : " (first: " + first + ")") + fmt(", %.2f s", secs);
  return o;
}

Outcome worked_example() {
  const auto ps = testing::table_profiles();
  Rng rng(1);
  const auto d = select(ps, BudgetRange::from_limits(60, 50), SelectorConfig{}, rng);
  auto eligible = d.eligible_set;
  std::sort(eligible.begin(), eligible.end());
  const std::vector<std::string> want = {"DenseNet", "InceptionV3", "MobileNetV1 1.0",
                                         "NasNet Mobile"};
  const double pr = d.probabilities.count("DenseNet") ? d.probabilities.at("DenseNet") : -1;
  Outcome o;
  o.pass = d.base_model == std::optional<std::string>("MobileNetV1 1.0") && eligible == want &&
           std::fabs(pr - 0.873) <= 0.001;
  o.detail = "base " + d.base_model.value_or("<none>") + ", |M_E| " +
             std::to_string(eligible.size()) + fmt(", Pr(DenseNet) %.5f", pr);
  return o;
}

Outcome convergence() {
  const auto t0 = Clock::now();
  auto cfg = table_sim(sla_sweep(25, 800, 25));
  cfg.policies = {Policy::cnnselect};
  const auto report = run_simulation(cfg);
  const auto ps = testing::table_profiles();
  std::map<std::string, double> acc;
  for (const auto& p : ps) acc[p.name] = p.accuracy_top1;

  int inversions = 0;
  double prev = -1;
  std::string last;
  for (double sla : cfg.sla_sweep) {
    last = report.find(sla, "cnnselect")->modal_model();
    const double a = acc.at(last);
    if (a < prev) ++inversions;
    prev = a;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = last == "NasNet Large" && inversions <= 1 && secs < 60.0;
  o.detail = "modal model at 800 ms: " + last + ", " + std::to_string(inversions) +
             " inversions" + fmt(", %.2f s", secs);
  return o;
}

Outcome greedy_direction() {
  Outcome o{true, ""};
  double worst_reduction = 1e9;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = table_sim(sla_sweep(25, 800, 25), seed);
    cfg.policies = {Policy::cnnselect, Policy::greedy};
    const auto report = run_simulation(cfg);
    double best = 0;
    for (double sla : cfg.sla_sweep) {
      const auto* c = report.find(sla, "cnnselect");
      const auto* g = report.find(sla, "greedy");
      if (c->miss_rate > g->miss_rate) {
        o.pass = false;
        o.detail += fmt("seed %.0f sla %.0f: cnnselect misses more; ", seed, sla);
      }
      best = std::max(best, 100.0 * (g->latency.mean - c->latency.mean) / g->latency.mean);
    }
    if (best < 25.0) {
      o.pass = false;
      o.detail += fmt("seed %.0f: best latency reduction %.1f%%; ", seed, best);
    }
    worst_reduction = std::min(worst_reduction, best);
  }
  o.detail += fmt("smallest per-seed max latency reduction %.1f%% over seeds 1-5", worst_reduction);
  return o;
}

Outcome low_sla() {
  const double sla = 115 + 2 * 63;
  auto cfg = table_sim({sla, 100, 126});
  cfg.policies = {Policy::cnnselect};
  const auto report = run_simulation(cfg);
  const auto* cell = report.find(sla, "cnnselect");
  bool fallback_always = true;
  for (double s : {100.0, 126.0}) {
    const auto* c = report.find(s, "cnnselect");
    fallback_always &= c->fallbacks == c->requests;
  }
  const auto ps = testing::table_profiles();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto d = select(ps, BudgetRange::from_limits(-double(seed), -double(seed) - 30.0), SelectorConfig{}, rng);
    fallback_always &= d.fallback && d.chosen == "MobileNetV1 0.25";
  }
  Outcome o;
  o.pass = cell->miss_rate < 0.20 && fallback_always;
  o.detail = fmt("miss rate %.4f at sla %.0f ms", cell->miss_rate, sla) +
             (fallback_always ? ", fallback on every non-positive budget" : ", fallback missed");
  return o;
}

Outcome sampling() {
  const auto ps = testing::table_profiles();
  const auto range = BudgetRange::from_limits(60, 50);
  Rng rng(6);
  std::map<std::string, int> counts;
  SelectionDecision d;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    d = select(ps, range, SelectorConfig{}, rng);
    counts[d.chosen]++;
  }
  double worst = 0;
  for (const auto& [name, pr] : d.probabilities)
    worst = std::max(worst, std::fabs(counts[name] / double(draws) - pr));
  return {worst <= 0.02, fmt("largest frequency error %.4f over 10000 draws", worst)};
}

Outcome welford() {
  std::mt19937_64 gen(7);
  std::lognormal_distribution<double> dist(4.0, 0.4);
  ProfileStore store{std::vector{testing::make("m", 0.5, 1.0, 0.0, 0)}};
  std::vector<double> xs;
  xs.reserve(100000);
  for (int i = 0; i < 100000; ++i) {
    xs.push_back(dist(gen));
    store.observe("m", xs.back());
  }
  const auto expect = oracle::two_pass(xs);
  const auto p = *store.find("m");
  const double em = std::fabs(p.mean_ms - expect.mean) / expect.mean;
  const double es = std::fabs(p.std_ms - expect.std) / expect.std;
  return {em <= 1e-9 && es <= 1e-9, fmt("relative error mean %.2e, std %.2e", em, es)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("cnnselect_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::vector<std::string> reports;
  std::vector<std::string> usages;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = dir / ("run" + std::to_string(run));
    fs::create_directories(out);
    const std::string cmd = std::string("\"") + CNNSELECT_CLI + "\" sweep --profiles \"" +
                            testing::fixture("paper_models.json") +
                            "\" --network lognormal:63:0.3 --sla-min 25 --sla-max 500 "
                            "--sla-step 25 --requests 10000 --seed 42 --device-fallback --quiet "
                            "--out \"" + (out / "report.csv").string() + "\"";
    if (std::system(cmd.c_str()) != 0) {
      fs::remove_all(dir);
      return {false, "cli exited non-zero"};
    }
    reports.push_back(slurp(out / "report.csv"));
    usages.push_back(slurp(out / "usage.csv"));
  }
  fs::remove_all(dir);
  const bool same = !reports[0].empty() && reports[0] == reports[1] && usages[0] == usages[1];
  return {same, same ? "report.csv and usage.csv byte-identical across two runs"
                     : "outputs differ between runs"};
}

Outcome gateway_integration() {
  GatewayConfig cfg;
  cfg.seed = 42;
  cfg.test_mode = true;
  cfg.http_threads = 16;
  auto store = std::make_shared<ProfileStore>(testing::table_profiles());
  Gateway gw(cfg, store, std::make_unique<MockBackend>(0.05));
  const int port = gw.start("127.0.0.1", 0);

  std::atomic<int> valid{0};
  std::mutex failure_mutex;
  std::string first_failure;
  auto note = [&](const std::string& why) {
    std::lock_guard lock(failure_mutex);
    if (first_failure.empty()) first_failure = why;
  };
  std::vector<std::thread> clients;
  for (int i = 0; i < 100; ++i) {
    clients.emplace_back([&, i] {
      httplib::Client cli("127.0.0.1", port);
      cli.set_read_timeout(30, 0);
      const nlohmann::json body = {{"sla_ms", 150 + (i % 10) * 25}, {"payload_bytes", 330000}};
      auto res = cli.Post("/v1/infer", body.dump(), "application/json");
      if (!res) return note("transport error: " + httplib::to_string(res.error()));
      if (res->status != 200) return note("status " + std::to_string(res->status) + ": " + res->body);
      const auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded() || !j.contains("decision")) return;
      const auto& d = j["decision"];
      double total = 0;
      for (const auto& [_, p] : d["probabilities"].items()) total += p.get<double>();
      bool in_set = false;
      for (const auto& m : d["eligible_set"]) in_set |= m == j["model"];
      if (std::fabs(total - 1.0) <= 1e-9 && in_set && d["chosen"] == j["model"]) {
        ++valid;
      } else {
        note("inconsistent decision: " + res->body);
      }
    });
  }
  for (auto& t : clients) t.join();

  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Get("/v1/metrics");
  double total = -1, per_model = 0;
  if (res && res->status == 200) {
    std::istringstream in(res->body);
    std::string line;
    while (std::getline(in, line)) {
      const auto sp = line.rfind(' ');
      if (sp == std::string::npos) continue;
      const std::string key = line.substr(0, sp);
      const double v = std::stod(line.substr(sp + 1));
      if (key == "requests_total") total = v;
      if (key.rfind("model_requests_total{", 0) == 0) per_model += v;
    }
  }
  gw.stop();
  Outcome o;
  o.pass = valid == 100 && total == 100 && per_model == 100;
  o.detail = std::to_string(valid.load()) + "/100 valid decisions" +
             fmt(", requests_total %.0f, per-model sum %.0f", total, per_model) +
             (first_failure.empty() ? "" : " (first failure: " + first_failure + ")");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 oracle equivalence", oracle_equivalence},
      {"2 worked example", worked_example},
      {"3 convergence trend", convergence},
      {"4 greedy comparison direction", greedy_direction},
      {"5 low-sla behaviour", low_sla},
      {"6 statistical sampling", sampling},
      {"7 profile-store numerics", welford},
      {"8 cli determinism", determinism},
      {"9 gateway integration", gateway_integration},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
