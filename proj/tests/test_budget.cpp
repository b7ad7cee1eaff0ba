#include <doctest.h>

#include <cmath>
#include <random>

#include "budget.hpp"
#include "error.hpp"
#include "support.hpp"

using namespace cnnselect;

namespace {

RequestContext ctx(double sla, double t_in, double threshold, double device = 200.0) {
  return RequestContext{sla, 0.0, t_in, device, threshold};
}

}  // namespace

TEST_CASE("budget examples") {
  const auto r = compute_budget(ctx(200, 63, 30));
  CHECK(r.budget_ms == doctest::Approx(74));
  CHECK(r.upper_ms == doctest::Approx(74));
  CHECK(r.lower_ms == doctest::Approx(44));

  const auto zero = compute_budget(ctx(150, 0, 20));
  CHECK(zero.budget_ms == 150);
  CHECK(zero.upper_ms == zero.lower_ms + 20);

  const auto negative = compute_budget(ctx(100, 60, 30));
  CHECK(negative.budget_ms == doctest::Approx(-20));
  CHECK(negative.lower_ms == doctest::Approx(-50));
}

TEST_CASE("budget is linear in sla and transfer time") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> sla(1, 1000), t(0, 300), th(0, 100);
  for (int i = 0; i < 200; ++i) {
    const double s = sla(rng), ti = t(rng), thr = th(rng), d = 0.5;
    const auto a = compute_budget(ctx(s, ti, thr, 200));
    const auto b = compute_budget(ctx(s + d, ti, thr, 200));
    const auto c = compute_budget(ctx(s, ti + d, thr, 200));
    CHECK(b.budget_ms - a.budget_ms == doctest::Approx(d));
    CHECK(a.budget_ms - c.budget_ms == doctest::Approx(2 * d));
    CHECK(a.upper_ms - a.lower_ms == doctest::Approx(thr));
  }
}

TEST_CASE("request context validation") {
  auto code = [](const RequestContext& c) {
    try {
      compute_budget(c);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io;
  };
  CHECK(code(ctx(0, 10, 10)) == ErrorCode::domain);
  CHECK(code(ctx(100, -1, 10)) == ErrorCode::domain);
  CHECK(code(ctx(100, 10, -1)) == ErrorCode::domain);
  CHECK(code(ctx(100, 10, 300, 200)) == ErrorCode::domain);
  CHECK(code(ctx(100, 10, 10, 0)) == ErrorCode::domain);
}

TEST_CASE("downscale decision") {
  CHECK_FALSE(should_downscale(38, 10, 36.83));
  CHECK(should_downscale(0, 5, 5));
  CHECK(should_downscale(10, 20, 50));
}

TEST_CASE("downscale is monotone in the original upload time") {
  for (double orig = 0; orig < 100; orig += 0.5) {
    if (should_downscale(20, 15, orig)) CHECK(should_downscale(20, 15, orig + 1));
  }
}

TEST_CASE("estimator recovers a single observation") {
  NetworkEstimator est;
  est.record(330000, 63.0);
  CHECK(est.estimate(330000) == doctest::Approx(63.0));
  CHECK(est.estimate(0) == doctest::Approx(0.0));
}

TEST_CASE("zero bytes gives the fixed overhead") {
  NetworkProfile profile{"p", 5.0, 0.2, {}};
  NetworkEstimator est(0.2, profile);
  CHECK(est.estimate(0) == doctest::Approx(5.0));
  CHECK(est.estimate(100000) == doctest::Approx(25.0));
  est.record(100000, 45.0);
  // One payload size: overhead stays at the profile's, rate is learned.
  CHECK(est.estimate(0) == doctest::Approx(5.0));
  CHECK(est.estimate(100000) == doctest::Approx(45.0));
}

TEST_CASE("estimator matches least squares on a linear history") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint64_t> bytes(20000, 900000);
  std::normal_distribution<double> noise(0.0, 0.3);
  // Weights close to uniform so plain least squares is the right oracle.
  NetworkEstimator est(0.002);
  std::vector<double> xs, ys;
  for (int i = 0; i < 400; ++i) {
    const auto b = bytes(rng);
    const double ms = 4.0 + 0.19 * (b / 1000.0) + noise(rng);
    est.record(b, ms);
    xs.push_back(b / 1000.0);
    ys.push_back(ms);
  }
  const auto line = oracle::least_squares(xs, ys);
  const auto fit = est.fit();
  CHECK(fit.overhead_ms == doctest::Approx(line.intercept).epsilon(0.05));
  CHECK(fit.per_byte_ms * 1000.0 == doctest::Approx(line.slope).epsilon(0.05));
  CHECK(fit.overhead_ms == doctest::Approx(4.0).epsilon(0.05));
  CHECK(fit.per_byte_ms * 1000.0 == doctest::Approx(0.19).epsilon(0.05));
}

TEST_CASE("estimator without history or fallback is unavailable") {
  NetworkEstimator est;
  CHECK_FALSE(est.has_history());
  try {
    est.estimate(1000);
    FAIL("expected estimation_unavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::estimation_unavailable);
  }
}

TEST_CASE("network profile fixture parses and round-trips") {
  const auto p = load_network_profile_file(testing::fixture("campus_wifi.json"));
  CHECK(p.name == "campus-wifi");
  CHECK(p.per_kb_ms * 330 == doctest::Approx(63.0));
  CHECK(p.jitter.kind == JitterModel::Kind::lognormal);
  const auto again = parse_network_profile(save_network_profile(p));
  CHECK(again.per_kb_ms == p.per_kb_ms);
  CHECK(again.jitter.cv == p.jitter.cv);
  CHECK_THROWS(parse_network_profile("{\"name\": 3}"));
}
