#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "error.hpp"
#include "profile_store.hpp"
#include "support.hpp"

using namespace cnnselect;

namespace {

ErrorCode code_of(const std::string& text, ProfileFormat format = ProfileFormat::json) {
  try {
    load_profiles(text, format);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

std::string message_of(const std::string& text, ProfileFormat format = ProfileFormat::json) {
  try {
    load_profiles(text, format);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

const char* kTwoRecords = R"([
  {"name": "a", "accuracy_top1": 50, "accuracy_top5": 70, "mean_ms": 10, "std_ms": 1,
   "cold_start_mean_ms": null, "cold_start_std_ms": null, "observation_count": 5},
  {"name": "b", "accuracy_top1": 60, "accuracy_top5": 80, "mean_ms": 20, "std_ms": 2,
   "cold_start_mean_ms": 100, "cold_start_std_ms": 10, "observation_count": 5}
])";

}  // namespace

TEST_CASE("table records load with the published statistics") {
  const auto profiles = testing::table_profiles();
  REQUIRE(profiles.size() == 11);
  auto find = [&](const std::string& name) {
    return *std::find_if(profiles.begin(), profiles.end(),
                         [&](const ModelProfile& p) { return p.name == name; });
  };
  const auto small = find("MobileNetV1 0.25");
  CHECK(small.mean_ms == doctest::Approx(25.73));
  CHECK(small.std_ms == doctest::Approx(1.22));
  CHECK(small.accuracy_top1 == doctest::Approx(0.497));
  CHECK(small.accuracy_top5 == doctest::Approx(0.741));
  CHECK(*small.cold_start_mean_ms == doctest::Approx(272.81));
  CHECK(*small.cold_start_std_ms == doctest::Approx(45.00));

  const auto large = find("NasNet Large");
  CHECK(large.mean_ms == doctest::Approx(112.61));
  CHECK(large.std_ms == doctest::Approx(6.09));
  CHECK(large.accuracy_top1 == doctest::Approx(0.826));
}

TEST_CASE("empty documents give an empty store") {
  CHECK(load_profiles("").empty());
  CHECK(load_profiles("  \n").empty());
  CHECK(load_profiles("[]").empty());
  CHECK(ProfileStore(load_profiles("")).empty());
}

TEST_CASE("malformed records name the offender") {
  SUBCASE("missing key") {
    const std::string text = R"([{"name": "x", "accuracy_top1": 1}])";
    CHECK(code_of(text) == ErrorCode::parse);
    CHECK(message_of(text).find("record 0") != std::string::npos);
  }
  SUBCASE("unknown key") {
    std::string text = kTwoRecords;
    text.replace(text.find("\"observation_count\": 5}"), 23,
                 "\"observation_count\": 5, \"extra\": 1}");
    CHECK(code_of(text) == ErrorCode::parse);
  }
  SUBCASE("negative std names field and line") {
    std::string text = kTwoRecords;
    text.replace(text.find("\"std_ms\": 2"), 11, "\"std_ms\": -2");
    const auto violations = validate_profiles(text, ProfileFormat::json);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].field == "std_ms");
    CHECK(violations[0].record == 1u);
    CHECK(violations[0].line == 4u);
    CHECK(violations[0].describe().find("std_ms") != std::string::npos);
  }
  SUBCASE("top1 above top5") {
    std::string text = kTwoRecords;
    text.replace(text.find("\"accuracy_top1\": 60"), 19, "\"accuracy_top1\": 90");
    CHECK(code_of(text) == ErrorCode::parse);
  }
  SUBCASE("cold start faster than hot") {
    std::string text = kTwoRecords;
    text.replace(text.find("\"cold_start_mean_ms\": 100"), 25, "\"cold_start_mean_ms\": 1");
    CHECK(message_of(text).find("cold_start_mean_ms") != std::string::npos);
  }
  SUBCASE("syntax error") { CHECK(code_of("[{") == ErrorCode::parse); }
  SUBCASE("duplicate names") {
    std::string text = kTwoRecords;
    text.replace(text.find("\"name\": \"b\""), 11, "\"name\": \"a\"");
    CHECK(code_of(text) == ErrorCode::duplicate_name);
    CHECK(message_of(text).find("\"a\"") != std::string::npos);
  }
  SUBCASE("every violation is reported") {
    std::string text = kTwoRecords;
    text.replace(text.find("\"mean_ms\": 10"), 13, "\"mean_ms\": -10");
    text.replace(text.find("\"std_ms\": 2"), 11, "\"std_ms\": -2");
    CHECK(validate_profiles(text, ProfileFormat::json).size() == 2);
  }
}

TEST_CASE("fresh profile takes the first observation as its mean") {
  ProfileStore store{std::vector{testing::make("m", 0.5, 10.0, 0.0, 0)}};
  const auto p = store.observe("m", 50.0);
  CHECK(p.mean_ms == 50.0);
  CHECK(p.std_ms == 0.0);
  CHECK(p.observation_count == 1);
}

TEST_CASE("two observations give the sample standard deviation") {
  ProfileStore store{std::vector{testing::make("m", 0.5, 10.0, 0.0, 0)}};
  store.observe("m", 40.0);
  const auto p = store.observe("m", 60.0);
  CHECK(p.mean_ms == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(p.std_ms == doctest::Approx(std::sqrt(200.0)).epsilon(1e-12));
  CHECK(p.observation_count == 2);
}

TEST_CASE("online statistics match a two-pass batch computation") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist(80.0, 12.0);
  std::vector<double> xs;
  ProfileStore store{std::vector{testing::make("m", 0.5, 1.0, 0.0, 0)}};
  for (int i = 0; i < 1000; ++i) {
    xs.push_back(std::max(0.5, dist(rng)));
    store.observe("m", xs.back());
  }
  const auto expect = oracle::two_pass(xs);
  const auto p = *store.find("m");
  CHECK(std::fabs(p.mean_ms - expect.mean) / expect.mean < 1e-9);
  CHECK(std::fabs(p.std_ms - expect.std) / expect.std < 1e-9);
}

TEST_CASE("seeded statistics continue as if the prior samples were seen") {
  // Prior of n samples with mean/std, then more samples: matches a batch over
  // a synthetic prior with the same moments.
  const std::vector<double> prior = {10.0, 12.0, 14.0, 16.0};
  const auto pm = oracle::two_pass(prior);
  ProfileStore store{std::vector{testing::make("m", 0.5, pm.mean, pm.std, prior.size())}};
  std::vector<double> all = prior;
  for (double x : {20.0, 11.0, 9.5}) {
    all.push_back(x);
    store.observe("m", x);
  }
  const auto expect = oracle::two_pass(all);
  const auto p = *store.find("m");
  CHECK(p.mean_ms == doctest::Approx(expect.mean).epsilon(1e-12));
  CHECK(p.std_ms == doctest::Approx(expect.std).epsilon(1e-12));
}

TEST_CASE("observe rejects unknown models and bad durations") {
  ProfileStore store{std::vector{testing::make("m", 0.5, 10.0, 1.0)}};
  CHECK_THROWS_AS(store.observe("nope", 1.0), Error);
  try {
    store.observe("nope", 1.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_found);
  }
  for (double bad : {0.0, -1.0, std::nan("")}) {
    try {
      store.observe("m", bad);
      FAIL("expected domain error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::domain);
    }
  }
}

TEST_CASE("snapshot is ordered by name and isolated from later updates") {
  ProfileStore empty;
  CHECK(empty.snapshot().empty());

  ProfileStore store(testing::table_profiles());
  const auto before = store.snapshot();
  REQUIRE(before.size() == 11);
  CHECK(std::is_sorted(before.begin(), before.end(),
                       [](const auto& a, const auto& b) { return a.name < b.name; }));
  const auto copy = before;
  store.observe("DenseNet", 500.0);
  CHECK(before == copy);
  REQUIRE(copy[0].name == "DenseNet");
  CHECK(store.find("DenseNet")->mean_ms != copy[0].mean_ms);
}

TEST_CASE("json round trip is lossless") {
  const auto profiles = testing::table_profiles();
  const std::string text = save_profiles(profiles);
  CHECK(load_profiles(text) == profiles);
  CHECK(save_profiles(load_profiles(text)) == text);
}

TEST_CASE("csv round trip is lossless") {
  auto profiles = testing::table_profiles();
  profiles[0].name = "Needs, \"quoting\"";
  const std::string csv = save_profiles(profiles, ProfileFormat::csv);
  CHECK(load_profiles(csv, ProfileFormat::csv) == profiles);
  const std::string json = save_profiles(profiles);
  CHECK(save_profiles(load_profiles(json), ProfileFormat::csv) == csv);
}

TEST_CASE("csv header is strict") {
  CHECK(code_of("name,mean_ms\nx,1\n", ProfileFormat::csv) == ErrorCode::parse);
}

TEST_CASE("upsert reports creation") {
  ProfileStore store;
  CHECK(store.upsert(testing::make("a", 0.5, 10.0, 1.0)));
  CHECK_FALSE(store.upsert(testing::make("a", 0.6, 11.0, 1.0)));
  CHECK(store.find("a")->accuracy_top1 == 0.6);
  CHECK_THROWS(store.upsert(testing::make("b", 0.5, -1.0, 1.0)));
}

TEST_CASE("pseudo count keeps the prior") {
  ProfileStore store{std::vector{testing::make("a", 0.5, 10.0, 2.0, 1000)}};
  store.set_pseudo_count(1);
  store.observe("a", 20.0);
  const auto p = *store.find("a");
  CHECK(p.observation_count == 2);
  CHECK(p.mean_ms == doctest::Approx(15.0));
}

TEST_CASE("concurrent observations are all counted") {
  ProfileStore store{std::vector{testing::make("a", 0.5, 10.0, 0.0, 0),
                                 testing::make("b", 0.5, 10.0, 0.0, 0)}};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 500; ++i) {
        store.observe(t % 2 ? "a" : "b", 10.0 + i % 7);
        (void)store.snapshot();
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(store.find("a")->observation_count == 2000);
  CHECK(store.find("b")->observation_count == 2000);
}

TEST_CASE("loading a missing file is an io error") {
  try {
    load_profiles_file("/nonexistent/profiles.json");
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io);
  }
}
