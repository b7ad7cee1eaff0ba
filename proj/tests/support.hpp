#pragma once

#include <string>
#include <vector>

#include "oracle.hpp"
#include "profile_store.hpp"

#ifndef CNNSELECT_FIXTURES
#define CNNSELECT_FIXTURES "fixtures"
#endif

namespace testing {

inline std::string fixture(const std::string& name) {
  return std::string(CNNSELECT_FIXTURES) + "/" + name;
}

inline std::vector<cnnselect::ModelProfile> table_profiles() {
  return cnnselect::load_profiles_file(fixture("paper_models.json"));
}

inline cnnselect::ModelProfile make(const std::string& name, double acc, double mu, double sigma,
                                    std::uint64_t count = 100) {
  cnnselect::ModelProfile p;
  p.name = name;
  p.accuracy_top1 = acc;
  p.accuracy_top5 = acc;
  p.mean_ms = mu;
  p.std_ms = sigma;
  p.observation_count = count;
  return p;
}

inline std::vector<oracle::Model> to_oracle(const std::vector<cnnselect::ModelProfile>& ps) {
  std::vector<oracle::Model> out;
  for (const auto& p : ps) out.push_back({p.name, p.accuracy_top1, p.mean_ms, p.std_ms});
  return out;
}

}  // namespace testing
