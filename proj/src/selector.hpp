#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "budget.hpp"
#include "profile_store.hpp"

namespace cnnselect {

using Rng = std::mt19937_64;

struct SelectorConfig {
  AccuracyMetric accuracy_metric = AccuracyMetric::top1;
  // The literal set definition may leave the base model out of M_E; the
  // default keeps it in.
  bool include_base_in_exploration = true;
  // Lower clamp on |T_L - mu| in the utility denominator.
  double denominator_epsilon_ms = 0.1;
  std::uint64_t rng_seed = 0;
};

void validate(const SelectorConfig& cfg);

struct ExplorationRange {
  double low_ms = 0.0;
  double high_ms = 0.0;

  bool contains(double value) const { return value >= low_ms && value <= high_ms; }
  bool operator==(const ExplorationRange&) const = default;
};

struct SelectionDecision {
  std::string chosen;
  std::optional<std::string> base_model;  // empty when the fallback fired
  std::vector<std::string> eligible_set;
  std::optional<ExplorationRange> exploration_range;
  std::map<std::string, double> utilities;
  std::map<std::string, double> probabilities;
  bool fallback = false;

  bool operator==(const SelectionDecision&) const = default;
};

nlohmann::json to_json(const SelectionDecision& decision);

struct BaseChoice {
  std::size_t index = 0;
  bool fallback = false;
};

/// Most accurate model with mu + sigma < T_U and mu - sigma < T_L. Ties go to
/// the smaller mean, then the smaller name. With no feasible model, marks a
/// fallback to the fastest model. Throws Error(no_models) on an empty list.
BaseChoice stage1_base(std::span<const ModelProfile> profiles, const BudgetRange& range,
                       const SelectorConfig& cfg);

/// Interval of mean execution times worth exploring around the hard limit,
/// derived from the base model's profile.
ExplorationRange exploration_range(const ModelProfile& base, double lower_ms);

struct Exploration {
  ExplorationRange range;
  std::vector<std::size_t> eligible;  // indices into the profile list, ascending
};

Exploration stage2_explore(std::span<const ModelProfile> profiles, std::size_t base,
                           const BudgetRange& range, const SelectorConfig& cfg);

/// Utility of one candidate: accuracy times slack under T_U over distance
/// from T_L (clamped below by the configured epsilon).
double utility(const ModelProfile& model, const BudgetRange& range, const SelectorConfig& cfg);

/// Computes utilities and normalized probabilities over `eligible` and
/// samples the chosen model. Leaves base_model and exploration_range unset.
SelectionDecision stage3_select(std::span<const ModelProfile> profiles,
                                std::span<const std::size_t> eligible, const BudgetRange& range,
                                const SelectorConfig& cfg, Rng& rng);

/// Full three-stage selection.
SelectionDecision select(std::span<const ModelProfile> profiles, const BudgetRange& range,
                         const SelectorConfig& cfg, Rng& rng);

/// Index of the model with the smallest mean (name breaks ties).
std::size_t fastest_select(std::span<const ModelProfile> profiles);

/// Most accurate model whose mean fits in budget_ms, else the fastest one.
std::size_t greedy_select(std::span<const ModelProfile> profiles, const BudgetRange& range,
                          AccuracyMetric metric = AccuracyMetric::top1);

}  // namespace cnnselect
