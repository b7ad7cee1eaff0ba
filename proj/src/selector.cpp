#include "selector.hpp"

#include <cmath>

#include "error.hpp"

namespace cnnselect {

namespace {

void require_models(std::span<const ModelProfile> profiles) {
  if (profiles.empty()) throw Error(ErrorCode::no_models, "no models in the profile store");
}

// Strict weak order "a is a better pick than b" among equally accurate models.
bool faster_then_name(const ModelProfile& a, const ModelProfile& b) {
  if (a.mean_ms != b.mean_ms) return a.mean_ms < b.mean_ms;
  return a.name < b.name;
}

bool more_accurate(const ModelProfile& a, const ModelProfile& b, AccuracyMetric metric) {
  const double aa = a.accuracy(metric);
  const double ab = b.accuracy(metric);
  if (aa != ab) return aa > ab;
  return faster_then_name(a, b);
}

}  // namespace

void validate(const SelectorConfig& cfg) {
  if (!(cfg.denominator_epsilon_ms > 0.0))
    throw Error(ErrorCode::domain, "denominator_epsilon_ms must be > 0");
}

nlohmann::json to_json(const SelectionDecision& d) {
  nlohmann::json out;
  out["chosen"] = d.chosen;
  out["base_model"] = d.base_model ? nlohmann::json(*d.base_model) : nlohmann::json(nullptr);
  out["eligible_set"] = d.eligible_set;
  if (d.exploration_range) {
    out["exploration_range"] = {d.exploration_range->low_ms, d.exploration_range->high_ms};
  } else {
    out["exploration_range"] = nullptr;
  }
  out["utilities"] = d.utilities;
  out["probabilities"] = d.probabilities;
  out["fallback"] = d.fallback;
  return out;
}

std::size_t fastest_select(std::span<const ModelProfile> profiles) {
  require_models(profiles);
  std::size_t best = 0;
  for (std::size_t i = 1; i < profiles.size(); ++i) {
    if (faster_then_name(profiles[i], profiles[best])) best = i;
  }
  return best;
}

BaseChoice stage1_base(std::span<const ModelProfile> profiles, const BudgetRange& range,
                       const SelectorConfig& cfg) {
  require_models(profiles);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& m = profiles[i];
    const bool within_upper = m.mean_ms + m.std_ms < range.upper_ms;
    const bool within_lower = m.mean_ms - m.std_ms < range.lower_ms;
    if (!within_upper || !within_lower) continue;
    if (!best || more_accurate(m, profiles[*best], cfg.accuracy_metric)) best = i;
  }
  if (!best) return BaseChoice{fastest_select(profiles), true};
  return BaseChoice{*best, false};
}

ExplorationRange exploration_range(const ModelProfile& base, double lower_ms) {
  const double mu = base.mean_ms;
  const double sigma = base.std_ms;
  if (lower_ms > mu) return ExplorationRange{mu + sigma, 2.0 * lower_ms - mu + sigma};
  return ExplorationRange{2.0 * lower_ms - mu + sigma, mu + sigma};
}

Exploration stage2_explore(std::span<const ModelProfile> profiles, std::size_t base,
                           const BudgetRange& range, const SelectorConfig& cfg) {
  Exploration out;
  out.range = exploration_range(profiles[base], range.lower_ms);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& m = profiles[i];
    const bool in_range = out.range.contains(m.mean_ms);
    const bool within_upper = m.mean_ms + m.std_ms < range.upper_ms;
    if ((in_range && within_upper) || (i == base && cfg.include_base_in_exploration)) {
      out.eligible.push_back(i);
    }
  }
  // The literal set can come out empty; the base is always a safe candidate.
  if (out.eligible.empty()) out.eligible.push_back(base);
  return out;
}

double utility(const ModelProfile& m, const BudgetRange& range, const SelectorConfig& cfg) {
  const double slack = range.upper_ms - (m.mean_ms + m.std_ms);
  const double distance = std::max(std::abs(range.lower_ms - m.mean_ms), cfg.denominator_epsilon_ms);
  return m.accuracy(cfg.accuracy_metric) * slack / distance;
}

SelectionDecision stage3_select(std::span<const ModelProfile> profiles,
                                std::span<const std::size_t> eligible, const BudgetRange& range,
                                const SelectorConfig& cfg, Rng& rng) {
  if (eligible.empty()) throw Error(ErrorCode::domain, "eligible model set is empty");

  SelectionDecision d;
  std::vector<double> weights;
  weights.reserve(eligible.size());
  double total = 0.0;
  for (std::size_t i : eligible) {
    const auto& m = profiles[i];
    const double u = std::max(utility(m, range, cfg), 0.0);
    d.eligible_set.push_back(m.name);
    d.utilities[m.name] = u;
    weights.push_back(u);
    total += u;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::fill(weights.begin(), weights.end(), 1.0);
    total = static_cast<double>(weights.size());
  }
  for (std::size_t k = 0; k < eligible.size(); ++k) {
    weights[k] /= total;
    d.probabilities[profiles[eligible[k]].name] = weights[k];
  }

  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  d.chosen = profiles[eligible[pick(rng)]].name;
  return d;
}

SelectionDecision select(std::span<const ModelProfile> profiles, const BudgetRange& range,
                         const SelectorConfig& cfg, Rng& rng) {
  const BaseChoice base = stage1_base(profiles, range, cfg);
  if (base.fallback) {
    SelectionDecision d;
    const auto& name = profiles[base.index].name;
    d.chosen = name;
    d.eligible_set = {name};
    d.probabilities[name] = 1.0;
    d.fallback = true;
    return d;
  }
  const Exploration explore = stage2_explore(profiles, base.index, range, cfg);
  SelectionDecision d = stage3_select(profiles, explore.eligible, range, cfg, rng);
  d.base_model = profiles[base.index].name;
  d.exploration_range = explore.range;
  return d;
}

std::size_t greedy_select(std::span<const ModelProfile> profiles, const BudgetRange& range,
                          AccuracyMetric metric) {
  require_models(profiles);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].mean_ms > range.budget_ms) continue;
    if (!best || more_accurate(profiles[i], profiles[*best], metric)) best = i;
  }
  return best ? *best : fastest_select(profiles);
}

}  // namespace cnnselect
