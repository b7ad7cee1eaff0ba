#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace cnnselect {

enum class AccuracyMetric { top1, top5 };

/// Accuracy and running execution-time statistics for one hosted model.
/// Accuracies are fractions in [0, 1]; times are milliseconds.
struct ModelProfile {
  std::string name;
  double accuracy_top1 = 0.0;
  double accuracy_top5 = 0.0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::optional<double> cold_start_mean_ms;
  std::optional<double> cold_start_std_ms;
  std::uint64_t observation_count = 0;
  bool loaded = true;

  double accuracy(AccuracyMetric metric) const {
    return metric == AccuracyMetric::top1 ? accuracy_top1 : accuracy_top5;
  }
  bool operator==(const ModelProfile&) const = default;
};

/// One problem found while validating a profile file. `record` is the
/// zero-based index of the offending record, `line` its 1-based line.
struct Violation {
  ErrorCode code = ErrorCode::parse;
  std::optional<std::size_t> record;
  std::size_t line = 0;
  std::string field;
  std::string message;

  std::string describe() const;
};

enum class ProfileFormat { json, csv };

std::optional<ProfileFormat> format_for_path(std::string_view path);

/// Reports every schema and invariant violation in a profile document
/// instead of stopping at the first one.
std::vector<Violation> validate_profiles(std::string_view text, ProfileFormat format);

/// Parses a profile document. Throws Error(parse) naming the offending record,
/// or Error(duplicate_name).
std::vector<ModelProfile> load_profiles(std::string_view text,
                                        ProfileFormat format = ProfileFormat::json);
std::vector<ModelProfile> load_profiles_file(const std::string& path);

/// Accuracy percentages are written with at most six decimals; times use the
/// shortest representation that reads back to the same double.
std::string save_profiles(std::span<const ModelProfile> profiles,
                          ProfileFormat format = ProfileFormat::json);

/// Aligned text table for terminals.
std::string profiles_table(std::span<const ModelProfile> profiles);

/// Throws Error(domain) if the profile breaks a ModelProfile invariant.
void check_profile(const ModelProfile& profile);

/// Thread-safe set of model profiles keyed by name. Readers share the lock;
/// observe/upsert are serialized.
class ProfileStore {
 public:
  ProfileStore() = default;
  explicit ProfileStore(std::span<const ModelProfile> profiles);

  ProfileStore(const ProfileStore& other);
  ProfileStore& operator=(const ProfileStore&) = delete;

  std::size_t size() const;
  bool empty() const;
  bool contains(std::string_view name) const;
  std::optional<ModelProfile> find(std::string_view name) const;

  /// Point-in-time copy ordered by name.
  std::vector<ModelProfile> snapshot() const;

  /// Folds one measured execution time into the running mean and sample
  /// standard deviation (Welford). Throws not_found / domain.
  ModelProfile observe(std::string_view name, double elapsed_ms);

  /// Inserts or replaces a profile. Returns true if it was newly created.
  bool upsert(const ModelProfile& profile);

  /// Overrides every observation_count, keeping mean/std as the prior.
  void set_pseudo_count(std::uint64_t count);

 private:
  struct Entry {
    ModelProfile profile;
    double m2 = 0.0;  // sum of squared deviations from the mean
  };
  static Entry make_entry(const ModelProfile& profile);

  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry, std::less<>> entries_;
};

}  // namespace cnnselect
