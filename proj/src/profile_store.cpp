#include "profile_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"

namespace cnnselect {

namespace {

using nlohmann::json;

constexpr const char* kFields[] = {
    "name",           "accuracy_top1",      "accuracy_top5",     "mean_ms",
    "std_ms",         "cold_start_mean_ms", "cold_start_std_ms", "observation_count"};

std::string format_number(double value) { return json(value).dump(); }

double percent_out(double fraction) {
  return std::round(fraction * 100.0 * 1e6) / 1e6;
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line on which each element of the top-level JSON array starts.
std::vector<std::size_t> element_lines(std::string_view text) {
  std::vector<std::size_t> out;
  std::size_t line = 1;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  bool expect_element = false;
  for (char c : text) {
    if (c == '\n') ++line;
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (expect_element && !space && c != ']') {
      out.push_back(line);
      expect_element = false;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '[':
      case '{':
        ++depth;
        if (depth == 1 && c == '[') expect_element = true;
        break;
      case ']':
      case '}': --depth; expect_element = false; break;
      case ',':
        if (depth == 1) expect_element = true;
        break;
      default: break;
    }
  }
  return out;
}

struct Collected {
  std::vector<ModelProfile> profiles;
  std::vector<Violation> violations;
};

class RecordChecker {
 public:
  RecordChecker(std::size_t index, std::size_t line, std::vector<Violation>& sink)
      : index_(index), line_(line), sink_(sink) {}

  void fail(std::string field, std::string message) {
    sink_.push_back(Violation{ErrorCode::parse, index_, line_, std::move(field),
                              std::move(message)});
    ok_ = false;
  }
  bool ok() const { return ok_; }

  // Checks field-level ranges on an assembled profile (accuracies already
  // converted to fractions).
  void check_ranges(const ModelProfile& p) {
    if (p.name.empty()) fail("name", "must be a non-empty string");
    if (!(p.accuracy_top1 >= 0.0 && p.accuracy_top1 <= 1.0))
      fail("accuracy_top1", "must be a percentage in [0, 100]");
    if (!(p.accuracy_top5 >= 0.0 && p.accuracy_top5 <= 1.0))
      fail("accuracy_top5", "must be a percentage in [0, 100]");
    if (p.accuracy_top1 > p.accuracy_top5)
      fail("accuracy_top1", "must not exceed accuracy_top5");
    if (!(p.mean_ms > 0.0) || !std::isfinite(p.mean_ms)) fail("mean_ms", "must be > 0");
    if (!(p.std_ms >= 0.0) || !std::isfinite(p.std_ms)) fail("std_ms", "must be >= 0");
    if (p.observation_count < 2 && p.std_ms != 0.0)
      fail("std_ms", "must be 0 when observation_count < 2");
    if (p.cold_start_mean_ms && !(*p.cold_start_mean_ms >= p.mean_ms))
      fail("cold_start_mean_ms", "must be >= mean_ms");
    if (p.cold_start_std_ms && !(*p.cold_start_std_ms >= 0.0))
      fail("cold_start_std_ms", "must be >= 0");
  }

 private:
  std::size_t index_;
  std::size_t line_;
  std::vector<Violation>& sink_;
  bool ok_ = true;
};

void check_duplicates(Collected& c, const std::vector<std::size_t>& lines_by_index) {
  std::set<std::string, std::less<>> seen;
  for (std::size_t i = 0; i < c.profiles.size(); ++i) {
    const auto& name = c.profiles[i].name;
    if (!seen.insert(name).second) {
      c.violations.push_back(Violation{ErrorCode::duplicate_name, i, lines_by_index[i], "name",
                                       "duplicate model name \"" + name + "\""});
    }
  }
}

Collected collect_json(std::string_view text) {
  Collected c;
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return c;

  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    c.violations.push_back(Violation{ErrorCode::parse, std::nullopt,
                                     line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), "",
                                     std::string("malformed JSON: ") + e.what()});
    return c;
  }
  if (!doc.is_array()) {
    c.violations.push_back(
        Violation{ErrorCode::parse, std::nullopt, 1, "", "profile file must be a JSON array"});
    return c;
  }

  auto lines = element_lines(text);
  lines.resize(doc.size(), 1);
  std::vector<std::size_t> kept_lines;

  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& rec = doc[i];
    RecordChecker check(i, lines[i], c.violations);
    if (!rec.is_object()) {
      check.fail("", "record must be a JSON object");
      continue;
    }
    for (const auto& [key, _] : rec.items()) {
      if (std::find(std::begin(kFields), std::end(kFields), key) == std::end(kFields))
        check.fail(key, "unknown key");
    }
    ModelProfile p;
    auto number = [&](const char* key, bool nullable) -> std::optional<double> {
      auto it = rec.find(key);
      if (it == rec.end()) {
        check.fail(key, "missing key");
        return std::nullopt;
      }
      if (it->is_null()) {
        if (!nullable) check.fail(key, "must not be null");
        return std::nullopt;
      }
      if (!it->is_number()) {
        check.fail(key, "must be a number");
        return std::nullopt;
      }
      return it->get<double>();
    };
    if (auto it = rec.find("name"); it == rec.end()) {
      check.fail("name", "missing key");
    } else if (!it->is_string()) {
      check.fail("name", "must be a string");
    } else {
      p.name = it->get<std::string>();
    }
    p.accuracy_top1 = number("accuracy_top1", false).value_or(0.0) / 100.0;
    p.accuracy_top5 = number("accuracy_top5", false).value_or(0.0) / 100.0;
    p.mean_ms = number("mean_ms", false).value_or(1.0);
    p.std_ms = number("std_ms", false).value_or(0.0);
    p.cold_start_mean_ms = number("cold_start_mean_ms", true);
    p.cold_start_std_ms = number("cold_start_std_ms", true);
    if (auto it = rec.find("observation_count"); it == rec.end()) {
      check.fail("observation_count", "missing key");
    } else if (it->is_number_unsigned()) {
      p.observation_count = it->get<std::uint64_t>();
    } else {
      check.fail("observation_count", "must be a non-negative integer");
    }
    if (!check.ok()) continue;
    check.check_ranges(p);
    if (!check.ok()) continue;
    c.profiles.push_back(std::move(p));
    kept_lines.push_back(lines[i]);
  }
  check_duplicates(c, kept_lines);
  return c;
}

Collected collect_csv(std::string_view text) {
  Collected c;
  auto rows = csv::lines(text);
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) return c;

  auto header = csv::split_line(rows.front());
  std::vector<std::string> expected(std::begin(kFields), std::end(kFields));
  if (!header || *header != expected) {
    c.violations.push_back(Violation{ErrorCode::parse, std::nullopt, 1, "",
                                     "header must be exactly: name,accuracy_top1,accuracy_top5,"
                                     "mean_ms,std_ms,cold_start_mean_ms,cold_start_std_ms,"
                                     "observation_count"});
    return c;
  }

  std::vector<std::size_t> kept_lines;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::size_t index = r - 1;
    std::size_t line = r + 1;
    RecordChecker check(index, line, c.violations);
    auto fields = csv::split_line(rows[r]);
    if (!fields) {
      check.fail("", "unbalanced quotes");
      continue;
    }
    if (fields->size() != expected.size()) {
      check.fail("", "expected 8 fields, found " + std::to_string(fields->size()));
      continue;
    }
    const auto& f = *fields;
    auto number = [&](std::size_t col, bool nullable) -> std::optional<double> {
      if (f[col].empty()) {
        if (!nullable) check.fail(kFields[col], "must not be empty");
        return std::nullopt;
      }
      auto v = csv::parse_double(f[col]);
      if (!v) check.fail(kFields[col], "must be a number");
      return v;
    };
    ModelProfile p;
    p.name = f[0];
    p.accuracy_top1 = number(1, false).value_or(0.0) / 100.0;
    p.accuracy_top5 = number(2, false).value_or(0.0) / 100.0;
    p.mean_ms = number(3, false).value_or(1.0);
    p.std_ms = number(4, false).value_or(0.0);
    p.cold_start_mean_ms = number(5, true);
    p.cold_start_std_ms = number(6, true);
    {
      const std::string& s = f[7];
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), p.observation_count);
      if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        check.fail("observation_count", "must be a non-negative integer");
    }
    if (!check.ok()) continue;
    check.check_ranges(p);
    if (!check.ok()) continue;
    c.profiles.push_back(std::move(p));
    kept_lines.push_back(line);
  }
  check_duplicates(c, kept_lines);
  return c;
}

Collected collect(std::string_view text, ProfileFormat format) {
  return format == ProfileFormat::json ? collect_json(text) : collect_csv(text);
}

}  // namespace

std::string Violation::describe() const {
  std::ostringstream out;
  out << "line " << line;
  if (record) out << ", record " << *record;
  if (!field.empty()) out << ", field '" << field << "'";
  out << ": " << message;
  return out.str();
}

std::optional<ProfileFormat> format_for_path(std::string_view path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.substr(path.size() - suffix.size()) == suffix;
  };
  if (ends_with(".json")) return ProfileFormat::json;
  if (ends_with(".csv")) return ProfileFormat::csv;
  return std::nullopt;
}

std::vector<Violation> validate_profiles(std::string_view text, ProfileFormat format) {
  return collect(text, format).violations;
}

std::vector<ModelProfile> load_profiles(std::string_view text, ProfileFormat format) {
  auto c = collect(text, format);
  if (!c.violations.empty()) {
    const auto& v = c.violations.front();
    throw Error(v.code, v.describe());
  }
  return std::move(c.profiles);
}

std::vector<ModelProfile> load_profiles_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open profile file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto format = format_for_path(path).value_or(ProfileFormat::json);
  try {
    return load_profiles(buffer.str(), format);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

std::string save_profiles(std::span<const ModelProfile> profiles, ProfileFormat format) {
  if (format == ProfileFormat::json) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& p : profiles) {
      nlohmann::ordered_json rec;
      rec["name"] = p.name;
      rec["accuracy_top1"] = percent_out(p.accuracy_top1);
      rec["accuracy_top5"] = percent_out(p.accuracy_top5);
      rec["mean_ms"] = p.mean_ms;
      rec["std_ms"] = p.std_ms;
      rec["cold_start_mean_ms"] =
          p.cold_start_mean_ms ? nlohmann::ordered_json(*p.cold_start_mean_ms) : nullptr;
      rec["cold_start_std_ms"] =
          p.cold_start_std_ms ? nlohmann::ordered_json(*p.cold_start_std_ms) : nullptr;
      rec["observation_count"] = p.observation_count;
      doc.push_back(std::move(rec));
    }
    return doc.dump(2) + "\n";
  }

  std::string out =
      "name,accuracy_top1,accuracy_top5,mean_ms,std_ms,cold_start_mean_ms,"
      "cold_start_std_ms,observation_count\n";
  for (const auto& p : profiles) {
    out += csv::quote(p.name);
    out += ',' + format_number(percent_out(p.accuracy_top1));
    out += ',' + format_number(percent_out(p.accuracy_top5));
    out += ',' + format_number(p.mean_ms);
    out += ',' + format_number(p.std_ms);
    out += ',' + (p.cold_start_mean_ms ? format_number(*p.cold_start_mean_ms) : std::string());
    out += ',' + (p.cold_start_std_ms ? format_number(*p.cold_start_std_ms) : std::string());
    out += ',' + std::to_string(p.observation_count);
    out += '\n';
  }
  return out;
}

std::string profiles_table(std::span<const ModelProfile> profiles) {
  std::size_t width = 5;
  for (const auto& p : profiles) width = std::max(width, p.name.size());
  std::ostringstream out;
  char row[160];
  std::snprintf(row, sizeof row, "%-*s  %6s  %6s  %9s  %8s  %12s  %8s\n", static_cast<int>(width),
                "model", "top1%", "top5%", "mean_ms", "std_ms", "cold_mean_ms", "count");
  out << row;
  for (const auto& p : profiles) {
    const std::string cold =
        p.cold_start_mean_ms ? format_number(*p.cold_start_mean_ms) : std::string("-");
    std::snprintf(row, sizeof row, "%-*s  %6.2f  %6.2f  %9.3f  %8.3f  %12s  %8llu\n",
                  static_cast<int>(width), p.name.c_str(), p.accuracy_top1 * 100.0,
                  p.accuracy_top5 * 100.0, p.mean_ms, p.std_ms, cold.c_str(),
                  static_cast<unsigned long long>(p.observation_count));
    out << row;
  }
  return out.str();
}

void check_profile(const ModelProfile& profile) {
  std::vector<Violation> violations;
  RecordChecker check(0, 0, violations);
  check.check_ranges(profile);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw Error(ErrorCode::domain,
                "profile \"" + profile.name + "\": field '" + v.field + "' " + v.message);
  }
}

ProfileStore::ProfileStore(std::span<const ModelProfile> profiles) {
  for (const auto& p : profiles) {
    check_profile(p);
    if (!entries_.emplace(p.name, make_entry(p)).second)
      throw Error(ErrorCode::duplicate_name, "duplicate model name \"" + p.name + "\"");
  }
}

ProfileStore::ProfileStore(const ProfileStore& other) {
  std::shared_lock lock(other.mutex_);
  entries_ = other.entries_;
}

ProfileStore::Entry ProfileStore::make_entry(const ModelProfile& profile) {
  Entry e{profile, 0.0};
  if (profile.observation_count >= 2) {
    e.m2 = profile.std_ms * profile.std_ms * static_cast<double>(profile.observation_count - 1);
  }
  return e;
}

std::size_t ProfileStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

bool ProfileStore::empty() const { return size() == 0; }

bool ProfileStore::contains(std::string_view name) const {
  std::shared_lock lock(mutex_);
  return entries_.find(name) != entries_.end();
}

std::optional<ModelProfile> ProfileStore::find(std::string_view name) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(name);
  if (it == entries_.end()) return std::nullopt;
  return it->second.profile;
}

std::vector<ModelProfile> ProfileStore::snapshot() const {
  std::shared_lock lock(mutex_);
  std::vector<ModelProfile> out;
  out.reserve(entries_.size());
  for (const auto& [_, e] : entries_) out.push_back(e.profile);
  return out;
}

ModelProfile ProfileStore::observe(std::string_view name, double elapsed_ms) {
  if (!(elapsed_ms > 0.0) || !std::isfinite(elapsed_ms)) {
    throw Error(ErrorCode::domain, "elapsed time must be a positive duration");
  }
  std::unique_lock lock(mutex_);
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw Error(ErrorCode::not_found, "unknown model \"" + std::string(name) + "\"");
  }
  Entry& e = it->second;
  ModelProfile& p = e.profile;
  p.observation_count += 1;
  const double n = static_cast<double>(p.observation_count);
  const double delta = elapsed_ms - p.mean_ms;
  p.mean_ms += delta / n;
  if (p.observation_count == 1) {
    p.mean_ms = elapsed_ms;
    e.m2 = 0.0;
  } else {
    e.m2 += delta * (elapsed_ms - p.mean_ms);
  }
  p.std_ms = p.observation_count >= 2 ? std::sqrt(e.m2 / (n - 1.0)) : 0.0;
  return p;
}

bool ProfileStore::upsert(const ModelProfile& profile) {
  check_profile(profile);
  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.insert_or_assign(profile.name, make_entry(profile));
  return inserted;
}

void ProfileStore::set_pseudo_count(std::uint64_t count) {
  std::unique_lock lock(mutex_);
  for (auto& [_, e] : entries_) {
    e.profile.observation_count = count;
    if (count < 2) e.profile.std_ms = 0.0;
    e = make_entry(e.profile);
  }
}

}  // namespace cnnselect
