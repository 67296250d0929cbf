#pragma once

// Flat "key = value" configuration files and clinical constraint sets.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvhkit/dvh.hpp"
#include "dvhkit/ingest.hpp"
#include "dvhkit/regressors.hpp"
#include "dvhkit/synth.hpp"

namespace dvhkit {

/// One "key = value" per line; '#' starts a comment; blank lines ignored.
/// Keys are case-sensitive and must be unique.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated, trimmed, empty items dropped.
  std::vector<std::string> get_list(const std::string& key) const;

  /// Keys starting with `prefix`, prefix stripped.
  std::map<std::string, std::string> with_prefix(std::string_view prefix) const;

  /// Throws InvalidConfig naming the first key that is not recognised.
  void check_known_keys() const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// hp.<ALGORITHM>.<name> entries for one algorithm.
Hyperparams hyperparams_from_config(const Config& config, AlgorithmId algorithm);
/// structures.<target> overrides on top of the defaults.
StructureNameRules structure_rules_from_config(const Config& config);
/// synth.* entries on top of the defaults.
SynthConfig synth_config_from_config(const Config& config);

struct Constraint {
  double dose_cgy = 0.0;
  double max_volume_pct = 0.0;
};

struct ConstraintSet {
  std::map<Organ, std::vector<Constraint>> per_organ;

  /// constraint.<organ> = dose:max, dose:max, ...
  static ConstraintSet from_config(const Config& config);
  void validate(const DoseGrid& grid) const;
};

struct ConstraintFlag {
  Constraint constraint;
  double predicted_pct = 0.0;
  bool pass = true;
};

std::vector<ConstraintFlag> check_constraints(const CumulativeDVH& curve, std::span<const Constraint> constraints);

}  // namespace dvhkit
