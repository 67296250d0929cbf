#include "dvhkit/config.hpp"

#include <algorithm>
#include <cmath>

#include "dvhkit/error.hpp"
#include "dvhkit/library.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

Config Config::parse(std::string_view text) {
  Config c;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = lines[i];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(i + 1) + ": expected 'key = value'");
    }
    const auto key = std::string(trim(line.substr(0, eq)));
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(i + 1) + ": empty key");
    if (!c.values_.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(i + 1) + ": duplicate key '" + key + "'");
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  double v = 0.0;
  if (!parse_double(it->second, v)) throw Error(ErrorCode::InvalidConfig, key + ": not a number: " + it->second);
  return v;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  double v = 0.0;
  if (!parse_double(it->second, v) || v != std::floor(v) || std::abs(v) > 9e15) {
    throw Error(ErrorCode::InvalidConfig, key + ": not an integer: " + it->second);
  }
  return static_cast<long long>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto v = lower(it->second);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw Error(ErrorCode::InvalidConfig, key + ": not a boolean: " + it->second);
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const auto it = values_.find(key);
  if (it == values_.end()) return out;
  for (const auto item : split(it->second, ",")) {
    const auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::map<std::string, std::string> Config::with_prefix(std::string_view prefix) const {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : values_) {
    if (k.size() > prefix.size() && k.starts_with(prefix)) out.emplace(k.substr(prefix.size()), v);
  }
  return out;
}

void Config::check_known_keys() const {
  static const std::vector<std::string> exact = {"seed",           "split.ratio",      "cv.folds",
                                                 "train.algorithms", "train.tune",     "band.confidence",
                                                 "synth.n_patients", "synth.noise_std", "synth.id_prefix",
                                                 "synth.d50_base",  "synth.d50_per_overlap", "synth.width_base",
                                                 "synth.width_per_cc"};
  static const std::vector<std::string> prefixes = {"hp.", "structures.", "constraint.", "synth.range."};
  for (const auto& [k, v] : values_) {
    if (std::find(exact.begin(), exact.end(), k) != exact.end()) continue;
    if (std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return k.starts_with(p); })) {
      continue;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown configuration key '" + k + "'");
  }
}

Hyperparams hyperparams_from_config(const Config& config, AlgorithmId algorithm) {
  Hyperparams hp;
  for (const auto& [k, v] : config.with_prefix("hp." + std::string(to_string(algorithm)) + ".")) {
    double x = 0.0;
    if (!parse_double(v, x)) throw Error(ErrorCode::InvalidConfig, "hp." + k + ": not a number");
    hp[k] = x;
  }
  validate_hyperparams(algorithm, hp);
  return hp;
}

StructureNameRules structure_rules_from_config(const Config& config) {
  auto rules = StructureNameRules::defaults();
  for (const auto& [k, v] : config.with_prefix("structures.")) {
    const auto target = parse_target(k);
    rules.for_target(target) = config.get_list("structures." + k);
  }
  rules.validate();
  return rules;
}

SynthConfig synth_config_from_config(const Config& config) {
  SynthConfig s;
  s.seed = static_cast<std::uint64_t>(config.get_int("seed", static_cast<long long>(s.seed)));
  const auto n = config.get_int("synth.n_patients", static_cast<long long>(s.n_patients));
  if (n < 1) throw Error(ErrorCode::InvalidConfig, "synth.n_patients must be >= 1");
  s.n_patients = static_cast<std::size_t>(n);
  s.noise_std = config.get_double("synth.noise_std", s.noise_std);
  s.id_prefix = config.get_string("synth.id_prefix", s.id_prefix);
  s.d50_base = config.get_double("synth.d50_base", s.d50_base);
  s.d50_per_overlap = config.get_double("synth.d50_per_overlap", s.d50_per_overlap);
  s.width_base = config.get_double("synth.width_base", s.width_base);
  s.width_per_cc = config.get_double("synth.width_per_cc", s.width_per_cc);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const auto key = "synth.range." + std::string(FeatureVector::kNames[f]);
    if (!config.has(key)) continue;
    const auto items = config.get_list(key);
    double lo = 0, hi = 0;
    if (items.size() != 2 || !parse_double(items[0], lo) || !parse_double(items[1], hi)) {
      throw Error(ErrorCode::InvalidConfig, key + ": expected 'lo, hi'");
    }
    s.ranges[f] = {lo, hi};
  }
  s.validate();
  return s;
}

ConstraintSet ConstraintSet::from_config(const Config& config) {
  ConstraintSet set;
  for (const auto& [k, v] : config.with_prefix("constraint.")) {
    const auto organ = parse_organ(k);
    for (const auto& item : config.get_list("constraint." + k)) {
      const auto parts = split(item, ":");
      Constraint c;
      if (parts.size() != 2 || !parse_double(parts[0], c.dose_cgy) || !parse_double(parts[1], c.max_volume_pct)) {
        throw Error(ErrorCode::InvalidConfig, "constraint." + k + ": expected 'dose:max_pct' items, got '" + item + "'");
      }
      set.per_organ[organ].push_back(c);
    }
  }
  return set;
}

void ConstraintSet::validate(const DoseGrid& grid) const {
  for (const auto& [organ, list] : per_organ) {
    for (const auto& c : list) {
      if (!(c.dose_cgy >= 0.0 && c.dose_cgy <= grid.max_dose())) {
        throw Error(ErrorCode::InvalidConfig, "constraint dose " + format_double(c.dose_cgy) + " cGy outside the grid");
      }
      if (!(c.max_volume_pct >= 0.0 && c.max_volume_pct <= 100.0)) {
        throw Error(ErrorCode::InvalidConfig, "constraint limit must be within [0, 100] percent");
      }
    }
  }
}

std::vector<ConstraintFlag> check_constraints(const CumulativeDVH& curve, std::span<const Constraint> constraints) {
  std::vector<ConstraintFlag> out;
  for (const auto& c : constraints) {
    const double v = value_at(curve, c.dose_cgy);
    out.push_back({c, v, v <= c.max_volume_pct});
  }
  return out;
}

}  // namespace dvhkit
