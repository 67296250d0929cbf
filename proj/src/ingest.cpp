#include "dvhkit/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "dvhkit/error.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

namespace {

bool parse_number(std::string_view text, double& out) { return parse_double(text, out); }

std::string line_ref(std::size_t index) { return "line " + std::to_string(index + 1); }

/// "Key: value" split; false when the line has no colon.
bool split_field(std::string_view line, std::string_view& key, std::string_view& value) {
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) return false;
  key = trim(line.substr(0, colon));
  value = trim(line.substr(colon + 1));
  return true;
}

void check_block(const StructureDvhBlock& block, std::size_t line) {
  if (block.doses_cgy.empty()) {
    throw Error(ErrorCode::MissingDoseTable, "structure '" + block.structure_name + "' has no dose rows (" +
                                                 line_ref(line) + ")");
  }
  for (std::size_t i = 1; i < block.doses_cgy.size(); ++i) {
    if (!(block.doses_cgy[i] > block.doses_cgy[i - 1])) {
      throw Error(ErrorCode::NonMonotoneDoseAxis,
                  "structure '" + block.structure_name + "' dose column not strictly increasing");
    }
  }
  if (!(block.structure_volume_cc >= 0.0)) {
    throw Error(ErrorCode::MalformedHeader, "structure '" + block.structure_name + "' has a negative volume");
  }
}

/// Parses the table column header, e.g. "Dose [cGy]  Ratio of Total Structure Volume [%]".
void parse_column_header(std::string_view line, std::size_t index, double& dose_scale, VolumeUnit& unit) {
  const auto text = lower(line);
  const auto open = text.find('[');
  const auto close = text.find(']', open);
  if (open == std::string::npos || close == std::string::npos) {
    throw Error(ErrorCode::UnitNotRecognized, "dose column without unit at " + line_ref(index));
  }
  const auto dose_unit = text.substr(open + 1, close - open - 1);
  if (dose_unit == "cgy") {
    dose_scale = 1.0;
  } else if (dose_unit == "gy") {
    dose_scale = 100.0;
  } else {
    throw Error(ErrorCode::UnitNotRecognized, "dose unit '" + dose_unit + "' at " + line_ref(index));
  }
  const auto rest = text.substr(close + 1);
  if (rest.find("[%]") != std::string::npos) {
    unit = VolumeUnit::Percent;
  } else if (rest.find("[cm3]") != std::string::npos || rest.find("[cc]") != std::string::npos) {
    unit = VolumeUnit::CC;
  } else {
    throw Error(ErrorCode::UnitNotRecognized, "volume unit not recognized at " + line_ref(index));
  }
}

}  // namespace

ParsedExport parse_eclipse_text(std::string_view content) {
  const auto lines = split_lines(content);
  ParsedExport out;

  std::size_t i = 0;
  bool have_id = false;
  for (; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    std::string_view key, value;
    if (!split_field(line, key, value)) {
      throw Error(ErrorCode::MalformedHeader, "expected 'Key: value' header at " + line_ref(i));
    }
    if (lower(key) == "structure") break;
    if (lower(key) == "patient id") {
      out.patient_id = std::string(value);
      have_id = !value.empty();
    }
  }
  if (!have_id) throw Error(ErrorCode::MalformedHeader, "missing 'Patient ID:' header");

  while (i < lines.size()) {
    const auto section_line = i;
    std::string_view key, value;
    split_field(trim(lines[i]), key, value);
    StructureDvhBlock block;
    block.structure_name = std::string(value);
    if (block.structure_name.empty()) {
      throw Error(ErrorCode::MalformedHeader, "empty structure name at " + line_ref(i));
    }
    ++i;

    bool have_volume = false;
    bool have_table = false;
    double dose_scale = 1.0;
    for (; i < lines.size(); ++i) {
      const auto line = trim(lines[i]);
      if (line.empty()) continue;
      // The column header is the first "Dose [...]" line without a colon; other
      // "Dose ...: value" lines are section metadata.
      if (lower(line).starts_with("dose") && line.find(':') == std::string_view::npos) {
        parse_column_header(line, i, dose_scale, block.unit);
        have_table = true;
        ++i;
        break;
      }
      if (!split_field(line, key, value)) {
        throw Error(ErrorCode::MissingDoseTable,
                    "expected column header for '" + block.structure_name + "' at " + line_ref(i));
      }
      const auto k = lower(key);
      if (k == "structure") break;
      if (k.starts_with("volume")) {
        if (!parse_number(value, block.structure_volume_cc)) {
          throw Error(ErrorCode::MalformedHeader, "bad structure volume at " + line_ref(i));
        }
        have_volume = true;
      }
    }
    if (!have_volume) {
      throw Error(ErrorCode::MalformedHeader, "structure '" + block.structure_name + "' without 'Volume [cm3]:'");
    }
    if (!have_table) {
      throw Error(ErrorCode::MissingDoseTable,
                  "structure '" + block.structure_name + "' has no dose table (" + line_ref(section_line) + ")");
    }

    for (; i < lines.size(); ++i) {
      const auto line = trim(lines[i]);
      if (line.empty()) {
        if (!block.doses_cgy.empty()) break;
        continue;
      }
      std::string_view k, v;
      if (split_field(line, k, v) && lower(k) == "structure") break;
      // Whitespace-separated numeric columns; the first two are dose and volume.
      std::vector<std::string_view> fields;
      std::size_t p = 0;
      while (p < line.size()) {
        while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;
        const auto start = p;
        while (p < line.size() && !std::isspace(static_cast<unsigned char>(line[p]))) ++p;
        if (p > start) fields.push_back(line.substr(start, p - start));
      }
      double dose = 0.0, vol = 0.0;
      if (fields.size() < 2 || !parse_number(fields[0], dose) || !parse_number(fields[1], vol)) {
        throw Error(ErrorCode::MissingDoseTable, "malformed dose row at " + line_ref(i));
      }
      block.doses_cgy.push_back(dose * dose_scale);
      block.values.push_back(vol);
    }
    check_block(block, section_line);
    out.blocks.push_back(std::move(block));

    while (i < lines.size() && trim(lines[i]).empty()) ++i;
    if (i < lines.size()) {
      std::string_view k, v;
      if (!split_field(trim(lines[i]), k, v) || lower(k) != "structure") {
        throw Error(ErrorCode::MalformedHeader, "expected 'Structure:' at " + line_ref(i));
      }
    }
  }
  if (out.blocks.empty()) throw Error(ErrorCode::MissingDoseTable, "export contains no structures");
  return out;
}

ParsedExport parse_tomo_csv(std::string_view content) {
  const auto lines = split_lines(content);
  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]).empty()) ++i;
  if (i == lines.size()) throw Error(ErrorCode::MalformedHeader, "empty CSV document");

  auto split_csv = [](std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  };

  const auto header = split_csv(lines[i]);
  static constexpr std::array<std::string_view, 5> kColumns = {"structure", "dose_cgy", "value", "unit",
                                                               "structure_volume_cc"};
  std::array<std::size_t, 5> col{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    std::size_t found = header.size();
    for (std::size_t h = 0; h < header.size(); ++h) {
      if (lower(header[h]) == kColumns[c]) {
        if (found != header.size()) {
          throw Error(ErrorCode::MalformedHeader, "duplicate column '" + std::string(kColumns[c]) + "'");
        }
        found = h;
      }
    }
    if (found == header.size()) {
      throw Error(ErrorCode::MalformedHeader, "missing column '" + std::string(kColumns[c]) + "'");
    }
    col[c] = found;
  }

  ParsedExport out;
  std::map<std::string, std::size_t> index_of;
  std::vector<std::size_t> first_line;
  for (++i; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split_csv(lines[i]);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::MissingDoseTable, "expected " + std::to_string(header.size()) + " fields, got " +
                                                   std::to_string(fields.size()) + " at " + line_ref(i));
    }
    const std::string name(fields[col[0]]);
    double dose = 0.0, value = 0.0, volume = 0.0;
    if (name.empty() || !parse_number(fields[col[1]], dose) || !parse_number(fields[col[2]], value) ||
        !parse_number(fields[col[4]], volume)) {
      throw Error(ErrorCode::MissingDoseTable, "malformed row at " + line_ref(i));
    }
    const auto unit_text = lower(fields[col[3]]);
    VolumeUnit unit;
    if (unit_text == "pct" || unit_text == "%") {
      unit = VolumeUnit::Percent;
    } else if (unit_text == "cc" || unit_text == "cm3") {
      unit = VolumeUnit::CC;
    } else {
      throw Error(ErrorCode::UnitNotRecognized, "unit '" + std::string(fields[col[3]]) + "' at " + line_ref(i));
    }

    auto [it, inserted] = index_of.try_emplace(name, out.blocks.size());
    if (inserted) {
      StructureDvhBlock block;
      block.structure_name = name;
      block.structure_volume_cc = volume;
      block.unit = unit;
      out.blocks.push_back(std::move(block));
      first_line.push_back(i);
    }
    auto& block = out.blocks[it->second];
    if (block.unit != unit || block.structure_volume_cc != volume) {
      throw Error(ErrorCode::MalformedHeader,
                  "structure '" + name + "' changes unit or volume at " + line_ref(i));
    }
    block.doses_cgy.push_back(dose);
    block.values.push_back(value);
  }
  if (out.blocks.empty()) throw Error(ErrorCode::MissingDoseTable, "CSV has a header but no data rows");
  for (std::size_t b = 0; b < out.blocks.size(); ++b) check_block(out.blocks[b], first_line[b]);
  return out;
}

std::string write_eclipse_text(std::string_view patient_id, std::span<const StructureDvhBlock> blocks) {
  std::string out;
  out += "Patient ID: ";
  out += patient_id;
  out += "\n";
  for (const auto& b : blocks) {
    out += "\nStructure: " + b.structure_name + "\n";
    out += "Volume [cm3]: " + format_double(b.structure_volume_cc) + "\n\n";
    out += b.unit == VolumeUnit::Percent ? "Dose [cGy]  Ratio of Total Structure Volume [%]\n"
                                         : "Dose [cGy]  Structure Volume [cm3]\n";
    for (std::size_t r = 0; r < b.doses_cgy.size(); ++r) {
      out += format_double(b.doses_cgy[r]);
      out += "  ";
      out += format_double(b.values[r]);
      out += "\n";
    }
  }
  return out;
}

std::string write_tomo_csv(std::span<const StructureDvhBlock> blocks) {
  std::string out = "structure,dose_cgy,value,unit,structure_volume_cc\n";
  for (const auto& b : blocks) {
    const auto unit = b.unit == VolumeUnit::Percent ? "pct" : "cc";
    const auto volume = format_double(b.structure_volume_cc);
    for (std::size_t r = 0; r < b.doses_cgy.size(); ++r) {
      out += b.structure_name + "," + format_double(b.doses_cgy[r]) + "," + format_double(b.values[r]) + "," +
             unit + "," + volume + "\n";
    }
  }
  return out;
}

std::vector<std::string> default_pii_labels() {
  return {"patient name", "first name", "last name", "surname", "date of birth", "birth date", "dob",
          "mrn",          "medical record number", "address", "phone"};
}

DeidentifyResult deidentify_check(std::string_view content, std::span<const std::string> labels) {
  DeidentifyResult result;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view key, value;
    if (!split_field(lines[i], key, value)) continue;
    const auto k = lower(key);
    for (const auto& label : labels) {
      if (k == lower(label) || k.ends_with(" " + lower(label))) {
        result.pass = false;
        result.offending.push_back({i + 1, std::string(lines[i])});
        break;
      }
    }
  }
  return result;
}

DeidentifyResult deidentify_check(std::string_view content) {
  const auto labels = default_pii_labels();
  return deidentify_check(content, labels);
}

std::string_view to_string(TargetStructure target) noexcept {
  switch (target) {
    case TargetStructure::PTV60: return "PTV60";
    case TargetStructure::PTV44: return "PTV44";
    case TargetStructure::Bladder: return "Bladder";
    case TargetStructure::Rectum: return "Rectum";
    case TargetStructure::BladderOverlap: return "BladderOverlap";
    case TargetStructure::RectumOverlap: return "RectumOverlap";
  }
  return "PTV60";
}

TargetStructure parse_target(std::string_view text) {
  const auto t = lower(text);
  for (const auto target : kTargets) {
    if (lower(to_string(target)) == t) return target;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown structure target '" + std::string(text) + "'");
}

bool glob_match_icase(std::string_view pattern, std::string_view name) {
  // Iterative wildcard match with single-star backtracking.
  std::size_t p = 0, n = 0, star = std::string_view::npos, mark = 0;
  auto eq = [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
  };
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || (pattern[p] != '*' && eq(pattern[p], name[n])))) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

StructureNameRules StructureNameRules::defaults() {
  StructureNameRules r;
  r.for_target(TargetStructure::PTV60) = {"ptv60", "ptv_60", "ptv 60", "ptv6000", "ptv60gy", "ptv_6000"};
  r.for_target(TargetStructure::PTV44) = {"ptv44", "ptv_44", "ptv 44", "ptv4400", "ptv44gy", "ptv_4400"};
  r.for_target(TargetStructure::Bladder) = {"bladder", "urinary*bladder", "urinarybladder"};
  r.for_target(TargetStructure::Rectum) = {"rectum", "anorectum", "ano*rectum"};
  r.for_target(TargetStructure::BladderOverlap) = {"bladder*ptv60*overlap", "ptv60*bladder*overlap",
                                                   "bladder*ptv60*", "ptv60*bladder*"};
  r.for_target(TargetStructure::RectumOverlap) = {"rect*ptv60*overlap", "ptv60*rect*overlap", "rect*ptv60*",
                                                  "ptv60*rect*"};
  return r;
}

void StructureNameRules::validate() const {
  for (const auto target : kTargets) {
    if (for_target(target).empty()) {
      throw Error(ErrorCode::InvalidConfig, "no name patterns for " + std::string(to_string(target)));
    }
  }
}

ResolvedIndices resolve_structures(std::span<const StructureDvhBlock> blocks, const StructureNameRules& rules) {
  rules.validate();
  ResolvedIndices out{};
  for (std::size_t t = 0; t < kTargets.size(); ++t) {
    const auto target = kTargets[t];
    bool resolved = false;
    for (const auto& pattern : rules.for_target(target)) {
      std::vector<std::size_t> hits;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (glob_match_icase(pattern, blocks[b].structure_name)) hits.push_back(b);
      }
      if (hits.empty()) continue;
      if (hits.size() > 1) {
        std::string names;
        for (const auto h : hits) names += (names.empty() ? "" : ", ") + blocks[h].structure_name;
        throw Error(ErrorCode::AmbiguousMatch,
                    std::string(to_string(target)) + " pattern '" + pattern + "' matches " + names);
      }
      out[t] = hits.front();
      resolved = true;
      break;
    }
    if (!resolved) throw Error(ErrorCode::StructureUnresolved, std::string(to_string(target)));
  }
  return out;
}

FeatureVector extract_features(const ResolvedVolumes& v) {
  const double bladder = v[static_cast<std::size_t>(TargetStructure::Bladder)];
  const double rectum = v[static_cast<std::size_t>(TargetStructure::Rectum)];
  if (!(bladder > 0.0)) throw Error(ErrorCode::ZeroOrganVolume, "bladder volume must be positive");
  if (!(rectum > 0.0)) throw Error(ErrorCode::ZeroOrganVolume, "rectum volume must be positive");
  for (const double x : v) {
    if (!std::isfinite(x) || x < 0.0) throw Error(ErrorCode::InvalidFeatures, "structure volumes must be >= 0");
  }
  FeatureVector f;
  f.ptv60_cc = v[static_cast<std::size_t>(TargetStructure::PTV60)];
  f.ptv44_cc = v[static_cast<std::size_t>(TargetStructure::PTV44)];
  f.bladder_cc = bladder;
  f.rectum_cc = rectum;
  f.bladder_overlap_frac = std::clamp(v[static_cast<std::size_t>(TargetStructure::BladderOverlap)] / bladder, 0.0, 1.0);
  f.rectum_overlap_frac = std::clamp(v[static_cast<std::size_t>(TargetStructure::RectumOverlap)] / rectum, 0.0, 1.0);
  return f;
}

std::vector<double> block_percent(const StructureDvhBlock& block) {
  std::vector<double> out(block.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = block.values[i];
    if (block.unit == VolumeUnit::CC) {
      if (!(block.structure_volume_cc > 0.0)) {
        throw Error(ErrorCode::ZeroOrganVolume, "cc values for zero-volume structure '" + block.structure_name + "'");
      }
      v = 100.0 * v / block.structure_volume_cc;
    }
    out[i] = std::clamp(v, 0.0, 100.0);
  }
  return out;
}

PatientRecord build_record(std::span<const StructureDvhBlock> blocks, const StructureNameRules& rules,
                           std::string case_id, SourceKind source, const DoseGrid& grid) {
  if (case_id.empty()) throw Error(ErrorCode::MalformedHeader, "empty case id");
  const auto idx = resolve_structures(blocks, rules);
  ResolvedVolumes volumes{};
  for (std::size_t t = 0; t < idx.size(); ++t) volumes[t] = blocks[idx[t]].structure_volume_cc;

  PatientRecord record;
  record.case_id = std::move(case_id);
  record.source = source;
  record.features = extract_features(volumes);
  for (const auto& [organ, target] : {std::pair{Organ::Bladder, TargetStructure::Bladder},
                                     std::pair{Organ::Rectum, TargetStructure::Rectum}}) {
    const auto& block = blocks[idx[static_cast<std::size_t>(target)]];
    const auto pct = block_percent(block);
    record.dvh.emplace(organ, resample_to_grid(block.doses_cgy, pct, grid));
  }
  record.validate();
  return record;
}

}  // namespace dvhkit
