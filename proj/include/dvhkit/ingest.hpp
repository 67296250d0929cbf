#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvhkit/dvh.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

enum class VolumeUnit { Percent, CC };

/// One structure's cumulative DVH table as exported by a planning system.
struct StructureDvhBlock {
  std::string structure_name;
  double structure_volume_cc = 0.0;
  VolumeUnit unit = VolumeUnit::Percent;
  std::vector<double> doses_cgy;
  std::vector<double> values;

  bool operator==(const StructureDvhBlock&) const = default;
};

struct ParsedExport {
  std::string patient_id;  // empty for formats without a patient header
  std::vector<StructureDvhBlock> blocks;
};

/// Eclipse-style text export. See docs/formats.md for the grammar.
ParsedExport parse_eclipse_text(std::string_view content);

/// Tomotherapy-style CSV export with a labeled header row (any column order).
ParsedExport parse_tomo_csv(std::string_view content);

std::string write_eclipse_text(std::string_view patient_id, std::span<const StructureDvhBlock> blocks);
std::string write_tomo_csv(std::span<const StructureDvhBlock> blocks);

struct PiiFinding {
  std::size_t line = 0;  // 1-based
  std::string text;
};

struct DeidentifyResult {
  bool pass = true;
  std::vector<PiiFinding> offending;
};

/// Case-insensitive field labels that indicate identifying information.
std::vector<std::string> default_pii_labels();

/// Fails when any line contains one of `labels` followed by a colon.
DeidentifyResult deidentify_check(std::string_view content, std::span<const std::string> labels);
DeidentifyResult deidentify_check(std::string_view content);

enum class TargetStructure { PTV60, PTV44, Bladder, Rectum, BladderOverlap, RectumOverlap };

inline constexpr std::array<TargetStructure, 6> kTargets = {
    TargetStructure::PTV60,   TargetStructure::PTV44,          TargetStructure::Bladder,
    TargetStructure::Rectum,  TargetStructure::BladderOverlap, TargetStructure::RectumOverlap};

std::string_view to_string(TargetStructure target) noexcept;
TargetStructure parse_target(std::string_view text);

/// Case-insensitive whole-name glob ('*' matches any run, '?' one character).
bool glob_match_icase(std::string_view pattern, std::string_view name);

/// Ordered name patterns per target. The first pattern that matches any block
/// decides; more than one block matching it is an AmbiguousMatch.
struct StructureNameRules {
  std::array<std::vector<std::string>, 6> patterns;

  static StructureNameRules defaults();

  const std::vector<std::string>& for_target(TargetStructure t) const {
    return patterns[static_cast<std::size_t>(t)];
  }
  std::vector<std::string>& for_target(TargetStructure t) { return patterns[static_cast<std::size_t>(t)]; }

  void validate() const;
};

/// Index into the block list for each target, in kTargets order.
using ResolvedIndices = std::array<std::size_t, 6>;

ResolvedIndices resolve_structures(std::span<const StructureDvhBlock> blocks, const StructureNameRules& rules);

/// Structure volumes for the six targets, in kTargets order.
using ResolvedVolumes = std::array<double, 6>;

/// Four raw volumes plus overlap_cc / organ_cc clamped to [0, 1].
FeatureVector extract_features(const ResolvedVolumes& volumes_cc);

/// Block values in percent of structure volume, clamped to [0, 100].
std::vector<double> block_percent(const StructureDvhBlock& block);

PatientRecord build_record(std::span<const StructureDvhBlock> blocks, const StructureNameRules& rules,
                           std::string case_id, SourceKind source = SourceKind::EclipseText,
                           const DoseGrid& grid = DoseGrid::canonical());

}  // namespace dvhkit
