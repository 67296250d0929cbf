#pragma once

// Seeded synthetic cohorts with a known feature-to-curve mapping.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dvhkit/dvh.hpp"
#include "dvhkit/ingest.hpp"

namespace dvhkit {

struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t n_patients = 94;
  std::string id_prefix = "SYN";
  /// Uniform ranges in FeatureVector order.
  std::array<std::pair<double, double>, kNumFeatures> ranges = {{
      {60.0, 180.0},   // ptv60_cc
      {120.0, 360.0},  // ptv44_cc
      {40.0, 150.0},   // rectum_cc
      {80.0, 400.0},   // bladder_cc
      {0.0, 0.4},      // rectum_overlap_frac
      {0.0, 0.4},      // bladder_overlap_frac
  }};
  double noise_std = 1.0;  // percent
  // V(d) = 100 / (1 + exp((d - d50) / w)), d50 = d50_base + d50_per_overlap * overlap,
  // w = width_base + width_per_cc * organ_cc
  double d50_base = 3000.0;
  double d50_per_overlap = 3200.0;
  double width_base = 300.0;
  double width_per_cc = 0.5;
  DoseGrid grid = DoseGrid::canonical();

  /// Throws InvalidConfig.
  void validate() const;
};

/// Noise-free curve for one organ.
std::vector<double> synth_truth(const SynthConfig& config, double organ_cc, double overlap_frac);

std::vector<PatientRecord> synth_cohort(const SynthConfig& config);

/// Structure names written into synthetic exports.
inline constexpr std::array<std::string_view, 6> kSynthStructureNames = {
    "PTV60", "PTV44", "Bladder", "Rectum", "Bladder_PTV60_overlap", "Rectum_PTV60_overlap"};

/// The six export blocks of a record (kTargets order), with dose 0 prepended.
/// Organ curves are the record's; target and overlap structures get a simple
/// high-dose curve. `unit` selects percent or cc values for the organs.
std::vector<StructureDvhBlock> synth_export_blocks(const PatientRecord& record, VolumeUnit unit = VolumeUnit::Percent);

}  // namespace dvhkit
