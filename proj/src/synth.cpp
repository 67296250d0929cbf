#include "dvhkit/synth.hpp"

#include <cmath>
#include <cstdio>

#include "dvhkit/error.hpp"
#include "dvhkit/rng.hpp"

namespace dvhkit {

void SynthConfig::validate() const {
  auto bad = [](const std::string& why) { return Error(ErrorCode::InvalidConfig, "synth: " + why); };
  if (n_patients < 1) throw bad("n_patients must be >= 1");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw bad("noise_std must be >= 0");
  if (!(width_base + width_per_cc * ranges[2].first > 0.0) || !(width_base + width_per_cc * ranges[3].first > 0.0)) {
    throw bad("curve width must stay positive");
  }
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const auto [lo, hi] = ranges[f];
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
      throw bad(std::string(FeatureVector::kNames[f]) + " range must satisfy lo <= hi");
    }
    if (lo < 0.0) throw bad(std::string(FeatureVector::kNames[f]) + " range must be >= 0");
  }
  if (!(ranges[2].first > 0.0) || !(ranges[3].first > 0.0)) throw bad("organ volumes must be > 0");
  if (ranges[4].second > 1.0 || ranges[5].second > 1.0) throw bad("overlap fractions must be <= 1");
  grid.validate();
}

std::vector<double> synth_truth(const SynthConfig& config, double organ_cc, double overlap_frac) {
  const double d50 = config.d50_base + config.d50_per_overlap * overlap_frac;
  const double w = config.width_base + config.width_per_cc * organ_cc;
  std::vector<double> v(config.grid.n_bins);
  for (std::size_t b = 0; b < v.size(); ++b) v[b] = 100.0 / (1.0 + std::exp((config.grid.dose(b) - d50) / w));
  return v;
}

std::vector<PatientRecord> synth_cohort(const SynthConfig& config) {
  config.validate();
  std::vector<PatientRecord> out;
  out.reserve(config.n_patients);
  for (std::size_t i = 0; i < config.n_patients; ++i) {
    Rng rng(Rng::derive(config.seed, i));
    std::array<double, kNumFeatures> f{};
    for (std::size_t c = 0; c < kNumFeatures; ++c) f[c] = rng.uniform(config.ranges[c].first, config.ranges[c].second);

    PatientRecord r;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%04zu", config.id_prefix.c_str(), i + 1);
    r.case_id = id;
    r.features = FeatureVector::from_array(f);
    r.source = SourceKind::Synthetic;
    for (const auto organ : kOrgans) {
      const bool bladder = organ == Organ::Bladder;
      auto v = synth_truth(config, bladder ? r.features.bladder_cc : r.features.rectum_cc,
                           bladder ? r.features.bladder_overlap_frac : r.features.rectum_overlap_frac);
      if (config.noise_std > 0.0) {
        for (auto& x : v) x += config.noise_std * rng.normal();
      }
      r.dvh.emplace(organ, enforce_monotone(config.grid, v));
    }
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

// Dose 0 at 100 %, then the curve.
StructureDvhBlock curve_block(std::string_view name, double volume_cc, const DoseGrid& grid,
                              std::span<const double> pct, VolumeUnit unit) {
  StructureDvhBlock b;
  b.structure_name = std::string(name);
  b.structure_volume_cc = volume_cc;
  b.unit = unit;
  b.doses_cgy.push_back(0.0);
  b.values.push_back(unit == VolumeUnit::Percent ? 100.0 : volume_cc);
  for (std::size_t i = 0; i < grid.n_bins; ++i) {
    b.doses_cgy.push_back(grid.dose(i));
    b.values.push_back(unit == VolumeUnit::Percent ? pct[i] : pct[i] * volume_cc / 100.0);
  }
  return b;
}

// Target-like curve: fully covered to `dose`, falling off over 300 cGy.
std::vector<double> target_curve(const DoseGrid& grid, double dose) {
  std::vector<double> v(grid.n_bins);
  for (std::size_t i = 0; i < grid.n_bins; ++i) v[i] = 100.0 / (1.0 + std::exp((grid.dose(i) - dose) / 60.0));
  return v;
}

}  // namespace

std::vector<StructureDvhBlock> synth_export_blocks(const PatientRecord& record, VolumeUnit unit) {
  const auto& f = record.features;
  const auto grid = record.curve(Organ::Bladder).grid();
  const auto high = target_curve(grid, 6100.0);
  const auto mid = target_curve(grid, 4500.0);
  std::vector<StructureDvhBlock> blocks;
  blocks.push_back(curve_block(kSynthStructureNames[0], f.ptv60_cc, grid, high, VolumeUnit::Percent));
  blocks.push_back(curve_block(kSynthStructureNames[1], f.ptv44_cc, grid, mid, VolumeUnit::Percent));
  blocks.push_back(
      curve_block(kSynthStructureNames[2], f.bladder_cc, grid, record.curve(Organ::Bladder).values(), unit));
  blocks.push_back(curve_block(kSynthStructureNames[3], f.rectum_cc, grid, record.curve(Organ::Rectum).values(), unit));
  blocks.push_back(curve_block(kSynthStructureNames[4], f.bladder_overlap_frac * f.bladder_cc, grid, high,
                               VolumeUnit::Percent));
  blocks.push_back(
      curve_block(kSynthStructureNames[5], f.rectum_overlap_frac * f.rectum_cc, grid, high, VolumeUnit::Percent));
  return blocks;
}

}  // namespace dvhkit
