#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dvhkit {

/// Uniform dose axis in cGy. Dose 0 is implicit and always maps to 100%.
struct DoseGrid {
  double start_cgy = 10.0;
  double step_cgy = 10.0;
  std::size_t n_bins = 642;

  /// 10..6420 cGy in 10 cGy steps.
  static DoseGrid canonical() noexcept { return {}; }

  double dose(std::size_t bin) const noexcept { return start_cgy + step_cgy * static_cast<double>(bin); }
  double max_dose() const noexcept { return dose(n_bins - 1); }

  /// Bin index when `dose_cgy` lies on the grid (to within 1e-9 cGy).
  std::optional<std::size_t> index_of(double dose_cgy) const noexcept;

  void validate() const;

  bool operator==(const DoseGrid&) const = default;
};

/// Percent-volume curve on a DoseGrid: values in [0, 100], non-increasing.
/// The constructor validates; use enforce_monotone() to repair raw values.
class CumulativeDVH {
 public:
  CumulativeDVH(DoseGrid grid, std::vector<double> volume_pct);

  const DoseGrid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return volume_pct_; }
  std::size_t size() const noexcept { return volume_pct_.size(); }
  double operator[](std::size_t bin) const noexcept { return volume_pct_[bin]; }

  bool operator==(const CumulativeDVH&) const = default;

 private:
  DoseGrid grid_;
  std::vector<double> volume_pct_;
};

/// Throws InvalidCurve unless values are finite, in [0,100] and non-increasing.
void check_curve_values(std::span<const double> values);

/// Least-squares non-increasing projection (pool-adjacent-violators), then
/// clamped to [0, 100].
std::vector<double> monotone_projection(std::span<const double> values);

CumulativeDVH enforce_monotone(const DoseGrid& grid, std::span<const double> values);
CumulativeDVH enforce_monotone(const CumulativeDVH& curve);

/// Linear interpolation of an export curve onto `grid`. Grid doses past the
/// last export dose map to 0; doses before the first map to the first volume.
CumulativeDVH resample_to_grid(std::span<const double> doses, std::span<const double> volumes,
                               const DoseGrid& grid);

/// Volume at `dose_cgy`; 100 at dose 0, linear between bins.
double value_at(const CumulativeDVH& curve, double dose_cgy);

/// Bin-wise arithmetic mean. All curves must share a grid.
CumulativeDVH mean_curve(std::span<const CumulativeDVH> curves);

enum class Organ { Bladder, Rectum };

inline constexpr std::array<Organ, 2> kOrgans = {Organ::Bladder, Organ::Rectum};

std::string_view to_string(Organ organ) noexcept;
Organ parse_organ(std::string_view text);

inline constexpr std::size_t kNumFeatures = 6;

/// The six structure-volume inputs.
struct FeatureVector {
  double ptv60_cc = 0.0;
  double ptv44_cc = 0.0;
  double rectum_cc = 0.0;
  double bladder_cc = 0.0;
  double rectum_overlap_frac = 0.0;
  double bladder_overlap_frac = 0.0;

  static constexpr std::array<std::string_view, kNumFeatures> kNames = {
      "ptv60_cc", "ptv44_cc", "rectum_cc", "bladder_cc", "rectum_overlap_frac", "bladder_overlap_frac"};

  std::array<double, kNumFeatures> as_array() const noexcept {
    return {ptv60_cc, ptv44_cc, rectum_cc, bladder_cc, rectum_overlap_frac, bladder_overlap_frac};
  }
  static FeatureVector from_array(const std::array<double, kNumFeatures>& values) noexcept;

  /// Field-level problems; empty when valid.
  std::vector<std::string> problems() const;
  /// Throws InvalidFeatures listing every problem.
  void validate() const;

  bool operator==(const FeatureVector&) const = default;
};

enum class SourceKind { EclipseText, TomoCsv, Synthetic };

std::string_view to_string(SourceKind kind) noexcept;
SourceKind parse_source_kind(std::string_view text);

struct PatientRecord {
  std::string case_id;
  FeatureVector features;
  std::map<Organ, CumulativeDVH> dvh;
  SourceKind source = SourceKind::Synthetic;

  const CumulativeDVH& curve(Organ organ) const;
  void validate() const;
};

}  // namespace dvhkit
