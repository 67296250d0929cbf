#pragma once

// Error metrics, cohort reports, the Kruskal-Wallis test, model ranking,
// ensembles and the train/test split.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dvhkit/dvh.hpp"
#include "dvhkit/regressors.hpp"

namespace dvhkit {

/// Inclusive dose ranges in cGy.
enum class DoseBand { Full, Low, Intermediate, High };

inline constexpr std::array<DoseBand, 4> kBands = {DoseBand::Full, DoseBand::Low, DoseBand::Intermediate,
                                                   DoseBand::High};
inline constexpr std::array<double, 3> kPointDoses = {5300.0, 5600.0, 6000.0};
/// Doses at which actual and predicted volumes are compared by Kruskal-Wallis.
inline constexpr std::array<double, 8> kKwDoses = {3000, 4000, 4500, 5000, 5300, 5600, 5900, 6000};

std::pair<double, double> band_range(DoseBand band) noexcept;
/// Column label, e.g. "2000-3990".
std::string_view band_label(DoseBand band) noexcept;
/// Grid bins whose dose lies inside the band.
std::vector<std::size_t> band_bins(const DoseGrid& grid, DoseBand band);

double median(std::vector<double> values);

/// Median over band bins of |actual - predicted|. Throws EmptyBand.
double median_abs_error(const CumulativeDVH& actual, const CumulativeDVH& predicted, DoseBand band);

double point_error(const CumulativeDVH& actual, const CumulativeDVH& predicted, double dose_cgy);

struct PatientErrors {
  std::string case_id;
  std::array<double, 4> band{};   // kBands order
  std::array<double, 3> point{};  // kPointDoses order
};

struct ErrorReport {
  std::string method;
  Organ organ = Organ::Bladder;
  std::string dataset;
  std::vector<PatientErrors> patients;
  std::array<double, 4> band_avg{};
  std::array<double, 3> point_avg{};
  /// Sample variance (n - 1) of per-patient full-range MAE; 0 for one patient.
  double variance = 0.0;
};

ErrorReport cohort_error_report(std::string method, Organ organ, std::string dataset,
                                std::span<const std::string> case_ids, std::span<const CumulativeDVH> actual,
                                std::span<const CumulativeDVH> predicted);

using CurvePredictor = std::function<CumulativeDVH(const FeatureVector&)>;

ErrorReport cohort_error_report(std::string method, Organ organ, std::string dataset,
                                std::span<const PatientRecord> cohort, const CurvePredictor& predict);

struct KruskalWallis {
  double h = 0.0;
  double p_value = 1.0;
  std::size_t df = 0;
};

/// Mid-ranks with tie correction. All values identical gives H = 0, p = 1.
KruskalWallis kruskal_wallis(std::span<const std::vector<double>> groups);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double df);

/// The `count` best methods by full-range MAE, then variance, then position
/// in `reports`. Returns indices into `reports`.
std::vector<std::size_t> select_best(std::span<const ErrorReport> reports, std::size_t count);

/// Bin-wise mean of the members' predictions.
CumulativeDVH ensemble_predict(std::span<const TrainedDvhModel* const> members, const FeatureVector& features);

struct CohortSplit {
  std::vector<PatientRecord> train;
  std::vector<PatientRecord> test;
};

/// Seeded shuffle; floor(ratio·n) records go to train (94 -> 65 / 29).
CohortSplit split_cohort(std::span<const PatientRecord> cohort, double ratio, std::uint64_t seed);

/// Table-layout CSV for one organ: method, dataset, band averages, point doses.
std::string report_csv(std::span<const ErrorReport> reports, int decimals = 1);
/// All reports grouped per organ, full precision.
std::string report_json(std::span<const ErrorReport> reports);

struct KwRow {
  std::string method;
  Organ organ = Organ::Bladder;
  double dose_cgy = 0.0;
  KruskalWallis test;
};

/// Actual vs predicted volumes across patients at each dose in kKwDoses.
std::vector<KwRow> kw_dose_summary(std::string_view method, Organ organ, std::span<const CumulativeDVH> actual,
                                   std::span<const CumulativeDVH> predicted);
std::string kw_csv(std::span<const KwRow> rows);

}  // namespace dvhkit
