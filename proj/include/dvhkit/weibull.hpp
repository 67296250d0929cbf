#pragma once

// Two-parameter Weibull fits per dose bin and the tail-quantile band built
// from them.

#include <span>
#include <string>
#include <vector>

#include "dvhkit/dvh.hpp"

namespace dvhkit {

/// Sample moments. stddev uses n - 1; skewness and kurtosis are the plain
/// standardized central moments m3/m2^1.5 and m4/m2^2 (Gaussian kurtosis 3).
struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;
};

/// Needs n >= 4 and some spread (ZeroVariance otherwise).
Moments moments(std::span<const double> sample);

struct WeibullParams {
  double k = 1.0;  // shape
  double s = 1.0;  // scale
};

enum class PlottingPosition { MedianRank, MeanRank };

/// Empirical CDF at the 1-based rank i of n.
double plotting_position(std::size_t i, std::size_t n, PlottingPosition pos = PlottingPosition::MedianRank);

/// Least squares on ln(-ln(1 - F)) = k ln x - k ln s, over the positive values
/// only. Throws InsufficientPositive (< 3 positive) or DegenerateFit.
WeibullParams weibull_fit_lsm(std::span<const double> sample, PlottingPosition pos = PlottingPosition::MedianRank);

double weibull_cdf(const WeibullParams& params, double x);
double weibull_quantile(const WeibullParams& params, double p);

enum class FitStatus { Fitted, Degenerate };

std::string_view to_string(FitStatus status) noexcept;

struct ConfidenceBand {
  DoseGrid grid;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<FitStatus> fit_status;

  bool operator==(const ConfidenceBand&) const = default;
};

/// Per bin: Weibull fit of the cohort's positive values, tails at
/// (1 - confidence)/2 and (1 + confidence)/2, clamped to [0, 100]. Bins with
/// fewer than 3 positive values or a degenerate fit fall back to the cohort
/// min/max.
ConfidenceBand build_band(std::span<const CumulativeDVH> cohort, double confidence = 0.95,
                          PlottingPosition pos = PlottingPosition::MedianRank);

/// Share of (curve, bin) pairs with lower <= value <= upper. With
/// `fitted_only`, Degenerate bins are skipped.
double band_coverage(const ConfidenceBand& band, std::span<const CumulativeDVH> curves, bool fitted_only = false);

/// dose_cgy, lower_pct, upper_pct, fit_status
std::string band_csv(const ConfidenceBand& band);
ConfidenceBand parse_band_csv(std::string_view text);

}  // namespace dvhkit
