#include "dvhkit/weibull.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dvhkit/error.hpp"
#include "dvhkit/parallel.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

Moments moments(std::span<const double> sample) {
  if (sample.size() < 4) throw Error(ErrorCode::InsufficientPositive, "moments need at least 4 values");
  const double n = static_cast<double>(sample.size());
  Moments m;
  m.mean = std::accumulate(sample.begin(), sample.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (const double x : sample) {
    const double d = x - m.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
  if (*lo == *hi || !(m2 > 0.0)) throw Error(ErrorCode::ZeroVariance, "sample has no spread");
  m.stddev = std::sqrt(m2 / (n - 1.0));
  m2 /= n;
  m3 /= n;
  m4 /= n;
  m.skewness = m3 / std::pow(m2, 1.5);
  m.kurtosis = m4 / (m2 * m2);
  return m;
}

double plotting_position(std::size_t i, std::size_t n, PlottingPosition pos) {
  const double di = static_cast<double>(i), dn = static_cast<double>(n);
  return pos == PlottingPosition::MedianRank ? (di - 0.3) / (dn + 0.4) : di / (dn + 1.0);
}

WeibullParams weibull_fit_lsm(std::span<const double> sample, PlottingPosition pos) {
  std::vector<double> x;
  for (const double v : sample) {
    if (v > 0.0) x.push_back(v);
  }
  if (x.size() < 3) {
    throw Error(ErrorCode::InsufficientPositive, std::to_string(x.size()) + " positive values, need 3");
  }
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  std::vector<double> u(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = std::log(x[i]);
    w[i] = std::log(-std::log1p(-plotting_position(i + 1, n, pos)));
  }
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(n);
  const double mw = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(n);
  double suu = 0.0, suw = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    suw += (u[i] - mu) * (w[i] - mw);
  }
  // mean of identical logs can round, so compare the ends and use a relative floor
  if (x.front() == x.back() || !(suu > 1e-24 * static_cast<double>(n) * std::max(1.0, mu * mu))) {
    throw Error(ErrorCode::DegenerateFit, "all positive values are equal");
  }
  const double a = suw / suu;
  const double b = mw - a * mu;
  if (!(a > 0.0) || !std::isfinite(a)) throw Error(ErrorCode::DegenerateFit, "fitted shape is not positive");
  return {a, std::exp(-b / a)};
}

double weibull_cdf(const WeibullParams& params, double x) {
  if (x <= 0.0) return 0.0;
  return -std::expm1(-std::pow(x / params.s, params.k));
}

double weibull_quantile(const WeibullParams& params, double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidHyperparams, "quantile needs 0 < p < 1");
  return params.s * std::pow(-std::log1p(-p), 1.0 / params.k);
}

std::string_view to_string(FitStatus status) noexcept {
  return status == FitStatus::Fitted ? "fitted" : "degenerate";
}

ConfidenceBand build_band(std::span<const CumulativeDVH> cohort, double confidence, PlottingPosition pos) {
  if (cohort.size() < 3) throw Error(ErrorCode::EmptyCohort, "band needs at least 3 curves");
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorCode::InvalidConfig, "confidence must be in (0, 1)");
  const DoseGrid grid = cohort.front().grid();
  for (const auto& c : cohort) {
    if (!(c.grid() == grid)) throw Error(ErrorCode::MismatchedLengths, "band cohort grids differ");
  }
  ConfidenceBand band;
  band.grid = grid;
  band.lower.assign(grid.n_bins, 0.0);
  band.upper.assign(grid.n_bins, 0.0);
  band.fit_status.assign(grid.n_bins, FitStatus::Degenerate);
  const double tail = 0.5 * (1.0 - confidence);

  parallel_for(grid.n_bins, [&](std::size_t b) {
    std::vector<double> values(cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) values[i] = cohort[i][b];
    try {
      const auto params = weibull_fit_lsm(values, pos);
      const double lo = std::clamp(weibull_quantile(params, tail), 0.0, 100.0);
      const double hi = std::clamp(weibull_quantile(params, 1.0 - tail), 0.0, 100.0);
      band.lower[b] = lo;
      band.upper[b] = hi;
      band.fit_status[b] = FitStatus::Fitted;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientPositive && e.code() != ErrorCode::DegenerateFit) throw;
      const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
      band.lower[b] = *mn;
      band.upper[b] = *mx;
    }
  });
  return band;
}

double band_coverage(const ConfidenceBand& band, std::span<const CumulativeDVH> curves, bool fitted_only) {
  std::size_t inside = 0, total = 0;
  for (const auto& c : curves) {
    if (!(c.grid() == band.grid)) throw Error(ErrorCode::MismatchedLengths, "curve and band grids differ");
    for (std::size_t b = 0; b < band.grid.n_bins; ++b) {
      if (fitted_only && band.fit_status[b] != FitStatus::Fitted) continue;
      ++total;
      if (c[b] >= band.lower[b] && c[b] <= band.upper[b]) ++inside;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(total);
}

std::string band_csv(const ConfidenceBand& band) {
  std::string out = "dose_cgy,lower_pct,upper_pct,fit_status\n";
  for (std::size_t b = 0; b < band.grid.n_bins; ++b) {
    out += format_double(band.grid.dose(b)) + "," + format_double(band.lower[b]) + "," +
           format_double(band.upper[b]) + "," + std::string(to_string(band.fit_status[b])) + "\n";
  }
  return out;
}

ConfidenceBand parse_band_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines[0]) != "dose_cgy,lower_pct,upper_pct,fit_status") {
    throw Error(ErrorCode::MalformedHeader, "band CSV header must be dose_cgy,lower_pct,upper_pct,fit_status");
  }
  ConfidenceBand band;
  std::vector<double> doses;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ",");
    double d = 0, lo = 0, hi = 0;
    if (f.size() != 4 || !parse_double(f[0], d) || !parse_double(f[1], lo) || !parse_double(f[2], hi)) {
      throw Error(ErrorCode::MissingDoseTable, "bad band row at line " + std::to_string(i + 1));
    }
    const auto status = trim(f[3]);
    if (status != "fitted" && status != "degenerate") {
      throw Error(ErrorCode::MissingDoseTable, "bad fit_status at line " + std::to_string(i + 1));
    }
    if (!(lo >= 0.0 && lo <= hi && hi <= 100.0)) {
      throw Error(ErrorCode::InvalidCurve, "band bounds out of order at line " + std::to_string(i + 1));
    }
    doses.push_back(d);
    band.lower.push_back(lo);
    band.upper.push_back(hi);
    band.fit_status.push_back(status == "fitted" ? FitStatus::Fitted : FitStatus::Degenerate);
  }
  if (doses.size() < 2) throw Error(ErrorCode::MissingDoseTable, "band needs at least two rows");
  band.grid.start_cgy = doses[0];
  band.grid.step_cgy = doses[1] - doses[0];
  band.grid.n_bins = doses.size();
  band.grid.validate();
  for (std::size_t b = 0; b < doses.size(); ++b) {
    if (std::abs(doses[b] - band.grid.dose(b)) > 1e-6) {
      throw Error(ErrorCode::NonMonotoneDoseAxis, "band doses are not evenly spaced");
    }
  }
  return band;
}

}  // namespace dvhkit
