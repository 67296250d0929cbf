#include "dvhkit/evaluation.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "json.hpp"

#include "dvhkit/error.hpp"
#include "dvhkit/rng.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

std::pair<double, double> band_range(DoseBand band) noexcept {
  switch (band) {
    case DoseBand::Full: return {0.0, 6420.0};
    case DoseBand::Low: return {0.0, 1990.0};
    case DoseBand::Intermediate: return {2000.0, 3990.0};
    case DoseBand::High: return {4000.0, 6420.0};
  }
  return {0.0, 0.0};
}

std::string_view band_label(DoseBand band) noexcept {
  switch (band) {
    case DoseBand::Full: return "0-6420";
    case DoseBand::Low: return "0-1990";
    case DoseBand::Intermediate: return "2000-3990";
    case DoseBand::High: return "4000-6420";
  }
  return "?";
}

std::vector<std::size_t> band_bins(const DoseGrid& grid, DoseBand band) {
  const auto [lo, hi] = band_range(band);
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < grid.n_bins; ++b) {
    const double d = grid.dose(b);
    if (d >= lo - 1e-9 && d <= hi + 1e-9) out.push_back(b);
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyBand, "median of nothing");
  const auto n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

double median_abs_error(const CumulativeDVH& actual, const CumulativeDVH& predicted, DoseBand band) {
  if (!(actual.grid() == predicted.grid())) throw Error(ErrorCode::MismatchedLengths, "curves on different grids");
  const auto bins = band_bins(actual.grid(), band);
  if (bins.empty()) throw Error(ErrorCode::EmptyBand, std::string(band_label(band)) + " has no grid bins");
  std::vector<double> diff;
  diff.reserve(bins.size());
  for (const auto b : bins) diff.push_back(std::abs(actual[b] - predicted[b]));
  return median(std::move(diff));
}

double point_error(const CumulativeDVH& actual, const CumulativeDVH& predicted, double dose_cgy) {
  return std::abs(value_at(actual, dose_cgy) - value_at(predicted, dose_cgy));
}

ErrorReport cohort_error_report(std::string method, Organ organ, std::string dataset,
                                std::span<const std::string> case_ids, std::span<const CumulativeDVH> actual,
                                std::span<const CumulativeDVH> predicted) {
  if (actual.empty()) throw Error(ErrorCode::EmptyCohort, "no patients to evaluate");
  if (actual.size() != predicted.size() || actual.size() != case_ids.size()) {
    throw Error(ErrorCode::MismatchedLengths, "actual, predicted and case ids differ in length");
  }
  ErrorReport report;
  report.method = std::move(method);
  report.organ = organ;
  report.dataset = std::move(dataset);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    PatientErrors pe;
    pe.case_id = case_ids[i];
    for (std::size_t b = 0; b < kBands.size(); ++b) pe.band[b] = median_abs_error(actual[i], predicted[i], kBands[b]);
    for (std::size_t d = 0; d < kPointDoses.size(); ++d) {
      pe.point[d] = point_error(actual[i], predicted[i], kPointDoses[d]);
    }
    report.patients.push_back(std::move(pe));
  }
  const double n = static_cast<double>(report.patients.size());
  for (const auto& pe : report.patients) {
    for (std::size_t b = 0; b < 4; ++b) report.band_avg[b] += pe.band[b] / n;
    for (std::size_t d = 0; d < 3; ++d) report.point_avg[d] += pe.point[d] / n;
  }
  if (report.patients.size() > 1) {
    double ss = 0.0;
    for (const auto& pe : report.patients) ss += (pe.band[0] - report.band_avg[0]) * (pe.band[0] - report.band_avg[0]);
    report.variance = ss / (n - 1.0);
  }
  return report;
}

ErrorReport cohort_error_report(std::string method, Organ organ, std::string dataset,
                                std::span<const PatientRecord> cohort, const CurvePredictor& predict) {
  if (cohort.empty()) throw Error(ErrorCode::EmptyCohort, "no patients to evaluate");
  std::vector<std::string> ids;
  std::vector<CumulativeDVH> actual, predicted;
  for (const auto& r : cohort) {
    ids.push_back(r.case_id);
    actual.push_back(r.curve(organ));
    predicted.push_back(predict(r.features));
  }
  return cohort_error_report(std::move(method), organ, std::move(dataset), ids, actual, predicted);
}

double chi_square_sf(double x, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::InvalidHyperparams, "chi-square needs df > 0");
  if (!(x > 0.0)) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

KruskalWallis kruskal_wallis(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw Error(ErrorCode::EmptyCohort, "Kruskal-Wallis needs at least two groups");
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw Error(ErrorCode::EmptyCohort, "group " + std::to_string(g) + " is empty");
    for (const double v : groups[g]) pooled.emplace_back(v, g);
  }
  const double N = static_cast<double>(pooled.size());
  if (pooled.size() < 3) throw Error(ErrorCode::EmptyCohort, "Kruskal-Wallis needs at least three values");
  std::sort(pooled.begin(), pooled.end());

  std::vector<double> rank_sum(groups.size(), 0.0);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double t = static_cast<double>(j - i);
    const double mid_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t q = i; q < j; ++q) rank_sum[pooled[q].second] += mid_rank;
    tie_term += t * t * t - t;
    i = j;
  }

  KruskalWallis out;
  out.df = groups.size() - 1;
  const double correction = 1.0 - tie_term / (N * N * N - N);
  if (correction <= 0.0) return out;  // every value identical

  double s = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    s += rank_sum[g] * rank_sum[g] / static_cast<double>(groups[g].size());
  }
  const double h = 12.0 / (N * (N + 1.0)) * s - 3.0 * (N + 1.0);
  out.h = std::max(0.0, h / correction);
  out.p_value = chi_square_sf(out.h, static_cast<double>(out.df));
  return out;
}

std::vector<std::size_t> select_best(std::span<const ErrorReport> reports, std::size_t count) {
  if (count > reports.size()) {
    throw Error(ErrorCode::InvalidConfig, "asked for " + std::to_string(count) + " of " +
                                              std::to_string(reports.size()) + " models");
  }
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (reports[a].band_avg[0] != reports[b].band_avg[0]) return reports[a].band_avg[0] < reports[b].band_avg[0];
    return reports[a].variance < reports[b].variance;
  });
  order.resize(count);
  return order;
}

CumulativeDVH ensemble_predict(std::span<const TrainedDvhModel* const> members, const FeatureVector& features) {
  if (members.empty()) throw Error(ErrorCode::EmptyTrainingSet, "ensemble without members");
  std::vector<CumulativeDVH> curves;
  curves.reserve(members.size());
  for (const auto* m : members) curves.push_back(predict_dvh(*m, features));
  auto mean = mean_curve(curves);
  check_curve_values(mean.values());
  return mean;
}

CohortSplit split_cohort(std::span<const PatientRecord> cohort, double ratio, std::uint64_t seed) {
  if (cohort.size() < 2) throw Error(ErrorCode::TooFewRecords, "cannot split fewer than two records");
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::InvalidConfig, "split ratio must be in (0, 1)");
  const std::size_t n = cohort.size();
  auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

  CohortSplit split;
  for (std::size_t k = 0; k < n; ++k) (k < n_train ? split.train : split.test).push_back(cohort[order[k]]);
  return split;
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::string report_csv(std::span<const ErrorReport> reports, int decimals) {
  std::string out = "method,dataset";
  for (const auto band : kBands) out += "," + std::string(band_label(band));
  for (const double d : kPointDoses) out += "," + fixed(d, 0);
  out += "\n";
  for (const auto& r : reports) {
    out += r.method + "," + r.dataset;
    for (const double v : r.band_avg) out += "," + fixed(v, decimals);
    for (const double v : r.point_avg) out += "," + fixed(v, decimals);
    out += "\n";
  }
  return out;
}

std::string report_json(std::span<const ErrorReport> reports) {
  nlohmann::ordered_json root = nlohmann::ordered_json::object();
  for (const auto organ : kOrgans) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
      if (r.organ != organ) continue;
      nlohmann::ordered_json row;
      row["method"] = r.method;
      row["dataset"] = r.dataset;
      for (std::size_t b = 0; b < kBands.size(); ++b) row[std::string(band_label(kBands[b]))] = r.band_avg[b];
      for (std::size_t d = 0; d < kPointDoses.size(); ++d) row[fixed(kPointDoses[d], 0)] = r.point_avg[d];
      row["variance"] = r.variance;
      row["n_patients"] = r.patients.size();
      if (r.method == "MLP") row["note"] = "minimal stand-in: one tanh hidden layer, full-batch gradient descent";
      rows.push_back(std::move(row));
    }
    root[std::string(to_string(organ))] = std::move(rows);
  }
  return root.dump(2) + "\n";
}

std::vector<KwRow> kw_dose_summary(std::string_view method, Organ organ, std::span<const CumulativeDVH> actual,
                                   std::span<const CumulativeDVH> predicted) {
  if (actual.size() != predicted.size()) throw Error(ErrorCode::MismatchedLengths, "actual vs predicted");
  std::vector<KwRow> rows;
  for (const double dose : kKwDoses) {
    std::vector<std::vector<double>> groups(2);
    for (std::size_t i = 0; i < actual.size(); ++i) {
      groups[0].push_back(value_at(actual[i], dose));
      groups[1].push_back(value_at(predicted[i], dose));
    }
    rows.push_back({std::string(method), organ, dose, kruskal_wallis(groups)});
  }
  return rows;
}

std::string kw_csv(std::span<const KwRow> rows) {
  std::string out = "method,organ,dose_cgy,h_statistic,p_value\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::string(to_string(r.organ)) + "," + fixed(r.dose_cgy, 0) + "," +
           format_double(r.test.h) + "," + format_double(r.test.p_value) + "\n";
  }
  return out;
}

}  // namespace dvhkit
