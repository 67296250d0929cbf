#include "dvhkit/dvh.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dvhkit/error.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

std::optional<std::size_t> DoseGrid::index_of(double dose_cgy) const noexcept {
  const double pos = (dose_cgy - start_cgy) / step_cgy;
  const double rounded = std::round(pos);
  if (rounded < 0.0 || rounded >= static_cast<double>(n_bins)) return std::nullopt;
  if (std::abs(dose(static_cast<std::size_t>(rounded)) - dose_cgy) > 1e-9) return std::nullopt;
  return static_cast<std::size_t>(rounded);
}

void DoseGrid::validate() const {
  if (!(step_cgy > 0.0) || !std::isfinite(step_cgy) || !std::isfinite(start_cgy) || n_bins == 0) {
    throw Error(ErrorCode::InvalidCurve, "dose grid needs step > 0 and at least one bin");
  }
  if (start_cgy <= 0.0) {
    throw Error(ErrorCode::InvalidCurve, "dose grid must start above the implicit dose-0 point");
  }
}

void check_curve_values(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!std::isfinite(v) || v < 0.0 || v > 100.0) {
      std::ostringstream msg;
      msg << "volume " << v << " at bin " << i << " outside [0, 100]";
      throw Error(ErrorCode::InvalidCurve, msg.str());
    }
    if (i > 0 && v > values[i - 1]) {
      std::ostringstream msg;
      msg << "curve increases at bin " << i << " (" << values[i - 1] << " -> " << v << ")";
      throw Error(ErrorCode::InvalidCurve, msg.str());
    }
  }
}

CumulativeDVH::CumulativeDVH(DoseGrid grid, std::vector<double> volume_pct)
    : grid_(grid), volume_pct_(std::move(volume_pct)) {
  grid_.validate();
  if (volume_pct_.size() != grid_.n_bins) {
    throw Error(ErrorCode::MismatchedLengths, "curve has " + std::to_string(volume_pct_.size()) +
                                                  " values for " + std::to_string(grid_.n_bins) + " bins");
  }
  check_curve_values(volume_pct_);
}

std::vector<double> monotone_projection(std::span<const double> values) {
  // Pool adjacent violators for a non-increasing fit. Blocks hold (sum, count).
  struct Block {
    double sum;
    double count;
    double mean() const { return sum / count; }
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (const double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidCurve, "non-finite value in curve");
    blocks.push_back({v, 1.0});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() < blocks.back().mean()) {
      const Block last = blocks.back();
      blocks.pop_back();
      blocks.back().sum += last.sum;
      blocks.back().count += last.count;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& b : blocks) {
    const double m = std::clamp(b.mean(), 0.0, 100.0);
    out.insert(out.end(), static_cast<std::size_t>(b.count), m);
  }
  return out;
}

CumulativeDVH enforce_monotone(const DoseGrid& grid, std::span<const double> values) {
  return CumulativeDVH(grid, monotone_projection(values));
}

CumulativeDVH enforce_monotone(const CumulativeDVH& curve) {
  return enforce_monotone(curve.grid(), curve.values());
}

CumulativeDVH resample_to_grid(std::span<const double> doses, std::span<const double> volumes,
                               const DoseGrid& grid) {
  grid.validate();
  if (doses.size() != volumes.size()) {
    throw Error(ErrorCode::MismatchedLengths, std::to_string(doses.size()) + " doses vs " +
                                                  std::to_string(volumes.size()) + " volumes");
  }
  if (doses.size() < 2) throw Error(ErrorCode::MismatchedLengths, "need at least two dose points");
  for (std::size_t i = 1; i < doses.size(); ++i) {
    if (!(doses[i] > doses[i - 1])) {
      throw Error(ErrorCode::NonMonotoneDoseAxis, "dose axis not strictly increasing at row " + std::to_string(i));
    }
  }
  for (const double v : volumes) {
    if (!std::isfinite(v) || v < 0.0 || v > 100.0) {
      throw Error(ErrorCode::InvalidCurve, "export volume outside [0, 100]");
    }
  }

  std::vector<double> out(grid.n_bins);
  std::size_t seg = 0;
  for (std::size_t b = 0; b < grid.n_bins; ++b) {
    const double d = grid.dose(b);
    if (d > doses.back()) {
      out[b] = 0.0;
    } else if (d <= doses.front()) {
      out[b] = volumes.front();
    } else {
      while (doses[seg + 1] < d) ++seg;
      const double t = (d - doses[seg]) / (doses[seg + 1] - doses[seg]);
      out[b] = t == 1.0 ? volumes[seg + 1] : volumes[seg] + t * (volumes[seg + 1] - volumes[seg]);
    }
  }
  return enforce_monotone(grid, out);
}

double value_at(const CumulativeDVH& curve, double dose_cgy) {
  const auto& grid = curve.grid();
  if (!std::isfinite(dose_cgy) || dose_cgy < 0.0 || dose_cgy > grid.max_dose() + 1e-9) {
    std::ostringstream msg;
    msg << "dose " << dose_cgy << " cGy outside [0, " << grid.max_dose() << "]";
    throw Error(ErrorCode::DoseOutOfRange, msg.str());
  }
  if (dose_cgy == 0.0) return 100.0;
  if (auto idx = grid.index_of(dose_cgy)) return curve[*idx];
  if (dose_cgy < grid.start_cgy) {
    const double t = dose_cgy / grid.start_cgy;
    return 100.0 + t * (curve[0] - 100.0);
  }
  const double pos = (dose_cgy - grid.start_cgy) / grid.step_cgy;
  const auto lo = std::min(static_cast<std::size_t>(pos), grid.n_bins - 2);
  const double t = pos - static_cast<double>(lo);
  return curve[lo] + t * (curve[lo + 1] - curve[lo]);
}

CumulativeDVH mean_curve(std::span<const CumulativeDVH> curves) {
  if (curves.empty()) throw Error(ErrorCode::EmptyCohort, "mean of zero curves");
  const auto& grid = curves.front().grid();
  std::vector<double> sum(grid.n_bins, 0.0);
  for (const auto& c : curves) {
    if (!(c.grid() == grid)) throw Error(ErrorCode::MismatchedLengths, "curves on different grids");
    for (std::size_t b = 0; b < grid.n_bins; ++b) sum[b] += c[b];
  }
  const double n = static_cast<double>(curves.size());
  for (auto& s : sum) s /= n;
  // A bin-wise mean of non-increasing curves is non-increasing; rounding can
  // still leave a one-ulp rise, which the projection removes.
  for (std::size_t b = 1; b < sum.size(); ++b) sum[b] = std::min(sum[b], sum[b - 1]);
  return CumulativeDVH(grid, std::move(sum));
}

std::string_view to_string(Organ organ) noexcept {
  return organ == Organ::Bladder ? "bladder" : "rectum";
}

Organ parse_organ(std::string_view text) {
  const auto t = lower(text);
  if (t == "bladder") return Organ::Bladder;
  if (t == "rectum") return Organ::Rectum;
  throw Error(ErrorCode::InvalidConfig, "unknown organ '" + std::string(text) + "'");
}

FeatureVector FeatureVector::from_array(const std::array<double, kNumFeatures>& v) noexcept {
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

std::vector<std::string> FeatureVector::problems() const {
  std::vector<std::string> out;
  const auto values = as_array();
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto name = std::string(kNames[i]);
    const double v = values[i];
    if (!std::isfinite(v)) {
      out.push_back(name + " must be finite");
    } else if (i < 4 && v < 0.0) {
      out.push_back(name + " must be >= 0 (got " + std::to_string(v) + ")");
    } else if ((i == 2 || i == 3) && v == 0.0) {
      out.push_back(name + " must be > 0");
    } else if (i >= 4 && (v < 0.0 || v > 1.0)) {
      out.push_back(name + " must lie in [0, 1] (got " + std::to_string(v) + ")");
    }
  }
  return out;
}

void FeatureVector::validate() const {
  const auto issues = problems();
  if (issues.empty()) return;
  std::string msg;
  for (const auto& p : issues) {
    if (!msg.empty()) msg += "; ";
    msg += p;
  }
  throw Error(ErrorCode::InvalidFeatures, msg);
}

std::string_view to_string(SourceKind kind) noexcept {
  switch (kind) {
    case SourceKind::EclipseText: return "EclipseText";
    case SourceKind::TomoCsv: return "TomoCsv";
    case SourceKind::Synthetic: return "Synthetic";
  }
  return "Synthetic";
}

SourceKind parse_source_kind(std::string_view text) {
  if (text == "EclipseText") return SourceKind::EclipseText;
  if (text == "TomoCsv") return SourceKind::TomoCsv;
  if (text == "Synthetic") return SourceKind::Synthetic;
  throw Error(ErrorCode::InvalidConfig, "unknown source kind '" + std::string(text) + "'");
}

const CumulativeDVH& PatientRecord::curve(Organ organ) const {
  const auto it = dvh.find(organ);
  if (it == dvh.end()) {
    throw Error(ErrorCode::StructureUnresolved, case_id + " has no " + std::string(to_string(organ)) + " curve");
  }
  return it->second;
}

void PatientRecord::validate() const {
  if (case_id.empty()) throw Error(ErrorCode::InvalidConfig, "patient record without case id");
  features.validate();
  for (const auto organ : kOrgans) check_curve_values(curve(organ).values());
}

}  // namespace dvhkit
