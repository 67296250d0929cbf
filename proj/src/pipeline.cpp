#include "dvhkit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>

#include "json.hpp"

#include "dvhkit/error.hpp"
#include "dvhkit/library.hpp"
#include "dvhkit/rng.hpp"
#include "dvhkit/synth.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string cmd_rules(std::span<const PatientRecord> library, Organ organ, double dose_cgy,
                      const Hyperparams& frbp_overrides) {
  if (library.size() < 2) throw Error(ErrorCode::TooFewRecords, "need at least two records for rules");
  const auto& grid = library.front().curve(organ).grid();
  if (dose_cgy < grid.dose(0) - 1e-9 || dose_cgy > grid.dose(grid.n_bins - 1) + 1e-9) {
    throw Error(ErrorCode::DoseOutOfRange, "dose " + format_double(dose_cgy) + " cGy is off the grid");
  }
  const auto X = feature_matrix(library);
  const auto partitions = fit_partitions(X, frbp_params_from(frbp_overrides));
  std::vector<double> y;
  for (const auto& r : library) y.push_back(value_at(r.curve(organ), dose_cgy));
  const auto rules = generate_rules(X, y, partitions);
  const auto names = rule_feature_names();
  return "# " + std::string(to_string(organ)) + " at " + format_double(dose_cgy) + " cGy, " +
         std::to_string(library.size()) + " records\n" + format_rules(rules, partitions, names);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

IngestResult ingest_directory(const fs::path& dir, const StructureNameRules& rules) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  IngestResult result;
  for (const auto& file : files) {
    const auto ext = lower(file.extension().string());
    if (ext != ".txt" && ext != ".csv") {
      result.skipped.push_back(file.filename().string());
      continue;
    }
    const auto content = read_text_file(file);
    // PII stops the whole run: a library must never contain identifiers.
    const auto pii = deidentify_check(content);
    if (!pii.pass) {
      throw Error(ErrorCode::PiiDetected, file.filename().string() + " line " +
                                              std::to_string(pii.offending.front().line) + ": identifying field");
    }
    try {
      if (ext == ".txt") {
        const auto parsed = parse_eclipse_text(content);
        result.records.push_back(build_record(parsed.blocks, rules, parsed.patient_id, SourceKind::EclipseText));
      } else {
        const auto parsed = parse_tomo_csv(content);
        result.records.push_back(build_record(parsed.blocks, rules, file.stem().string(), SourceKind::TomoCsv));
      }
    } catch (const Error& e) {
      result.failures.push_back({file.filename().string(), e.what()});
    }
  }
  if (result.records.empty()) {
    throw Error(ErrorCode::NoParseableFiles, "no parseable exports in " + dir.string() + " (" +
                                                 std::to_string(result.failures.size()) + " failed)");
  }
  std::vector<std::string> ids;
  for (const auto& r : result.records) ids.push_back(r.case_id);
  std::sort(ids.begin(), ids.end());
  if (const auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
    throw Error(ErrorCode::InvalidConfig, "duplicate case id '" + *dup + "'");
  }
  return result;
}

IngestResult cmd_ingest(const fs::path& dir, const StructureNameRules& rules, const fs::path& out) {
  auto result = ingest_directory(dir, rules);
  save_library(out, result.records);
  auto table = out;
  table.replace_filename(out.stem().string() + ".features.csv");
  write_text_file(table, features_csv(result.records));
  return result;
}

void write_fixtures(std::span<const PatientRecord> records, const fs::path& dir, SourceKind format,
                    VolumeUnit unit) {
  fs::create_directories(dir);
  for (const auto& r : records) {
    const auto blocks = synth_export_blocks(r, unit);
    if (format == SourceKind::TomoCsv) {
      write_text_file(dir / (r.case_id + ".csv"), write_tomo_csv(blocks));
    } else {
      write_text_file(dir / (r.case_id + ".txt"), write_eclipse_text(r.case_id, blocks));
    }
  }
}

TrainOptions TrainOptions::from_config(const Config& config) {
  TrainOptions o;
  o.seed = static_cast<std::uint64_t>(config.get_int("seed", static_cast<long long>(o.seed)));
  o.split_ratio = config.get_double("split.ratio", o.split_ratio);
  o.tune = config.get_bool("train.tune", o.tune);
  o.folds = static_cast<int>(config.get_int("cv.folds", o.folds));
  o.band_confidence = config.get_double("band.confidence", o.band_confidence);
  if (config.has("train.algorithms")) {
    o.algorithms.clear();
    for (const auto& name : config.get_list("train.algorithms")) o.algorithms.push_back(parse_algorithm(name));
  }
  for (const auto id : kTrainable) {
    auto hp = hyperparams_from_config(config, id);
    if (!hp.empty()) o.overrides[id] = std::move(hp);
  }
  return o;
}

TrainOutcome cmd_train(std::span<const PatientRecord> library, const TrainOptions& options) {
  if (options.algorithms.empty()) throw Error(ErrorCode::InvalidConfig, "no algorithms selected");
  std::vector<AlgorithmId> algorithms;
  for (const auto id : kTrainable) {
    if (std::find(options.algorithms.begin(), options.algorithms.end(), id) != options.algorithms.end()) {
      algorithms.push_back(id);
    }
  }
  for (const auto id : options.algorithms) {
    if (is_ensemble(id)) {
      throw Error(ErrorCode::InvalidConfig, "ensembles are formed automatically; do not list " +
                                                std::string(to_string(id)));
    }
  }
  if (library.size() < 2) throw Error(ErrorCode::TooFewRecords, "library has fewer than two records");
  for (const auto& r : library) r.validate();

  TrainOutcome out;
  auto split = split_cohort(library, options.split_ratio, options.seed);
  out.n_train = split.train.size();
  out.n_test = split.test.size();
  if (out.n_train < kNumFeatures + 1) {
    throw Error(ErrorCode::TooFewRecords, "training split has " + std::to_string(out.n_train) + " records, need " +
                                              std::to_string(kNumFeatures + 1));
  }
  out.log.push_back("split " + std::to_string(out.n_train) + " train / " + std::to_string(out.n_test) + " test");

  ModelBundle& bundle = out.bundle;
  bundle.created_at = utc_timestamp();
  bundle.seed = options.seed;

  for (const auto organ : kOrgans) {
    std::vector<ErrorReport> reports;
    std::vector<AlgorithmId> report_ids;
    for (const auto id : algorithms) {
      const auto alg_index = static_cast<std::uint64_t>(id);
      const auto model_seed = Rng::derive(options.seed, 2 * alg_index + static_cast<std::uint64_t>(organ));
      Hyperparams hp = options.overrides.contains(id) ? options.overrides.at(id) : Hyperparams{};
      if (options.tune) {
        auto grid = default_grid(id);
        for (auto& g : grid) {
          for (const auto& [k, v] : hp) {
            if (!g.contains(k)) g[k] = v;  // grid keys are searched, the rest stay fixed
          }
        }
        const auto search = grid_search_cv(id, organ, split.train, grid, options.folds, model_seed);
        hp = search.best;
        out.log.push_back("tuned " + std::string(to_string(id)) + "/" + std::string(to_string(organ)) + ": " +
                          format_hyperparams(hp));
      }
      bundle.models.push_back(train_dvh_model(id, organ, split.train, hp, model_seed));
      const auto& model = bundle.models.back();
      if (!split.test.empty()) {
        reports.push_back(cohort_error_report(std::string(to_string(id)), organ, "test", split.test,
                                              [&](const FeatureVector& f) { return predict_dvh(model, f); }));
        report_ids.push_back(id);
      }
    }

    for (const auto& [ens, count] : {std::pair{AlgorithmId::Ensemble3, std::size_t{3}},
                                    std::pair{AlgorithmId::Ensemble6, std::size_t{6}}}) {
      if (reports.size() < count) continue;
      std::vector<AlgorithmId> members;
      for (const auto idx : select_best(reports, count)) members.push_back(report_ids[idx]);
      std::sort(members.begin(), members.end());
      bundle.ensembles[{ens, organ}] = members;
      std::string names;
      for (const auto m : members) names += (names.empty() ? "" : ",") + std::string(to_string(m));
      out.log.push_back(std::string(to_string(ens)) + "/" + std::string(to_string(organ)) + " = " + names);
    }
    for (auto& r : reports) bundle.test_reports.push_back(std::move(r));
    for (const auto ens : {AlgorithmId::Ensemble3, AlgorithmId::Ensemble6}) {
      if (!bundle.ensembles.contains({ens, organ})) continue;
      bundle.test_reports.push_back(
          cohort_error_report(std::string(to_string(ens)), organ, "test", split.test,
                              [&](const FeatureVector& f) { return bundle.predict(ens, organ, f); }));
    }

    std::vector<CumulativeDVH> curves;
    for (const auto& r : split.train) curves.push_back(r.curve(organ));
    if (curves.size() >= 3) bundle.bands[organ] = build_band(curves, options.band_confidence);
  }
  bundle.fingerprint = bundle_fingerprint(bundle.models);
  return out;
}

EvaluateOutcome cmd_evaluate(const ModelBundle& bundle, std::span<const PatientRecord> validation) {
  if (validation.empty()) throw Error(ErrorCode::EmptyValidation, "validation library is empty");
  if (bundle.format_version != kBundleVersion) throw Error(ErrorCode::VersionMismatch, "bundle version");
  for (const auto& r : validation) r.validate();
  EvaluateOutcome out;
  for (const auto organ : kOrgans) {
    for (const auto& rep : bundle.test_reports) {
      if (rep.organ == organ) out.reports.push_back(rep);
    }
    std::vector<CumulativeDVH> actual;
    std::vector<std::string> ids;
    for (const auto& r : validation) {
      actual.push_back(r.curve(organ));
      ids.push_back(r.case_id);
    }
    const auto band = bundle.bands.find(organ);
    if (band != bundle.bands.end()) {
      out.coverage.push_back({"actual", organ, band_coverage(band->second, actual)});
    }
    for (const auto id : bundle.algorithms(organ)) {
      std::vector<CumulativeDVH> predicted;
      for (const auto& r : validation) predicted.push_back(bundle.predict(id, organ, r.features));
      const auto name = std::string(to_string(id));
      out.reports.push_back(cohort_error_report(name, organ, "validation", ids, actual, predicted));
      if (validation.size() >= 2) {
        for (auto& row : kw_dose_summary(name, organ, actual, predicted)) out.kruskal_wallis.push_back(row);
      }
      if (band != bundle.bands.end()) out.coverage.push_back({name, organ, band_coverage(band->second, predicted)});
    }
  }
  return out;
}

void write_evaluation(const EvaluateOutcome& outcome, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto organ : kOrgans) {
    std::vector<ErrorReport> rows;
    for (const auto& r : outcome.reports) {
      if (r.organ == organ) rows.push_back(r);
    }
    write_text_file(dir / ("report_" + std::string(to_string(organ)) + ".csv"), report_csv(rows));
  }
  write_text_file(dir / "report.json", report_json(outcome.reports));
  write_text_file(dir / "kruskal_wallis.csv", kw_csv(outcome.kruskal_wallis));
  std::string cov = "method,organ,coverage\n";
  for (const auto& c : outcome.coverage) {
    cov += c.method + "," + std::string(to_string(c.organ)) + "," + format_double(c.coverage) + "\n";
  }
  write_text_file(dir / "band_coverage.csv", cov);
}

namespace {

FeatureVector features_from(const json& j) {
  std::vector<std::string> problems;
  std::array<double, kNumFeatures> values{};
  if (!j.is_object()) throw Error(ErrorCode::InvalidFeatures, "features must be a JSON object");
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto name = std::string(FeatureVector::kNames[i]);
    const auto it = j.find(name);
    if (it == j.end()) {
      problems.push_back(name + " is missing");
    } else if (!it->is_number()) {
      problems.push_back(name + " must be a number");
    } else {
      values[i] = it->get<double>();
    }
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(FeatureVector::kNames.begin(), FeatureVector::kNames.end(), key) == FeatureVector::kNames.end()) {
      problems.push_back(key + " is not a feature");
    }
  }
  if (problems.empty()) {
    const auto f = FeatureVector::from_array(values);
    problems = f.problems();
    if (problems.empty()) return f;
  }
  std::string msg;
  for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
  throw Error(ErrorCode::InvalidFeatures, msg);
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidFeatures, std::string("malformed JSON: ") + e.what());
  }
}

json curve_object(const CumulativeDVH& c) {
  json j;
  j["start_cgy"] = c.grid().start_cgy;
  j["step_cgy"] = c.grid().step_cgy;
  j["values"] = std::vector<double>(c.values().begin(), c.values().end());
  return j;
}

std::string dose_key(double dose) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.0f", dose);
  return buf;
}

std::vector<AlgorithmId> requested(const PredictionContext& ctx, const PredictRequest& req) {
  const auto available = ctx.bundle->algorithms(req.organ);
  if (req.algorithms.empty()) return available;
  for (const auto id : req.algorithms) {
    if (std::find(available.begin(), available.end(), id) == available.end()) {
      throw Error(ErrorCode::UnknownAlgorithm, std::string(to_string(id)) + " is not available for " +
                                                   std::string(to_string(req.organ)));
    }
  }
  return req.algorithms;
}

}  // namespace

FeatureVector parse_features_json(std::string_view json_text) {
  const auto j = parse_json(json_text);
  if (j.is_object() && j.contains("features")) return features_from(j.at("features"));
  return features_from(j);
}

PredictRequest parse_predict_request(std::string_view json_text) {
  const auto j = parse_json(json_text);
  if (!j.is_object()) throw Error(ErrorCode::InvalidFeatures, "request must be a JSON object");
  PredictRequest req;
  if (!j.contains("features")) throw Error(ErrorCode::InvalidFeatures, "features is missing");
  req.features = features_from(j.at("features"));
  if (!j.contains("organ") || !j.at("organ").is_string()) {
    throw Error(ErrorCode::InvalidFeatures, "organ must be \"bladder\" or \"rectum\"");
  }
  try {
    req.organ = parse_organ(j.at("organ").get<std::string>());
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidFeatures, e.message());
  }
  if (j.contains("algorithms")) {
    if (!j.at("algorithms").is_array()) throw Error(ErrorCode::InvalidFeatures, "algorithms must be an array");
    for (const auto& a : j.at("algorithms")) {
      if (!a.is_string()) throw Error(ErrorCode::InvalidFeatures, "algorithm names must be strings");
      req.algorithms.push_back(parse_algorithm(a.get<std::string>()));
    }
  }
  return req;
}

std::string predict_json(const PredictionContext& ctx, const PredictRequest& req) {
  req.features.validate();
  const auto ids = requested(ctx, req);
  json root;
  root["organ"] = std::string(to_string(req.organ));
  json f;
  const auto values = req.features.as_array();
  for (std::size_t i = 0; i < kNumFeatures; ++i) f[std::string(FeatureVector::kNames[i])] = values[i];
  root["features"] = f;

  json curves = json::object(), points = json::object(), flags = json::object();
  const auto constraints_it = ctx.constraints.per_organ.find(req.organ);
  for (const auto id : ids) {
    const auto name = std::string(to_string(id));
    const auto curve = ctx.bundle->predict(id, req.organ, req.features);
    curves[name] = curve_object(curve);
    json p;
    for (const double d : kPointDoses) p[dose_key(d)] = value_at(curve, d);
    points[name] = p;
    auto list = json::array();
    if (constraints_it != ctx.constraints.per_organ.end()) {
      for (const auto& flag : check_constraints(curve, constraints_it->second)) {
        list.push_back({{"dose_cgy", flag.constraint.dose_cgy},
                        {"max_volume_pct", flag.constraint.max_volume_pct},
                        {"predicted_pct", flag.predicted_pct},
                        {"pass", flag.pass}});
      }
    }
    flags[name] = list;
  }
  root["curves"] = curves;
  const auto band = ctx.bands.find(req.organ);
  if (band == ctx.bands.end()) {
    root["band"] = nullptr;
  } else {
    json b;
    b["start_cgy"] = band->second.grid.start_cgy;
    b["step_cgy"] = band->second.grid.step_cgy;
    b["lower"] = band->second.lower;
    b["upper"] = band->second.upper;
    std::vector<std::string> status;
    for (const auto s : band->second.fit_status) status.emplace_back(to_string(s));
    b["fit_status"] = status;
    root["band"] = b;
  }
  root["point_doses"] = points;
  root["constraint_flags"] = flags;
  return root.dump();
}

std::string predict_csv(const PredictionContext& ctx, const PredictRequest& req) {
  req.features.validate();
  const auto ids = requested(ctx, req);
  std::vector<CumulativeDVH> curves;
  std::string out = "dose_cgy";
  for (const auto id : ids) {
    curves.push_back(ctx.bundle->predict(id, req.organ, req.features));
    out += "," + std::string(to_string(id));
  }
  const auto band = ctx.bands.find(req.organ);
  const bool with_band = band != ctx.bands.end() && !curves.empty() && band->second.grid == curves.front().grid();
  if (with_band) out += ",lower_pct,upper_pct";
  out += "\n";
  if (curves.empty()) return out;
  const auto& grid = curves.front().grid();
  for (std::size_t b = 0; b < grid.n_bins; ++b) {
    out += format_double(grid.dose(b));
    for (const auto& c : curves) out += "," + format_double(c[b]);
    if (with_band) out += "," + format_double(band->second.lower[b]) + "," + format_double(band->second.upper[b]);
    out += "\n";
  }
  return out;
}

ConfidenceBand cmd_band(std::span<const PatientRecord> library, Organ organ, double confidence) {
  std::vector<CumulativeDVH> curves;
  for (const auto& r : library) curves.push_back(r.curve(organ));
  return build_band(curves, confidence);
}

}  // namespace dvhkit
