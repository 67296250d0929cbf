#pragma once

// The command-level pipeline shared by the CLI, the HTTP service and the
// Python bindings: ingest -> train -> evaluate -> predict.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dvhkit/bundle.hpp"
#include "dvhkit/config.hpp"
#include "dvhkit/evaluation.hpp"
#include "dvhkit/ingest.hpp"
#include "dvhkit/weibull.hpp"

namespace dvhkit {

struct IngestFailure {
  std::string file;
  std::string message;
};

struct IngestResult {
  std::vector<PatientRecord> records;
  std::vector<IngestFailure> failures;
  std::vector<std::string> skipped;  // files with an unknown extension
};

/// Parses every *.txt (Eclipse-style) and *.csv (Tomo-style) file in `dir`,
/// in name order. Per-file parse failures are collected; PII is fatal
/// (PiiDetected); nothing parseable is NoParseableFiles.
IngestResult ingest_directory(const std::filesystem::path& dir, const StructureNameRules& rules);

/// ingest_directory, then writes the library to `out` and a feature table
/// next to it (<out stem>.features.csv).
IngestResult cmd_ingest(const std::filesystem::path& dir, const StructureNameRules& rules,
                        const std::filesystem::path& out);

/// Writes one fixture per record: <case_id>.txt (Eclipse-style) or
/// <case_id>.csv (Tomo-style).
void write_fixtures(std::span<const PatientRecord> records, const std::filesystem::path& dir, SourceKind format,
                    VolumeUnit unit = VolumeUnit::Percent);

struct TrainOptions {
  std::vector<AlgorithmId> algorithms{kTrainable.begin(), kTrainable.end()};
  std::uint64_t seed = 42;
  double split_ratio = 0.7;
  bool tune = false;
  int folds = 5;
  double band_confidence = 0.95;
  std::map<AlgorithmId, Hyperparams> overrides;

  static TrainOptions from_config(const Config& config);
};

struct TrainOutcome {
  ModelBundle bundle;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<std::string> log;
};

/// Split, optional grid search on the training portion, fit every
/// (algorithm, organ), score on the test portion, form the 3- and 6-best
/// ensembles, and build the bands from the training curves.
TrainOutcome cmd_train(std::span<const PatientRecord> library, const TrainOptions& options);

struct CoverageRow {
  std::string method;
  Organ organ = Organ::Bladder;
  double coverage = 0.0;
};

struct EvaluateOutcome {
  std::vector<ErrorReport> reports;  // test rows from the bundle, then validation rows
  std::vector<KwRow> kruskal_wallis;
  std::vector<CoverageRow> coverage;
};

/// Scores every model and ensemble in the bundle on `validation`.
EvaluateOutcome cmd_evaluate(const ModelBundle& bundle, std::span<const PatientRecord> validation);

/// report_<organ>.csv, report.json, kruskal_wallis.csv, band_coverage.csv
void write_evaluation(const EvaluateOutcome& outcome, const std::filesystem::path& dir);

/// What the predict command and the service need besides the request.
struct PredictionContext {
  const ModelBundle* bundle = nullptr;
  std::map<Organ, ConfidenceBand> bands;  // defaults to the bundle's bands
  ConstraintSet constraints;

  explicit PredictionContext(const ModelBundle& b) : bundle(&b), bands(b.bands) {}
};

struct PredictRequest {
  FeatureVector features;
  Organ organ = Organ::Bladder;
  std::vector<AlgorithmId> algorithms;  // empty = everything for the organ
};

/// {"features": {...}, "organ": "...", "algorithms": [...]}. Missing or
/// invalid features throw InvalidFeatures with one message per field.
PredictRequest parse_predict_request(std::string_view json_text);
/// The six feature fields from a JSON object (also accepted nested under "features").
FeatureVector parse_features_json(std::string_view json_text);

/// Shared JSON response: curves per algorithm, band, point doses and
/// constraint flags. Byte-identical for identical inputs.
std::string predict_json(const PredictionContext& context, const PredictRequest& request);
/// dose_cgy, one column per algorithm, then lower_pct, upper_pct when a band exists.
std::string predict_csv(const PredictionContext& context, const PredictRequest& request);

/// Band CSV for one organ of a library.
ConfidenceBand cmd_band(std::span<const PatientRecord> library, Organ organ, double confidence);

/// FRBP rule text for one organ at one dose bin, partitions fitted on the
/// whole library.
std::string cmd_rules(std::span<const PatientRecord> library, Organ organ, double dose_cgy,
                      const Hyperparams& frbp_overrides = {});

std::string utc_timestamp();

}  // namespace dvhkit
