#pragma once

// Versioned binary container for trained models, ensembles, bands and the
// held-out test report, plus a JSON sidecar for people.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dvhkit/evaluation.hpp"
#include "dvhkit/regressors.hpp"
#include "dvhkit/weibull.hpp"

namespace dvhkit {

inline constexpr std::uint32_t kBundleVersion = 1;

struct ModelBundle {
  std::uint32_t format_version = kBundleVersion;
  std::string created_at;  // ISO-8601 UTC; not part of the fingerprint
  std::uint64_t seed = 0;
  std::vector<TrainedDvhModel> models;
  /// Ensemble members per (ensemble id, organ).
  std::map<std::pair<AlgorithmId, Organ>, std::vector<AlgorithmId>> ensembles;
  std::map<Organ, ConfidenceBand> bands;
  /// Report rows from the held-out test split (averages only).
  std::vector<ErrorReport> test_reports;
  /// SHA-256 over the serialized model sections.
  std::string fingerprint;

  const TrainedDvhModel* find(AlgorithmId algorithm, Organ organ) const noexcept;
  /// Models plus ensembles available for `organ`, in roster order.
  std::vector<AlgorithmId> algorithms(Organ organ) const;
  /// Throws UnknownAlgorithm when the bundle lacks the model.
  CumulativeDVH predict(AlgorithmId algorithm, Organ organ, const FeatureVector& features) const;
};

std::vector<std::uint8_t> serialize_model(const TrainedDvhModel& model);
TrainedDvhModel deserialize_model(std::span<const std::uint8_t> bytes);

/// Digest of the models as serialized, in bundle order.
std::string bundle_fingerprint(std::span<const TrainedDvhModel> models);

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle);
/// Throws CorruptBundle (bad magic, digest or fingerprint) or VersionMismatch.
ModelBundle deserialize_bundle(std::span<const std::uint8_t> bytes);

std::string bundle_sidecar_json(const ModelBundle& bundle);

/// Writes `path` and `path` + ".json".
void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace dvhkit
