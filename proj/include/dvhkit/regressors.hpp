#pragma once

// Whole-curve models: one single-output predictor per dose bin, all sharing
// one feature standardizer.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dvhkit/dvh.hpp"
#include "dvhkit/frbp.hpp"
#include "dvhkit/models.hpp"

namespace dvhkit {

enum class AlgorithmId { LR, EN, DT, RF, GBR, MLP, FRBP, Ensemble3, Ensemble6 };

inline constexpr std::array<AlgorithmId, 9> kAlgorithms = {
    AlgorithmId::LR,  AlgorithmId::EN,   AlgorithmId::DT,        AlgorithmId::RF,       AlgorithmId::GBR,
    AlgorithmId::MLP, AlgorithmId::FRBP, AlgorithmId::Ensemble3, AlgorithmId::Ensemble6};

/// Algorithms that are fitted directly (ensembles are formed afterwards).
inline constexpr std::array<AlgorithmId, 7> kTrainable = {AlgorithmId::LR,  AlgorithmId::EN,  AlgorithmId::DT,
                                                          AlgorithmId::RF,  AlgorithmId::GBR, AlgorithmId::MLP,
                                                          AlgorithmId::FRBP};

std::string_view to_string(AlgorithmId id) noexcept;
/// Case-insensitive; throws UnknownAlgorithm.
AlgorithmId parse_algorithm(std::string_view text);
bool is_ensemble(AlgorithmId id) noexcept;

/// Name -> numeric value. Integers, flags (0/1) and MLP widths (hidden1,
/// hidden2; 0 = no layer) are all stored as doubles.
using Hyperparams = std::map<std::string, double>;

Hyperparams default_hyperparams(AlgorithmId id);
/// Defaults overlaid with `overrides`, validated.
Hyperparams resolve_hyperparams(AlgorithmId id, const Hyperparams& overrides);
/// FRBP settings (partitions, tree) from hp overrides.
FrbpParams frbp_params_from(const Hyperparams& overrides);
/// Throws InvalidHyperparams for unknown keys or out-of-range values.
void validate_hyperparams(AlgorithmId id, const Hyperparams& params);
/// Grid-search candidates, in declaration order.
std::vector<Hyperparams> default_grid(AlgorithmId id);

std::string format_hyperparams(const Hyperparams& params);

using BinPredictor = std::variant<LinearModel, RegressionTree, RandomForest, BoostedTrees, Mlp, FuzzyDecisionTree>;

struct TrainedDvhModel {
  AlgorithmId algorithm = AlgorithmId::LR;
  Organ organ = Organ::Bladder;
  DoseGrid grid;
  Standardizer standardizer;
  /// FRBP only: input partitions on raw feature values, shared by every bin.
  std::vector<FuzzyPartition> partitions;
  std::vector<BinPredictor> per_bin;
  Hyperparams hyperparams;
  std::uint64_t seed = 0;
  /// SHA-256 of the training data, algorithm, hyperparameters and seed.
  std::string fingerprint;

  /// Per-bin outputs before clamping and monotone projection.
  std::vector<double> raw_predict(const FeatureVector& features) const;

  bool operator==(const TrainedDvhModel&) const = default;
};

/// Feature rows of a cohort, in FeatureVector order.
Matrix feature_matrix(std::span<const PatientRecord> cohort);

std::string training_fingerprint(AlgorithmId algorithm, Organ organ, std::span<const PatientRecord> cohort,
                                 const Hyperparams& params, std::uint64_t seed);

/// One independent fit per grid bin. Fit errors are rethrown with the bin index.
TrainedDvhModel train_dvh_model(AlgorithmId algorithm, Organ organ, std::span<const PatientRecord> cohort,
                                const Hyperparams& params, std::uint64_t seed);

/// Raw per-bin predictions, clamped to [0, 100] and made non-increasing.
CumulativeDVH predict_dvh(const TrainedDvhModel& model, const FeatureVector& features);

struct GridSearchResult {
  Hyperparams best;
  std::vector<Hyperparams> candidates;
  std::vector<double> scores;  // mean fold score per candidate
};

/// k-fold cross-validated exhaustive search. Score = mean over folds of the
/// mean per-patient full-range MAE; the first best candidate wins ties.
GridSearchResult grid_search_cv(AlgorithmId algorithm, Organ organ, std::span<const PatientRecord> train,
                                std::span<const Hyperparams> grid, int k, std::uint64_t seed);

/// Seeded fold label (0..k-1) per record: shuffled positions taken modulo k.
std::vector<int> fold_assignment(std::size_t n, int k, std::uint64_t seed);

}  // namespace dvhkit
