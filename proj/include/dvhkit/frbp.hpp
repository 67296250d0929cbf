#pragma once

// Fuzzy rule-based prediction: potential-based cluster centres, hierarchical
// fuzzy partitioning, a linguistic rule base and a fuzzy decision tree.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvhkit/matrix.hpp"

namespace dvhkit {

enum class FuzzyShape { LeftShoulder, Triangle, Trapezoid, RightShoulder };

/// Piecewise-linear set with feet `a`, `d` and core [b, c]. Shoulders hold
/// membership 1 out to the domain edge; a Triangle has b == c.
struct FuzzySet {
  std::string label;
  FuzzyShape shape = FuzzyShape::Triangle;
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

  double membership(double x) const noexcept;
  bool operator==(const FuzzySet&) const = default;
};

/// Strong fuzzy partition of one feature: memberships sum to one everywhere.
struct FuzzyPartition {
  std::size_t feature_index = 0;
  std::vector<FuzzySet> sets;
  double within_std = 0.0;
  double domain_lo = 0.0;
  double domain_hi = 0.0;

  /// Builds the strong partition whose set cores are `cores` (sorted, disjoint).
  /// The first and last sets become shoulders.
  static FuzzyPartition from_cores(std::size_t feature_index, const std::vector<std::pair<double, double>>& cores,
                                   double domain_lo, double domain_hi);

  std::vector<std::pair<double, double>> cores() const;
  void memberships(double x, std::span<double> out) const noexcept;
  std::vector<double> memberships(double x) const;
  /// Index of the label, or npos.
  std::size_t find_label(std::string_view label) const noexcept;

  bool operator==(const FuzzyPartition&) const = default;
};

/// Membership-weighted within-set standard deviation of `values`.
double partition_within_std(const FuzzyPartition& partition, std::span<const double> values);

struct SubtractiveParams {
  double radius = 0.5;        // r_a on the min-max normalised domain
  double squash_factor = 1.5;  // r_b = squash_factor * r_a
  double accept_ratio = 0.15;  // stop once the best potential falls below this share of the first
};

/// Potential-based cluster centres of a 1-D sample, sorted ascending. A sample
/// with no spread yields its single value.
std::vector<double> subtractive_centers(std::span<const double> values, const SubtractiveParams& params);

/// The hierarchy of partitions obtained by repeatedly merging the adjacent
/// pair of sets whose union least increases the within-set variance. Returns
/// candidates from min(|centers|, 7) sets down to 2.
std::vector<FuzzyPartition> hfp_partitions(std::span<const double> values, std::span<const double> centers,
                                           std::size_t feature_index = 0);

/// Minimises within_std + kappa·|sets|; ties go to fewer sets. A negative
/// kappa selects the default of 0.01 times the domain span.
FuzzyPartition select_partition(std::span<const FuzzyPartition> candidates, double kappa = -1.0);

/// Linguistic labels by ordinal position ("small", "medium", "high", ...).
std::vector<std::string> label_ladder(std::size_t n_sets);
FuzzyPartition assign_labels(FuzzyPartition partition);

struct FrbpParams {
  SubtractiveParams clustering;
  double kappa_scale = 0.01;  // parsimony weight as a fraction of the domain span
  int max_depth = 6;
  double min_weight = 1e-3;
};

/// Centres -> hierarchy -> selection -> labels for one feature column.
FuzzyPartition fit_feature_partition(std::span<const double> values, std::size_t feature_index,
                                     const FrbpParams& params);
std::vector<FuzzyPartition> fit_partitions(const Matrix& X, const FrbpParams& params);

struct FuzzyRule {
  std::vector<int> antecedent;  // set index per feature
  double consequent = 0.0;
  double degree = 1.0;
  std::size_t support = 0;

  bool operator==(const FuzzyRule&) const = default;
};

struct RuleBase {
  std::vector<FuzzyRule> rules;  // unique antecedents, lexicographic order
};

/// One rule per sample from its maximum-membership sets; rules sharing an
/// antecedent merge into a degree-weighted mean consequent.
RuleBase generate_rules(const Matrix& X, std::span<const double> y, std::span<const FuzzyPartition> partitions);

/// Rule text, one rule per line (see docs/formats.md).
std::string format_rules(const RuleBase& rules, std::span<const FuzzyPartition> partitions,
                         std::span<const std::string_view> feature_names);
RuleBase parse_rules(std::string_view text, std::span<const FuzzyPartition> partitions,
                     std::span<const std::string_view> feature_names);

/// Feature names used in rule text, in FeatureVector order.
std::vector<std::string_view> rule_feature_names();

/// Memberships of every training item in every set, plus item weights.
struct FuzzyTrainingSet {
  std::vector<Matrix> membership;  // per feature: n x |sets|
  std::vector<double> weight;
};

FuzzyTrainingSet fuzzy_training_set(const Matrix& X, std::span<const FuzzyPartition> partitions);
/// Rules as crisp items weighted by degree x support.
FuzzyTrainingSet fuzzy_training_set(const RuleBase& rules, std::span<const FuzzyPartition> partitions);

struct FdtNode {
  std::int32_t attribute = -1;  // -1 marks a leaf
  std::uint32_t first_child = 0;
  std::uint32_t n_children = 0;
  double value = 0.0;

  bool operator==(const FdtNode&) const = default;
};

struct FuzzyDecisionTree {
  std::vector<FdtNode> nodes;
  std::vector<std::size_t> attribute_order;  // features ranked by root gain
  std::vector<double> root_gains;            // per feature

  bool operator==(const FuzzyDecisionTree&) const = default;
};

/// Variance-reduction gain of splitting a weighted node on one attribute.
double fuzzy_split_gain(const FuzzyTrainingSet& set, std::span<const double> node_weight, std::span<const double> y,
                        std::size_t attribute);

FuzzyDecisionTree build_fdt(const FuzzyTrainingSet& set, std::span<const double> y, int max_depth = 6,
                            double min_weight = 1e-3);

/// Weighted average of leaf values over all paths, each weighted by the
/// product of memberships along it.
double fdt_predict(const FuzzyDecisionTree& tree, std::span<const FuzzyPartition> partitions,
                   std::span<const double> x);

}  // namespace dvhkit
