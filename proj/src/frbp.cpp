#include "dvhkit/frbp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dvhkit/error.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

double FuzzySet::membership(double x) const noexcept {
  switch (shape) {
    case FuzzyShape::LeftShoulder:
      if (x <= c) return 1.0;
      if (x >= d) return 0.0;
      return (d - x) / (d - c);
    case FuzzyShape::RightShoulder:
      if (x >= b) return 1.0;
      if (x <= a) return 0.0;
      return (x - a) / (b - a);
    case FuzzyShape::Triangle:
    case FuzzyShape::Trapezoid:
      if (x <= a || x >= d) return 0.0;
      if (x < b) return (x - a) / (b - a);
      if (x <= c) return 1.0;
      return (d - x) / (d - c);
  }
  return 0.0;
}

FuzzyPartition FuzzyPartition::from_cores(std::size_t feature_index,
                                          const std::vector<std::pair<double, double>>& cores, double domain_lo,
                                          double domain_hi) {
  if (cores.size() < 2) throw Error(ErrorCode::InvalidHyperparams, "a fuzzy partition needs at least two sets");
  for (std::size_t j = 0; j < cores.size(); ++j) {
    if (!(cores[j].first <= cores[j].second) || (j > 0 && !(cores[j - 1].second < cores[j].first))) {
      throw Error(ErrorCode::InvalidHyperparams, "fuzzy set cores must be ordered and disjoint");
    }
  }
  FuzzyPartition p;
  p.feature_index = feature_index;
  p.domain_lo = domain_lo;
  p.domain_hi = domain_hi;
  const std::size_t m = cores.size();
  for (std::size_t j = 0; j < m; ++j) {
    FuzzySet s;
    s.b = cores[j].first;
    s.c = cores[j].second;
    s.a = j > 0 ? cores[j - 1].second : s.b;
    s.d = j + 1 < m ? cores[j + 1].first : s.c;
    if (j == 0) {
      s.shape = FuzzyShape::LeftShoulder;
    } else if (j + 1 == m) {
      s.shape = FuzzyShape::RightShoulder;
    } else {
      s.shape = s.b == s.c ? FuzzyShape::Triangle : FuzzyShape::Trapezoid;
    }
    p.sets.push_back(std::move(s));
  }
  return p;
}

std::vector<std::pair<double, double>> FuzzyPartition::cores() const {
  std::vector<std::pair<double, double>> out;
  out.reserve(sets.size());
  for (const auto& s : sets) out.emplace_back(s.b, s.c);
  return out;
}

void FuzzyPartition::memberships(double x, std::span<double> out) const noexcept {
  for (std::size_t j = 0; j < sets.size(); ++j) out[j] = sets[j].membership(x);
}

std::vector<double> FuzzyPartition::memberships(double x) const {
  std::vector<double> out(sets.size());
  memberships(x, out);
  return out;
}

std::size_t FuzzyPartition::find_label(std::string_view label) const noexcept {
  for (std::size_t j = 0; j < sets.size(); ++j) {
    if (sets[j].label == label) return j;
  }
  return std::string_view::npos;
}

double partition_within_std(const FuzzyPartition& partition, std::span<const double> values) {
  if (values.empty()) return 0.0;
  double total = 0.0;
  for (const auto& set : partition.sets) {
    double w = 0.0, wx = 0.0;
    for (const double x : values) {
      const double mu = set.membership(x);
      w += mu;
      wx += mu * x;
    }
    if (w <= 0.0) continue;
    const double m = wx / w;
    for (const double x : values) total += set.membership(x) * (x - m) * (x - m);
  }
  return std::sqrt(total / static_cast<double>(values.size()));
}

std::vector<double> subtractive_centers(std::span<const double> values, const SubtractiveParams& params) {
  if (values.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no values to cluster");
  if (!(params.radius > 0.0) || !(params.squash_factor > 0.0) || !(params.accept_ratio > 0.0)) {
    throw Error(ErrorCode::InvalidHyperparams, "clustering radius, squash factor and accept ratio must be > 0");
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  if (!(span > 0.0)) return {lo};

  const std::size_t n = values.size();
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = (values[i] - lo) / span;
  const double alpha = 4.0 / (params.radius * params.radius);
  const double rb = params.squash_factor * params.radius;
  const double beta = 4.0 / (rb * rb);

  std::vector<double> potential(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) potential[i] += std::exp(-alpha * (u[i] - u[j]) * (u[i] - u[j]));
  }

  std::vector<double> centers;
  double first = 0.0;
  for (std::size_t iter = 0; iter < n; ++iter) {
    const auto k = static_cast<std::size_t>(std::max_element(potential.begin(), potential.end()) - potential.begin());
    const double pk = potential[k];
    if (iter == 0) {
      first = pk;
    } else if (pk < params.accept_ratio * first) {
      break;
    }
    centers.push_back(values[k]);
    for (std::size_t i = 0; i < n; ++i) potential[i] -= pk * std::exp(-beta * (u[i] - u[k]) * (u[i] - u[k]));
  }
  std::sort(centers.begin(), centers.end());
  centers.erase(std::unique(centers.begin(), centers.end()), centers.end());
  return centers;
}

namespace {

constexpr std::size_t kMaxSets = 7;

}  // namespace

std::vector<FuzzyPartition> hfp_partitions(std::span<const double> values, std::span<const double> centers,
                                           std::size_t feature_index) {
  std::vector<double> c(centers.begin(), centers.end());
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  if (c.size() < 2) throw Error(ErrorCode::InvalidHyperparams, "hierarchical partitioning needs >= 2 centers");
  if (values.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no values to partition");

  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = std::min(*lo_it, c.front());
  const double hi = std::max(*hi_it, c.back());

  std::vector<std::pair<double, double>> cores;
  for (const double x : c) cores.emplace_back(x, x);

  std::vector<FuzzyPartition> out;
  auto make = [&](const std::vector<std::pair<double, double>>& k) {
    auto p = FuzzyPartition::from_cores(feature_index, k, lo, hi);
    p.within_std = partition_within_std(p, values);
    return p;
  };
  auto current = make(cores);
  while (true) {
    if (current.sets.size() <= kMaxSets) out.push_back(current);
    if (current.sets.size() == 2) break;
    // Merging sets j and j+1 sums their memberships, i.e. one set whose core
    // spans both cores; every other set is unchanged.
    FuzzyPartition best;
    bool have = false;
    for (std::size_t j = 0; j + 1 < cores.size(); ++j) {
      auto merged = cores;
      merged[j].second = merged[j + 1].second;
      merged.erase(merged.begin() + static_cast<std::ptrdiff_t>(j) + 1);
      auto candidate = make(merged);
      if (!have || candidate.within_std < best.within_std) {
        best = std::move(candidate);
        have = true;
      }
    }
    current = std::move(best);
    cores = current.cores();
  }
  return out;
}

FuzzyPartition select_partition(std::span<const FuzzyPartition> candidates, double kappa) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no candidate partitions");
  if (kappa < 0.0) kappa = 0.01 * (candidates.front().domain_hi - candidates.front().domain_lo);
  const FuzzyPartition* best = nullptr;
  double best_score = 0.0;
  for (const auto& c : candidates) {
    const double score = c.within_std + kappa * static_cast<double>(c.sets.size());
    if (best == nullptr || score < best_score || (score == best_score && c.sets.size() < best->sets.size())) {
      best = &c;
      best_score = score;
    }
  }
  return *best;
}

std::vector<std::string> label_ladder(std::size_t n_sets) {
  switch (n_sets) {
    case 1: return {"medium"};
    case 2: return {"small", "high"};
    case 3: return {"small", "medium", "high"};
    case 4: return {"small", "medium", "high", "very high"};
    case 5: return {"very small", "small", "medium", "high", "very high"};
    case 6: return {"very small", "small", "medium", "high", "very high", "extremely high"};
    case 7: return {"extremely small", "very small", "small", "medium", "high", "very high", "extremely high"};
    default: break;
  }
  throw Error(ErrorCode::InvalidHyperparams, "no label ladder for " + std::to_string(n_sets) + " sets");
}

FuzzyPartition assign_labels(FuzzyPartition partition) {
  const auto labels = label_ladder(partition.sets.size());
  for (std::size_t j = 0; j < labels.size(); ++j) partition.sets[j].label = labels[j];
  return partition;
}

FuzzyPartition fit_feature_partition(std::span<const double> values, std::size_t feature_index,
                                     const FrbpParams& params) {
  auto centers = subtractive_centers(values, params.clustering);
  if (centers.size() < 2) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (!(*hi > *lo)) {
      throw Error(ErrorCode::ConstantFeature, "feature " + std::to_string(feature_index) + " is constant");
    }
    centers = {*lo, *hi};
  }
  const auto candidates = hfp_partitions(values, centers, feature_index);
  const double span = candidates.front().domain_hi - candidates.front().domain_lo;
  return assign_labels(select_partition(candidates, params.kappa_scale * span));
}

std::vector<FuzzyPartition> fit_partitions(const Matrix& X, const FrbpParams& params) {
  std::vector<FuzzyPartition> out;
  out.reserve(X.cols());
  for (std::size_t f = 0; f < X.cols(); ++f) out.push_back(fit_feature_partition(X.column(f), f, params));
  return out;
}

RuleBase generate_rules(const Matrix& X, std::span<const double> y, std::span<const FuzzyPartition> partitions) {
  if (X.rows() == 0) throw Error(ErrorCode::EmptyCohort, "no samples for rule generation");
  if (partitions.size() != X.cols()) throw Error(ErrorCode::MismatchedLengths, "one partition per feature");

  struct Acc {
    double weighted_sum = 0.0;
    double weight = 0.0;
    double max_degree = 0.0;
    std::size_t support = 0;
  };
  std::map<std::vector<int>, Acc> groups;
  std::vector<double> mu;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    std::vector<int> antecedent(X.cols());
    double degree = 1.0;
    for (std::size_t f = 0; f < X.cols(); ++f) {
      mu.resize(partitions[f].sets.size());
      partitions[f].memberships(X(i, f), mu);
      const auto best = std::max_element(mu.begin(), mu.end()) - mu.begin();
      antecedent[f] = static_cast<int>(best);
      degree *= mu[static_cast<std::size_t>(best)];
    }
    auto& acc = groups[antecedent];
    acc.weighted_sum += degree * y[i];
    acc.weight += degree;
    acc.max_degree = std::max(acc.max_degree, degree);
    ++acc.support;
  }

  RuleBase base;
  for (const auto& [antecedent, acc] : groups) {
    if (acc.max_degree * static_cast<double>(acc.support) < 1e-6 || acc.weight <= 0.0) continue;
    base.rules.push_back({antecedent, acc.weighted_sum / acc.weight, acc.max_degree, acc.support});
  }
  return base;
}

std::vector<std::string_view> rule_feature_names() {
  return {"ptv60", "ptv44", "rectum", "bladder", "rectum_overlap", "bladder_overlap"};
}

std::string format_rules(const RuleBase& rules, std::span<const FuzzyPartition> partitions,
                         std::span<const std::string_view> feature_names) {
  std::string out = "# " + std::to_string(rules.rules.size()) + " rules\n";
  for (const auto& rule : rules.rules) {
    out += "IF ";
    for (std::size_t f = 0; f < rule.antecedent.size(); ++f) {
      if (f > 0) out += " AND ";
      out += std::string(feature_names[f]) + " IS " +
             partitions[f].sets[static_cast<std::size_t>(rule.antecedent[f])].label;
    }
    out += " THEN volume_pct = " + format_double(rule.consequent) + " (degree=" + format_double(rule.degree) +
           ", support=" + std::to_string(rule.support) + ")\n";
  }
  return out;
}

RuleBase parse_rules(std::string_view text, std::span<const FuzzyPartition> partitions,
                     std::span<const std::string_view> feature_names) {
  const auto lines = split_lines(text);
  std::map<std::vector<int>, FuzzyRule> by_antecedent;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto line = trim(lines[ln]);
    if (line.empty() || line.front() == '#') continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::InvalidConfig, "rule line " + std::to_string(ln + 1) + ": " + why);
    };
    if (!line.starts_with("IF ")) throw fail("expected 'IF'");
    const auto parts = split(line.substr(3), " THEN ");
    if (parts.size() != 2) throw fail("expected exactly one 'THEN'");

    FuzzyRule rule;
    rule.antecedent.assign(feature_names.size(), -1);
    for (const auto clause : split(parts[0], " AND ")) {
      const auto is = split(trim(clause), " IS ");
      if (is.size() != 2) throw fail("expected '<feature> IS <label>'");
      const auto name = trim(is[0]);
      const auto f = static_cast<std::size_t>(std::find(feature_names.begin(), feature_names.end(), name) -
                                              feature_names.begin());
      if (f == feature_names.size()) throw fail("unknown feature '" + std::string(name) + "'");
      if (rule.antecedent[f] >= 0) throw fail("feature '" + std::string(name) + "' repeated");
      const auto set = partitions[f].find_label(trim(is[1]));
      if (set == std::string_view::npos) throw fail("unknown label '" + std::string(trim(is[1])) + "'");
      rule.antecedent[f] = static_cast<int>(set);
    }
    if (std::find(rule.antecedent.begin(), rule.antecedent.end(), -1) != rule.antecedent.end()) {
      throw fail("every feature needs a clause");
    }

    // volume_pct = <value> (degree=<d>, support=<n>)
    auto rhs = trim(parts[1]);
    if (!rhs.starts_with("volume_pct")) throw fail("expected 'volume_pct ='");
    rhs = trim(rhs.substr(10));
    if (rhs.empty() || rhs.front() != '=') throw fail("expected '='");
    rhs = trim(rhs.substr(1));
    const auto open = rhs.find('(');
    if (open == std::string_view::npos || rhs.back() != ')') throw fail("expected '(degree=..., support=...)'");
    if (!parse_double(rhs.substr(0, open), rule.consequent)) throw fail("bad consequent");
    const auto attrs = split(rhs.substr(open + 1, rhs.size() - open - 2), ",");
    if (attrs.size() != 2) throw fail("expected degree and support");
    const auto degree = split(trim(attrs[0]), "=");
    const auto support = split(trim(attrs[1]), "=");
    double support_value = 0.0;
    if (degree.size() != 2 || trim(degree[0]) != "degree" || !parse_double(degree[1], rule.degree) ||
        !(rule.degree > 0.0 && rule.degree <= 1.0)) {
      throw fail("degree must be in (0, 1]");
    }
    if (support.size() != 2 || trim(support[0]) != "support" || !parse_double(support[1], support_value) ||
        support_value < 1.0 || support_value != std::floor(support_value)) {
      throw fail("support must be a positive integer");
    }
    rule.support = static_cast<std::size_t>(support_value);
    if (!by_antecedent.emplace(rule.antecedent, rule).second) throw fail("duplicate antecedent");
  }
  RuleBase base;
  for (auto& [k, rule] : by_antecedent) base.rules.push_back(std::move(rule));
  return base;
}

FuzzyTrainingSet fuzzy_training_set(const Matrix& X, std::span<const FuzzyPartition> partitions) {
  if (partitions.size() != X.cols()) throw Error(ErrorCode::MismatchedLengths, "one partition per feature");
  FuzzyTrainingSet set;
  set.weight.assign(X.rows(), 1.0);
  for (std::size_t f = 0; f < X.cols(); ++f) {
    Matrix m(X.rows(), partitions[f].sets.size());
    for (std::size_t i = 0; i < X.rows(); ++i) partitions[f].memberships(X(i, f), m.row(i));
    set.membership.push_back(std::move(m));
  }
  return set;
}

FuzzyTrainingSet fuzzy_training_set(const RuleBase& rules, std::span<const FuzzyPartition> partitions) {
  FuzzyTrainingSet set;
  const auto n = rules.rules.size();
  for (std::size_t f = 0; f < partitions.size(); ++f) {
    Matrix m(n, partitions[f].sets.size());
    for (std::size_t i = 0; i < n; ++i) m(i, static_cast<std::size_t>(rules.rules[i].antecedent[f])) = 1.0;
    set.membership.push_back(std::move(m));
  }
  for (const auto& r : rules.rules) set.weight.push_back(r.degree * static_cast<double>(r.support));
  return set;
}

namespace {

struct WeightedStats {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

WeightedStats weighted_stats(std::span<const double> w, std::span<const double> y) {
  WeightedStats s;
  double wy = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.weight += w[i];
    wy += w[i] * y[i];
  }
  if (s.weight <= 0.0) return s;
  s.mean = wy / s.weight;
  double ss = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) ss += w[i] * (y[i] - s.mean) * (y[i] - s.mean);
  s.variance = ss / s.weight;
  return s;
}

class FdtBuilder {
 public:
  FdtBuilder(const FuzzyTrainingSet& set, std::span<const double> y, int max_depth, double min_weight)
      : set_(set), y_(y), max_depth_(max_depth), min_weight_(min_weight), used_(set.membership.size(), false) {}

  FuzzyDecisionTree build() {
    const auto root = weighted_stats(set_.weight, y_);
    const std::size_t p = set_.membership.size();
    tree_.root_gains.assign(p, 0.0);
    for (std::size_t f = 0; f < p; ++f) tree_.root_gains[f] = fuzzy_split_gain(set_, set_.weight, y_, f);
    tree_.attribute_order.resize(p);
    std::iota(tree_.attribute_order.begin(), tree_.attribute_order.end(), 0);
    std::stable_sort(tree_.attribute_order.begin(), tree_.attribute_order.end(),
                     [&](std::size_t a, std::size_t b) { return tree_.root_gains[a] > tree_.root_gains[b]; });

    tree_.nodes.emplace_back();
    std::vector<double> w = set_.weight;
    grow(0, w, root, 0);
    return std::move(tree_);
  }

 private:
  void grow(std::size_t node_id, const std::vector<double>& w, const WeightedStats& stats, int depth) {
    tree_.nodes[node_id].value = stats.mean;
    if (depth >= max_depth_ || stats.weight < min_weight_ || !(stats.variance > 0.0)) return;

    int best = -1;
    double best_gain = 0.0;
    for (std::size_t f = 0; f < set_.membership.size(); ++f) {
      if (used_[f]) continue;
      const double g = fuzzy_split_gain(set_, w, y_, f);
      if (g > best_gain) {
        best_gain = g;
        best = static_cast<int>(f);
      }
    }
    if (best < 0 || !(best_gain > 1e-12 * stats.variance)) return;

    const auto f = static_cast<std::size_t>(best);
    const auto& mu = set_.membership[f];
    const auto n_children = mu.cols();
    const auto first = tree_.nodes.size();
    tree_.nodes[node_id].attribute = best;
    tree_.nodes[node_id].first_child = static_cast<std::uint32_t>(first);
    tree_.nodes[node_id].n_children = static_cast<std::uint32_t>(n_children);
    tree_.nodes.resize(first + n_children);

    used_[f] = true;
    std::vector<double> child(w.size());
    for (std::size_t s = 0; s < n_children; ++s) {
      for (std::size_t i = 0; i < w.size(); ++i) child[i] = w[i] * mu(i, s);
      const auto cs = weighted_stats(child, y_);
      if (cs.weight < min_weight_) {
        tree_.nodes[first + s].value = cs.weight > 0.0 ? cs.mean : stats.mean;
        continue;
      }
      grow(first + s, child, cs, depth + 1);
    }
    used_[f] = false;
  }

  const FuzzyTrainingSet& set_;
  std::span<const double> y_;
  int max_depth_;
  double min_weight_;
  std::vector<bool> used_;
  FuzzyDecisionTree tree_;
};

}  // namespace

double fuzzy_split_gain(const FuzzyTrainingSet& set, std::span<const double> node_weight, std::span<const double> y,
                        std::size_t attribute) {
  const auto parent = weighted_stats(node_weight, y);
  if (parent.weight <= 0.0) return 0.0;
  const auto& mu = set.membership[attribute];
  std::vector<double> child(node_weight.size());
  double children = 0.0;
  for (std::size_t s = 0; s < mu.cols(); ++s) {
    for (std::size_t i = 0; i < node_weight.size(); ++i) child[i] = node_weight[i] * mu(i, s);
    const auto cs = weighted_stats(child, y);
    children += cs.weight / parent.weight * cs.variance;
  }
  return parent.variance - children;
}

FuzzyDecisionTree build_fdt(const FuzzyTrainingSet& set, std::span<const double> y, int max_depth,
                            double min_weight) {
  if (y.empty() || set.weight.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no items for the fuzzy tree");
  if (set.weight.size() != y.size()) throw Error(ErrorCode::MismatchedLengths, "weights vs targets");
  if (max_depth < 0) throw Error(ErrorCode::InvalidHyperparams, "max_depth must be >= 0");
  FdtBuilder builder(set, y, max_depth, min_weight);
  return builder.build();
}

double fdt_predict(const FuzzyDecisionTree& tree, std::span<const FuzzyPartition> partitions,
                   std::span<const double> x) {
  double num = 0.0, den = 0.0;
  std::vector<std::pair<std::size_t, double>> stack{{0, 1.0}};
  std::vector<double> mu;
  while (!stack.empty()) {
    const auto [id, w] = stack.back();
    stack.pop_back();
    const auto& node = tree.nodes[id];
    if (node.attribute < 0) {
      num += w * node.value;
      den += w;
      continue;
    }
    const auto f = static_cast<std::size_t>(node.attribute);
    mu.resize(partitions[f].sets.size());
    partitions[f].memberships(x[f], mu);
    for (std::uint32_t s = 0; s < node.n_children; ++s) {
      if (mu[s] > 0.0) stack.emplace_back(node.first_child + s, w * mu[s]);
    }
  }
  return den > 0.0 ? num / den : tree.nodes.front().value;
}

}  // namespace dvhkit
