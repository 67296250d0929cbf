#include "dvhkit/regressors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dvhkit/bytes.hpp"
#include "dvhkit/error.hpp"
#include "dvhkit/evaluation.hpp"
#include "dvhkit/parallel.hpp"
#include "dvhkit/rng.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

std::string_view to_string(AlgorithmId id) noexcept {
  switch (id) {
    case AlgorithmId::LR: return "LR";
    case AlgorithmId::EN: return "EN";
    case AlgorithmId::DT: return "DT";
    case AlgorithmId::RF: return "RF";
    case AlgorithmId::GBR: return "GBR";
    case AlgorithmId::MLP: return "MLP";
    case AlgorithmId::FRBP: return "FRBP";
    case AlgorithmId::Ensemble3: return "Ensemble3";
    case AlgorithmId::Ensemble6: return "Ensemble6";
  }
  return "?";
}

AlgorithmId parse_algorithm(std::string_view text) {
  const auto t = lower(trim(text));
  for (const auto id : kAlgorithms) {
    if (lower(to_string(id)) == t) return id;
  }
  throw Error(ErrorCode::UnknownAlgorithm, "unknown algorithm '" + std::string(text) + "'");
}

bool is_ensemble(AlgorithmId id) noexcept { return id == AlgorithmId::Ensemble3 || id == AlgorithmId::Ensemble6; }

namespace {

struct Range {
  double lo;
  double hi;
  bool integer;
};

// Accepted keys and their closed ranges per algorithm.
std::map<std::string, Range> allowed_keys(AlgorithmId id) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (id) {
    case AlgorithmId::LR: return {};
    case AlgorithmId::EN:
      return {{"l1_ratio", {0, 1, false}},
              {"lambda", {0, inf, false}},
              {"tol", {1e-15, 1, false}},
              {"max_iter", {1, 1e8, true}}};
    case AlgorithmId::DT: return {{"max_depth", {1, 64, true}}, {"min_leaf", {1, 1e6, true}}};
    case AlgorithmId::RF:
      return {{"n_trees", {1, 10000, true}},
              {"max_depth", {1, 64, true}},
              {"min_leaf", {1, 1e6, true}},
              {"max_features", {0, 64, true}},
              {"bootstrap", {0, 1, true}}};
    case AlgorithmId::GBR:
      return {{"n_stages", {0, 10000, true}},
              {"learning_rate", {0, 1, false}},
              {"max_depth", {1, 64, true}},
              {"min_leaf", {1, 1e6, true}}};
    case AlgorithmId::MLP:
      return {{"hidden1", {1, 4096, true}},
              {"hidden2", {0, 4096, true}},
              {"epochs", {0, 1e7, true}},
              {"learning_rate", {1e-12, 10, false}},
              {"scale_target", {0, 1, true}}};
    case AlgorithmId::FRBP:
      return {{"radius", {1e-6, 10, false}},
              {"squash_factor", {1e-6, 100, false}},
              {"accept_ratio", {1e-6, 1, false}},
              {"kappa_scale", {0, 10, false}},
              {"max_depth", {0, 6, true}},
              {"min_weight", {0, inf, false}},
              {"from_rules", {0, 1, true}}};
    case AlgorithmId::Ensemble3:
    case AlgorithmId::Ensemble6: return {};
  }
  return {};
}

int as_int(const Hyperparams& p, const char* key) { return static_cast<int>(p.at(key)); }

}  // namespace

Hyperparams default_hyperparams(AlgorithmId id) {
  switch (id) {
    case AlgorithmId::LR: return {};
    case AlgorithmId::EN: return {{"l1_ratio", 0.5}, {"lambda", 0.01}, {"tol", 1e-6}, {"max_iter", 10000}};
    case AlgorithmId::DT: return {{"max_depth", 4}, {"min_leaf", 2}};
    case AlgorithmId::RF:
      return {{"n_trees", 50}, {"max_depth", 6}, {"min_leaf", 1}, {"max_features", 0}, {"bootstrap", 1}};
    case AlgorithmId::GBR: return {{"n_stages", 50}, {"learning_rate", 0.1}, {"max_depth", 3}, {"min_leaf", 1}};
    case AlgorithmId::MLP:
      return {{"hidden1", 16}, {"hidden2", 0}, {"epochs", 1000}, {"learning_rate", 0.1}, {"scale_target", 1}};
    case AlgorithmId::FRBP:
      return {{"radius", 0.5},   {"squash_factor", 1.5}, {"accept_ratio", 0.15}, {"kappa_scale", 0.01},
              {"max_depth", 6}, {"min_weight", 1e-3},   {"from_rules", 0}};
    case AlgorithmId::Ensemble3:
    case AlgorithmId::Ensemble6: break;
  }
  throw Error(ErrorCode::UnknownAlgorithm, std::string(to_string(id)) + " is not trained directly");
}

void validate_hyperparams(AlgorithmId id, const Hyperparams& params) {
  if (is_ensemble(id)) throw Error(ErrorCode::UnknownAlgorithm, std::string(to_string(id)) + " has no fit");
  const auto allowed = allowed_keys(id);
  for (const auto& [key, value] : params) {
    const auto it = allowed.find(key);
    if (it == allowed.end()) {
      throw Error(ErrorCode::InvalidHyperparams,
                  "'" + key + "' is not a hyperparameter of " + std::string(to_string(id)));
    }
    const auto& r = it->second;
    if (!std::isfinite(value) && !(value == r.hi)) {
      throw Error(ErrorCode::InvalidHyperparams, key + " must be finite");
    }
    if (value < r.lo || value > r.hi || (r.integer && value != std::floor(value))) {
      throw Error(ErrorCode::InvalidHyperparams, key + " = " + format_double(value) + " out of range for " +
                                                     std::string(to_string(id)));
    }
  }
  if (id == AlgorithmId::GBR && params.contains("learning_rate") && !(params.at("learning_rate") > 0.0)) {
    throw Error(ErrorCode::InvalidHyperparams, "GBR learning_rate must be in (0, 1]");
  }
}

Hyperparams resolve_hyperparams(AlgorithmId id, const Hyperparams& overrides) {
  auto out = default_hyperparams(id);
  validate_hyperparams(id, overrides);
  for (const auto& [k, v] : overrides) out[k] = v;
  return out;
}

std::vector<Hyperparams> default_grid(AlgorithmId id) {
  std::vector<Hyperparams> grid;
  switch (id) {
    case AlgorithmId::EN:
      for (const double lambda : {1e-3, 1e-2, 1e-1, 1.0}) {
        for (const double l1 : {0.1, 0.5, 0.9}) grid.push_back({{"lambda", lambda}, {"l1_ratio", l1}});
      }
      break;
    case AlgorithmId::DT:
      for (const double d : {2, 3, 4}) grid.push_back({{"max_depth", d}});
      break;
    case AlgorithmId::RF:
      for (const double t : {50, 200}) {
        for (const double d : {3, 5}) grid.push_back({{"n_trees", t}, {"max_depth", d}});
      }
      break;
    case AlgorithmId::GBR:
      for (const double s : {50, 200}) {
        for (const double eta : {0.05, 0.1}) grid.push_back({{"n_stages", s}, {"learning_rate", eta}});
      }
      break;
    case AlgorithmId::MLP:
      for (const double h : {8, 16}) grid.push_back({{"hidden1", h}});
      break;
    default: grid.push_back({}); break;
  }
  for (auto& g : grid) g = resolve_hyperparams(id, g);
  return grid;
}

std::string format_hyperparams(const Hyperparams& params) {
  std::string out;
  for (const auto& [k, v] : params) {
    if (!out.empty()) out += ' ';
    out += k + '=' + format_double(v);
  }
  return out;
}

Matrix feature_matrix(std::span<const PatientRecord> cohort) {
  Matrix X(cohort.size(), kNumFeatures);
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto f = cohort[i].features.as_array();
    for (std::size_t c = 0; c < kNumFeatures; ++c) X(i, c) = f[c];
  }
  return X;
}

std::string training_fingerprint(AlgorithmId algorithm, Organ organ, std::span<const PatientRecord> cohort,
                                 const Hyperparams& params, std::uint64_t seed) {
  ByteWriter w;
  w.str(to_string(algorithm));
  w.str(to_string(organ));
  w.str(format_hyperparams(params));
  w.u64(seed);
  w.u64(cohort.size());
  for (const auto& r : cohort) {
    w.str(r.case_id);
    for (const double v : r.features.as_array()) w.f64(v);
    const auto& curve = r.curve(organ);
    w.f64(curve.grid().start_cgy);
    w.f64(curve.grid().step_cgy);
    w.f64s(curve.values());
  }
  return sha256_hex(w.bytes());
}

namespace {

struct VisitPredict {
  std::span<const double> z;    // standardized features
  std::span<const double> raw;  // raw features (FRBP)
  std::span<const FuzzyPartition> partitions;

  double operator()(const LinearModel& m) const { return m.predict(z); }
  double operator()(const RegressionTree& m) const { return m.predict(z); }
  double operator()(const RandomForest& m) const { return m.predict(z); }
  double operator()(const BoostedTrees& m) const { return m.predict(z); }
  double operator()(const Mlp& m) const { return m.predict(z); }
  double operator()(const FuzzyDecisionTree& m) const { return fdt_predict(m, partitions, raw); }
};

MlpParams mlp_params(const Hyperparams& p) {
  MlpParams mp;
  mp.hidden = {as_int(p, "hidden1")};
  if (as_int(p, "hidden2") > 0) mp.hidden.push_back(as_int(p, "hidden2"));
  mp.epochs = as_int(p, "epochs");
  mp.learning_rate = p.at("learning_rate");
  mp.scale_target = p.at("scale_target") != 0.0;
  return mp;
}

FrbpParams frbp_params(const Hyperparams& p) {
  FrbpParams fp;
  fp.clustering.radius = p.at("radius");
  fp.clustering.squash_factor = p.at("squash_factor");
  fp.clustering.accept_ratio = p.at("accept_ratio");
  fp.kappa_scale = p.at("kappa_scale");
  fp.max_depth = as_int(p, "max_depth");
  fp.min_weight = p.at("min_weight");
  return fp;
}

}  // namespace

FrbpParams frbp_params_from(const Hyperparams& overrides) {
  return frbp_params(resolve_hyperparams(AlgorithmId::FRBP, overrides));
}

std::vector<double> TrainedDvhModel::raw_predict(const FeatureVector& features) const {
  const auto raw = features.as_array();
  const auto z = standardizer.transform(raw);
  const VisitPredict visit{z, raw, partitions};
  std::vector<double> out(per_bin.size());
  for (std::size_t b = 0; b < per_bin.size(); ++b) out[b] = std::visit(visit, per_bin[b]);
  return out;
}

TrainedDvhModel train_dvh_model(AlgorithmId algorithm, Organ organ, std::span<const PatientRecord> cohort,
                                const Hyperparams& params, std::uint64_t seed) {
  const auto hp = resolve_hyperparams(algorithm, params);
  if (cohort.size() < kNumFeatures + 1) {
    throw Error(ErrorCode::TooFewRecords, "training needs at least " + std::to_string(kNumFeatures + 1) +
                                              " records, got " + std::to_string(cohort.size()));
  }
  const DoseGrid grid = cohort.front().curve(organ).grid();
  for (const auto& r : cohort) {
    if (!(r.curve(organ).grid() == grid)) throw Error(ErrorCode::MismatchedLengths, "cohort grids differ");
  }

  TrainedDvhModel model;
  model.algorithm = algorithm;
  model.organ = organ;
  model.grid = grid;
  model.hyperparams = hp;
  model.seed = seed;
  model.fingerprint = training_fingerprint(algorithm, organ, cohort, hp, seed);

  const Matrix X = feature_matrix(cohort);
  model.standardizer = Standardizer::fit(X);
  const Matrix Z = model.standardizer.transform(X);
  FrbpParams fp;
  if (algorithm == AlgorithmId::FRBP) {
    fp = frbp_params(hp);
    model.partitions = fit_partitions(X, fp);
  }
  const bool from_rules = algorithm == AlgorithmId::FRBP && hp.at("from_rules") != 0.0;
  const FuzzyTrainingSet fuzzy_set =
      algorithm == AlgorithmId::FRBP && !from_rules ? fuzzy_training_set(X, model.partitions) : FuzzyTrainingSet{};

  model.per_bin.resize(grid.n_bins);
  parallel_for(grid.n_bins, [&](std::size_t b) {
    std::vector<double> y(cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) y[i] = cohort[i].curve(organ)[b];
    const std::uint64_t bin_seed = Rng::derive(seed, b);
    try {
      switch (algorithm) {
        case AlgorithmId::LR: model.per_bin[b] = fit_ols(Z, y); break;
        case AlgorithmId::EN: {
          ElasticNetParams ep;
          ep.l1_ratio = hp.at("l1_ratio");
          ep.lambda = hp.at("lambda");
          ep.tol = hp.at("tol");
          ep.max_iter = as_int(hp, "max_iter");
          model.per_bin[b] = fit_elastic_net(Z, y, ep);
          break;
        }
        case AlgorithmId::DT:
          model.per_bin[b] = fit_cart(Z, y, {as_int(hp, "max_depth"), as_int(hp, "min_leaf"), 0});
          break;
        case AlgorithmId::RF: {
          ForestParams rp;
          rp.n_trees = as_int(hp, "n_trees");
          rp.max_depth = as_int(hp, "max_depth");
          rp.min_leaf = as_int(hp, "min_leaf");
          rp.max_features = as_int(hp, "max_features");
          rp.bootstrap = hp.at("bootstrap") != 0.0;
          model.per_bin[b] = fit_random_forest(Z, y, rp, bin_seed);
          break;
        }
        case AlgorithmId::GBR: {
          BoostParams bp;
          bp.n_stages = as_int(hp, "n_stages");
          bp.learning_rate = hp.at("learning_rate");
          bp.max_depth = as_int(hp, "max_depth");
          bp.min_leaf = as_int(hp, "min_leaf");
          model.per_bin[b] = fit_gbr(Z, y, bp);
          break;
        }
        case AlgorithmId::MLP: model.per_bin[b] = fit_mlp(Z, y, mlp_params(hp), bin_seed); break;
        case AlgorithmId::FRBP:
          if (from_rules) {
            const auto rules = generate_rules(X, y, model.partitions);
            model.per_bin[b] = build_fdt(fuzzy_training_set(rules, model.partitions),
                                         [&] {
                                           std::vector<double> c;
                                           for (const auto& r : rules.rules) c.push_back(r.consequent);
                                           return c;
                                         }(),
                                         fp.max_depth, fp.min_weight);
          } else {
            model.per_bin[b] = build_fdt(fuzzy_set, y, fp.max_depth, fp.min_weight);
          }
          break;
        case AlgorithmId::Ensemble3:
        case AlgorithmId::Ensemble6: break;
      }
    } catch (const Error& e) {
      throw Error(e.code(), "bin " + std::to_string(b) + " (" + format_double(grid.dose(b)) + " cGy): " + e.message());
    }
  });
  return model;
}

CumulativeDVH predict_dvh(const TrainedDvhModel& model, const FeatureVector& features) {
  features.validate();
  return enforce_monotone(model.grid, model.raw_predict(features));
}

std::vector<int> fold_assignment(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidHyperparams, "cross-validation needs k >= 2");
  if (n < static_cast<std::size_t>(k)) throw Error(ErrorCode::TooFewRecords, "fewer records than folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  std::vector<int> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  return fold;
}

GridSearchResult grid_search_cv(AlgorithmId algorithm, Organ organ, std::span<const PatientRecord> train,
                                std::span<const Hyperparams> grid, int k, std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::InvalidHyperparams, "empty hyperparameter grid");
  const auto fold = fold_assignment(train.size(), k, seed);
  GridSearchResult result;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& candidate : grid) {
    double total = 0.0;
    for (int f = 0; f < k; ++f) {
      std::vector<PatientRecord> fit, hold;
      for (std::size_t i = 0; i < train.size(); ++i) (fold[i] == f ? hold : fit).push_back(train[i]);
      const auto model = train_dvh_model(algorithm, organ, fit, candidate, Rng::derive(seed, 1000 + f));
      double fold_score = 0.0;
      for (const auto& r : hold) {
        fold_score += median_abs_error(r.curve(organ), predict_dvh(model, r.features), DoseBand::Full);
      }
      total += fold_score / static_cast<double>(hold.size());
    }
    const double score = total / static_cast<double>(k);
    result.candidates.push_back(resolve_hyperparams(algorithm, candidate));
    result.scores.push_back(score);
    if (score < best) {
      best = score;
      result.best = result.candidates.back();
    }
  }
  return result;
}

}  // namespace dvhkit
