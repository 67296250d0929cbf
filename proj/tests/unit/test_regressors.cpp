#include "doctest.h"

#include <algorithm>

#include "dvhkit/error.hpp"
#include "dvhkit/evaluation.hpp"
#include "dvhkit/regressors.hpp"
#include "helpers.hpp"

using namespace dvhkit;

TEST_CASE("algorithm names") {
  CHECK(parse_algorithm("rf") == AlgorithmId::RF);
  CHECK(parse_algorithm("Ensemble3") == AlgorithmId::Ensemble3);
  CHECK(to_string(AlgorithmId::FRBP) == "FRBP");
  CHECK(is_ensemble(AlgorithmId::Ensemble6));
  CHECK_FALSE(is_ensemble(AlgorithmId::GBR));
  try {
    parse_algorithm("XGB");
    FAIL("should throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownAlgorithm);
  }
}

TEST_CASE("hyperparameters are validated against known keys and ranges") {
  CHECK_NOTHROW(resolve_hyperparams(AlgorithmId::RF, {{"n_trees", 10}}));
  CHECK(resolve_hyperparams(AlgorithmId::RF, {{"n_trees", 10}}).at("max_depth") == 6);
  CHECK_THROWS_AS(resolve_hyperparams(AlgorithmId::RF, {{"n_tree", 10}}), Error);
  CHECK_THROWS_AS(resolve_hyperparams(AlgorithmId::EN, {{"l1_ratio", 1.5}}), Error);
  CHECK_THROWS_AS(resolve_hyperparams(AlgorithmId::DT, {{"max_depth", 0}}), Error);
  CHECK_THROWS_AS(resolve_hyperparams(AlgorithmId::LR, {{"lambda", 1}}), Error);
  for (const auto id : kTrainable) {
    for (const auto& g : default_grid(id)) CHECK_NOTHROW(resolve_hyperparams(id, g));
  }
  CHECK(format_hyperparams({{"a", 1}, {"b", 0.5}}) == "a=1 b=0.5");
}

TEST_CASE("every algorithm trains a 642-bin model with monotone output") {
  const auto cohort = testing::small_cohort(20);
  for (const auto id : kTrainable) {
    CAPTURE(to_string(id));
    const auto m = train_dvh_model(id, Organ::Bladder, cohort, testing::fast_hp(id), 5);
    CHECK(m.per_bin.size() == 642);
    CHECK(m.algorithm == id);
    CHECK(m.fingerprint.size() == 64);
    CHECK(m.partitions.empty() == (id != AlgorithmId::FRBP));
    const auto c = predict_dvh(m, cohort[3].features);
    for (std::size_t b = 1; b < c.size(); ++b) CHECK(c[b] <= c[b - 1]);
  }
}

TEST_CASE("linear model reproduces a curve that is linear in the features") {
  // every bin is exactly linear in bladder_cc, so OLS is exact
  auto cohort = testing::small_cohort(12);
  const auto grid = DoseGrid::canonical();
  for (auto& r : cohort) {
    std::vector<double> v(grid.n_bins);
    for (std::size_t b = 0; b < v.size(); ++b) v[b] = 0.2 * r.features.bladder_cc * (1.0 - b / 700.0) / 10.0;
    r.dvh.insert_or_assign(Organ::Bladder, CumulativeDVH(grid, v));
  }
  const auto m = train_dvh_model(AlgorithmId::LR, Organ::Bladder, cohort, {}, 1);
  const auto c = predict_dvh(m, cohort[0].features);
  for (std::size_t b = 0; b < c.size(); b += 50) CHECK(c[b] == doctest::Approx(cohort[0].curve(Organ::Bladder)[b]));
}

TEST_CASE("training guards") {
  const auto cohort = testing::small_cohort(6);
  try {
    train_dvh_model(AlgorithmId::LR, Organ::Rectum, cohort, {}, 1);
    FAIL("should throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewRecords);
  }
  CHECK_THROWS_AS(train_dvh_model(AlgorithmId::Ensemble3, Organ::Rectum, testing::small_cohort(10), {}, 1), Error);
}

TEST_CASE("same data and seed give the same fingerprint") {
  const auto a = testing::small_cohort(10, 1);
  const auto b = testing::small_cohort(10, 2);
  const auto hp = resolve_hyperparams(AlgorithmId::RF, {});
  const auto fa = training_fingerprint(AlgorithmId::RF, Organ::Bladder, a, hp, 3);
  CHECK(fa == training_fingerprint(AlgorithmId::RF, Organ::Bladder, a, hp, 3));
  CHECK(fa != training_fingerprint(AlgorithmId::RF, Organ::Bladder, a, hp, 4));
  CHECK(fa != training_fingerprint(AlgorithmId::RF, Organ::Bladder, b, hp, 3));
  CHECK(fa != training_fingerprint(AlgorithmId::RF, Organ::Rectum, a, hp, 3));
}

TEST_CASE("fold assignment is balanced and seeded") {
  const auto f = fold_assignment(23, 5, 9);
  std::vector<int> counts(5, 0);
  for (const int k : f) counts[static_cast<std::size_t>(k)]++;
  CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
  CHECK(f == fold_assignment(23, 5, 9));
  CHECK(f != fold_assignment(23, 5, 10));
  CHECK_THROWS_AS(fold_assignment(3, 5, 1), Error);
}

TEST_CASE("grid search scores every candidate and keeps the best") {
  const auto cohort = testing::small_cohort(20);
  const std::vector<Hyperparams> grid = {{{"max_depth", 1}}, {{"max_depth", 3}}};
  const auto r = grid_search_cv(AlgorithmId::DT, Organ::Rectum, cohort, grid, 4, 1);
  REQUIRE(r.scores.size() == 2);
  const auto best = std::min_element(r.scores.begin(), r.scores.end()) - r.scores.begin();
  CHECK(r.best.at("max_depth") == grid[static_cast<std::size_t>(best)].at("max_depth"));
}
