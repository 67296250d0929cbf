#include "doctest.h"

#include <cmath>

#include "dvhkit/error.hpp"
#include "dvhkit/models.hpp"
#include "dvhkit/rng.hpp"

using namespace dvhkit;

namespace {

Matrix grid_matrix(Rng& rng, std::size_t n, std::size_t p) {
  Matrix X(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) X(i, j) = rng.uniform(-1, 1);
  return X;
}

double mse(auto&& model, const Matrix& X, std::span<const double> y) {
  double s = 0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const double e = model.predict(X.row(i)) - y[i];
    s += e * e;
  }
  return s / static_cast<double>(X.rows());
}

}  // namespace

TEST_CASE("standardizer uses the n-1 deviation and rejects constant columns") {
  Matrix X(3, 2);
  X(0, 0) = 1, X(1, 0) = 2, X(2, 0) = 3;
  X(0, 1) = 5, X(1, 1) = 5, X(2, 1) = 6;
  const auto s = Standardizer::fit(X);
  CHECK(s.mean[0] == 2.0);
  CHECK(s.stddev[0] == 1.0);
  CHECK(s.transform(std::vector<double>{3, 5})[0] == 1.0);
  X(2, 1) = 5;
  CHECK_THROWS_AS(Standardizer::fit(X), Error);
}

TEST_CASE("OLS recovers a noiseless plane") {
  Rng rng(2);
  const auto X = grid_matrix(rng, 20, 3);
  std::vector<double> y(20);
  for (std::size_t i = 0; i < 20; ++i) y[i] = 4 - 2 * X(i, 0) + 0.5 * X(i, 2);
  const auto m = fit_ols(X, y);
  CHECK(m.intercept == doctest::Approx(4).epsilon(1e-12));
  CHECK(m.weights[0] == doctest::Approx(-2).epsilon(1e-12));
  CHECK(std::abs(m.weights[1]) < 1e-12);
}

TEST_CASE("elastic net shrinks towards zero as lambda grows") {
  Rng rng(3);
  const auto X = grid_matrix(rng, 50, 4);
  std::vector<double> y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = 1 + 3 * X(i, 0) - X(i, 1) + 0.05 * rng.normal();
  double prev = 1e300;
  for (const double lambda : {0.0, 0.01, 0.1, 1.0}) {
    ElasticNetParams p;
    p.lambda = lambda;
    p.tol = 1e-10;
    const auto m = fit_elastic_net(X, y, p);
    double l1 = 0;
    for (const double w : m.weights) l1 += std::abs(w);
    CHECK(l1 <= prev + 1e-12);
    prev = l1;
    // the fit should not lose to the all-zero model on its own objective
    LinearModel zero{std::vector<double>(4, 0.0), 0.0};
    double mean = 0;
    for (const double v : y) mean += v / 50.0;
    zero.intercept = mean;
    CHECK(elastic_net_objective(X, y, m, p) <= elastic_net_objective(X, y, zero, p) + 1e-12);
  }
}

TEST_CASE("pure lasso zeroes an irrelevant feature") {
  Rng rng(4);
  const auto X = grid_matrix(rng, 60, 3);
  std::vector<double> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = 2 * X(i, 0);
  ElasticNetParams p;
  p.l1_ratio = 1.0;
  p.lambda = 0.05;
  const auto m = fit_elastic_net(X, y, p);
  CHECK(m.weights[1] == 0.0);
  CHECK(m.weights[2] == 0.0);
  CHECK(m.weights[0] > 1.5);
}

TEST_CASE("CART splits a step at the midpoint") {
  Matrix X(6, 1);
  const std::vector<double> xs = {1, 2, 3, 7, 8, 9};
  std::vector<double> y = {0, 0, 0, 10, 10, 10};
  for (std::size_t i = 0; i < 6; ++i) X(i, 0) = xs[i];
  const auto t = fit_cart(X, y, TreeParams{2, 1, 0});
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].threshold == 5.0);
  CHECK(t.predict(std::vector<double>{4.9}) == 0.0);
  CHECK(t.predict(std::vector<double>{5.1}) == 10.0);
  CHECK(t.depth() == 1);
}

TEST_CASE("CART respects min_leaf and max_depth") {
  Rng rng(5);
  const auto X = grid_matrix(rng, 40, 2);
  std::vector<double> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = X(i, 0) * X(i, 1);
  const auto t = fit_cart(X, y, TreeParams{3, 5, 0});
  CHECK(t.depth() <= 3);
  for (const auto& n : t.nodes) {
    if (n.feature < 0) continue;
    CHECK(n.left > 0);
    CHECK(n.right > 0);
  }
}

TEST_CASE("random forest is deterministic per seed") {
  Rng rng(6);
  const auto X = grid_matrix(rng, 30, 6);
  std::vector<double> y(30);
  for (std::size_t i = 0; i < 30; ++i) y[i] = X(i, 0) + X(i, 3);
  ForestParams p;
  p.n_trees = 10;
  const auto a = fit_random_forest(X, y, p, 77);
  const auto b = fit_random_forest(X, y, p, 77);
  const auto c = fit_random_forest(X, y, p, 78);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.trees.size() == 10);
}

TEST_CASE("boosting reduces training error stage by stage") {
  Rng rng(7);
  const auto X = grid_matrix(rng, 40, 2);
  std::vector<double> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = std::sin(3 * X(i, 0)) + X(i, 1);
  double prev = 1e300;
  for (const int stages : {0, 5, 20, 60}) {
    BoostParams p;
    p.n_stages = stages;
    const auto m = fit_gbr(X, y, p);
    const double e = mse(m, X, y);
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("MLP learns a smooth function and is seed-deterministic") {
  Rng rng(8);
  const auto X = grid_matrix(rng, 40, 2);
  std::vector<double> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = 10 + 5 * std::tanh(X(i, 0) - X(i, 1));
  MlpParams p;
  p.hidden = {8};
  p.epochs = 1500;
  const auto m = fit_mlp(X, y, p, 9);
  CHECK(mse(m, X, y) < 0.05);
  CHECK(m == fit_mlp(X, y, p, 9));
  CHECK(m.parameter_count() == 8 * 2 + 8 + 8 + 1);
}

TEST_CASE("MLP parameters round-trip") {
  auto m = init_mlp(3, {4, 2}, 1);
  auto theta = m.parameters();
  for (auto& t : theta) t *= 2;
  m.set_parameters(theta);
  CHECK(m.parameters() == theta);
  CHECK_THROWS_AS(m.set_parameters(std::vector<double>(3)), Error);
}
