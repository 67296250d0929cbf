#pragma once

// Single-output regressors used for each dose bin.

#include <cstdint>
#include <span>
#include <vector>

#include "dvhkit/matrix.hpp"

namespace dvhkit {

/// Per-column mean and sample standard deviation (n - 1).
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  /// Throws ConstantFeature(index) for a zero-variance column.
  static Standardizer fit(const Matrix& X);

  std::vector<double> transform(std::span<const double> x) const;
  Matrix transform(const Matrix& X) const;

  bool operator==(const Standardizer&) const = default;
};

struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;

  double predict(std::span<const double> x) const noexcept;
  bool operator==(const LinearModel&) const = default;
};

/// Least squares via the normal equations (Cholesky), with a 1e-10 ridge
/// jitter retry when the Gram matrix is not positive definite.
LinearModel fit_ols(const Matrix& X, std::span<const double> y);

struct ElasticNetParams {
  double l1_ratio = 0.5;
  double lambda = 0.01;
  double tol = 1e-6;
  int max_iter = 10000;
};

/// (1/2n)·||y - b - Xw||² + lambda·(l1_ratio·|w|₁ + (1 - l1_ratio)/2·|w|²)
double elastic_net_objective(const Matrix& X, std::span<const double> y, const LinearModel& model,
                             const ElasticNetParams& params);

/// Cyclic coordinate descent; converged when the largest coefficient change
/// in a sweep is below tol.
LinearModel fit_elastic_net(const Matrix& X, std::span<const double> y, const ElasticNetParams& params);

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const noexcept;
  std::size_t depth() const;
  bool operator==(const RegressionTree&) const = default;
};

struct TreeParams {
  int max_depth = 3;
  int min_leaf = 1;
  /// Features tried per split; 0 means all.
  int max_features = 0;
};

/// Greedy CART on squared error. Ties go to the lowest feature index, then
/// the lowest threshold.
RegressionTree fit_cart(const Matrix& X, std::span<const double> y, const TreeParams& params);

struct ForestParams {
  int n_trees = 50;
  int max_depth = 5;
  int min_leaf = 1;
  /// Features tried per split; 0 means ceil(p / 3).
  int max_features = 0;
  bool bootstrap = true;
};

struct RandomForest {
  std::vector<RegressionTree> trees;

  double predict(std::span<const double> x) const noexcept;
  bool operator==(const RandomForest&) const = default;
};

RandomForest fit_random_forest(const Matrix& X, std::span<const double> y, const ForestParams& params,
                               std::uint64_t seed);

struct BoostParams {
  int n_stages = 50;
  double learning_rate = 0.1;
  int max_depth = 3;
  int min_leaf = 1;
};

struct BoostedTrees {
  double base = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> stages;

  double predict(std::span<const double> x) const noexcept;
  bool operator==(const BoostedTrees&) const = default;
};

/// Least-squares boosting: F0 = mean(y), F_m = F_{m-1} + eta·tree fitted to residuals.
BoostedTrees fit_gbr(const Matrix& X, std::span<const double> y, const BoostParams& params);

struct DenseLayer {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::vector<double> weights;  // n_out x n_in, row-major
  std::vector<double> bias;     // n_out

  bool operator==(const DenseLayer&) const = default;
};

struct MlpParams {
  std::vector<int> hidden{16};
  int epochs = 1500;
  double learning_rate = 0.1;
  /// Train on (y - mean) / stddev and undo the scaling at prediction time.
  bool scale_target = true;
};

/// tanh hidden layers, linear output.
struct Mlp {
  std::vector<DenseLayer> layers;
  double y_mean = 0.0;
  double y_scale = 1.0;

  /// Network output before target unscaling.
  double forward(std::span<const double> x) const;
  double predict(std::span<const double> x) const { return y_mean + y_scale * forward(x); }

  std::size_t parameter_count() const noexcept;
  /// Weights then biases, layer by layer.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  bool operator==(const Mlp&) const = default;
};

/// Xavier-uniform initialisation from `seed`.
Mlp init_mlp(std::size_t n_inputs, const std::vector<int>& hidden, std::uint64_t seed);

/// Mean squared error of forward() against `t` and its gradient with respect
/// to parameters(), by backpropagation.
double mlp_loss_and_gradient(const Mlp& net, const Matrix& X, std::span<const double> t, std::vector<double>* grad);

/// Full-batch gradient descent on mean squared error.
Mlp fit_mlp(const Matrix& X, std::span<const double> y, const MlpParams& params, std::uint64_t seed);

}  // namespace dvhkit
