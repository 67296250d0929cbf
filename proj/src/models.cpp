#include "dvhkit/models.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dvhkit/error.hpp"
#include "dvhkit/rng.hpp"

namespace dvhkit {

namespace {

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void require_samples(const Matrix& X, std::span<const double> y) {
  if (X.rows() == 0 || y.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training samples");
  if (X.rows() != y.size()) {
    throw Error(ErrorCode::MismatchedLengths,
                std::to_string(X.rows()) + " rows vs " + std::to_string(y.size()) + " targets");
  }
}

}  // namespace

Standardizer Standardizer::fit(const Matrix& X) {
  if (X.rows() < 2) throw Error(ErrorCode::EmptyTrainingSet, "standardizer needs at least two samples");
  Standardizer s;
  s.mean.resize(X.cols());
  s.stddev.resize(X.cols());
  const double n = static_cast<double>(X.rows());
  for (std::size_t c = 0; c < X.cols(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < X.rows(); ++r) sum += X(r, c);
    const double m = sum / n;
    double ss = 0.0;
    for (std::size_t r = 0; r < X.rows(); ++r) ss += (X(r, c) - m) * (X(r, c) - m);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) {
      throw Error(ErrorCode::ConstantFeature, "feature " + std::to_string(c) + " is constant");
    }
    s.mean[c] = m;
    s.stddev[c] = sd;
  }
  return s;
}

std::vector<double> Standardizer::transform(std::span<const double> x) const {
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = (x[c] - mean[c]) / stddev[c];
  return out;
}

Matrix Standardizer::transform(const Matrix& X) const {
  Matrix out(X.rows(), X.cols());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (std::size_t c = 0; c < X.cols(); ++c) out(r, c) = (X(r, c) - mean[c]) / stddev[c];
  }
  return out;
}

double LinearModel::predict(std::span<const double> x) const noexcept {
  double acc = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) acc += weights[j] * x[j];
  return acc;
}

LinearModel fit_ols(const Matrix& X, std::span<const double> y) {
  require_samples(X, y);
  const std::size_t n = X.rows();
  const std::size_t p = X.cols();
  if (n <= p) throw Error(ErrorCode::SingularSystem, "need more samples than features");

  // Gram matrix of [1 | X].
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p + 1, p + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p + 1);
  std::vector<double> a(p + 1);
  for (std::size_t r = 0; r < n; ++r) {
    a[0] = 1.0;
    for (std::size_t c = 0; c < p; ++c) a[c + 1] = X(r, c);
    for (std::size_t i = 0; i <= p; ++i) {
      rhs(i) += a[i] * y[r];
      for (std::size_t j = 0; j <= p; ++j) gram(i, j) += a[i] * a[j];
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    gram.diagonal().array() += 1e-10;
    llt.compute(gram);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "normal equations not solvable");
  }
  const Eigen::VectorXd beta = llt.solve(rhs);
  if (!beta.allFinite()) throw Error(ErrorCode::SingularSystem, "non-finite least-squares solution");

  LinearModel m;
  m.intercept = beta(0);
  m.weights.resize(p);
  for (std::size_t c = 0; c < p; ++c) m.weights[c] = beta(c + 1);
  return m;
}

double elastic_net_objective(const Matrix& X, std::span<const double> y, const LinearModel& model,
                             const ElasticNetParams& params) {
  double rss = 0.0;
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const double e = y[r] - model.predict(X.row(r));
    rss += e * e;
  }
  double l1 = 0.0, l2 = 0.0;
  for (const double w : model.weights) {
    l1 += std::abs(w);
    l2 += w * w;
  }
  return rss / (2.0 * static_cast<double>(X.rows())) +
         params.lambda * (params.l1_ratio * l1 + 0.5 * (1.0 - params.l1_ratio) * l2);
}

LinearModel fit_elastic_net(const Matrix& X, std::span<const double> y, const ElasticNetParams& params) {
  require_samples(X, y);
  if (!(params.l1_ratio >= 0.0 && params.l1_ratio <= 1.0) || !(params.lambda >= 0.0) || !(params.tol > 0.0) ||
      params.max_iter < 1) {
    throw Error(ErrorCode::InvalidHyperparams, "elastic net needs l1_ratio in [0,1], lambda >= 0, tol > 0");
  }
  const std::size_t n = X.rows();
  const std::size_t p = X.cols();
  const double nd = static_cast<double>(n);

  // Centre columns and target; the intercept is recovered afterwards.
  std::vector<double> x_mean(p, 0.0);
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t r = 0; r < n; ++r) x_mean[c] += X(r, c);
    x_mean[c] /= nd;
  }
  const double y_mean = mean_of(y);
  std::vector<std::vector<double>> xc(p, std::vector<double>(n));
  std::vector<double> z(p, 0.0);
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      xc[c][r] = X(r, c) - x_mean[c];
      z[c] += xc[c][r] * xc[c][r];
    }
    z[c] /= nd;
  }
  std::vector<double> resid(n);
  for (std::size_t r = 0; r < n; ++r) resid[r] = y[r] - y_mean;

  const double l1 = params.lambda * params.l1_ratio;
  const double l2 = params.lambda * (1.0 - params.l1_ratio);
  std::vector<double> w(p, 0.0);
  bool converged = false;
  for (int iter = 0; iter < params.max_iter && !converged; ++iter) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (z[j] == 0.0) continue;
      double rho = 0.0;
      for (std::size_t r = 0; r < n; ++r) rho += xc[j][r] * (resid[r] + xc[j][r] * w[j]);
      rho /= nd;
      const double shrunk = std::copysign(std::max(std::abs(rho) - l1, 0.0), rho);
      const double updated = shrunk / (z[j] + l2);
      const double delta = updated - w[j];
      if (delta != 0.0) {
        for (std::size_t r = 0; r < n; ++r) resid[r] -= delta * xc[j][r];
        w[j] = updated;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    converged = max_change < params.tol;
  }
  if (!converged) {
    throw Error(ErrorCode::NotConverged, "elastic net did not converge in " + std::to_string(params.max_iter) +
                                             " sweeps");
  }

  LinearModel m;
  m.weights = std::move(w);
  m.intercept = y_mean;
  for (std::size_t c = 0; c < p; ++c) m.intercept -= x_mean[c] * m.weights[c];
  return m;
}

double RegressionTree::predict(std::span<const double> x) const noexcept {
  std::int32_t i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& node = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

std::size_t RegressionTree::depth() const {
  std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    const auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const auto& node = nodes[static_cast<std::size_t>(i)];
    if (node.feature >= 0) {
      stack.push_back({node.left, d + 1});
      stack.push_back({node.right, d + 1});
    }
  }
  return deepest;
}

namespace {

class CartBuilder {
 public:
  CartBuilder(const Matrix& X, std::span<const double> y, const TreeParams& params, Rng* rng)
      : X_(X), y_(y), params_(params), rng_(rng) {
    const auto p = static_cast<int>(X.cols());
    mtry_ = params.max_features <= 0 ? p : std::min(params.max_features, p);
  }

  RegressionTree build(std::vector<std::size_t> index) {
    tree_.nodes.clear();
    grow(index, 0);
    return std::move(tree_);
  }

 private:
  std::int32_t grow(std::vector<std::size_t>& index, int depth) {
    const auto node_id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    const double n = static_cast<double>(index.size());
    double sum = 0.0;
    for (const auto i : index) sum += y_[i];
    const double mean = sum / n;
    double sse = 0.0;
    for (const auto i : index) sse += (y_[i] - mean) * (y_[i] - mean);
    tree_.nodes[static_cast<std::size_t>(node_id)].value = mean;

    const auto min_leaf = static_cast<std::size_t>(std::max(1, params_.min_leaf));
    if (depth >= params_.max_depth || index.size() < 2 * min_leaf || sse <= 0.0) return node_id;

    std::vector<std::size_t> features(X_.cols());
    std::iota(features.begin(), features.end(), 0);
    if (rng_ != nullptr && mtry_ < static_cast<int>(features.size())) {
      for (int k = 0; k < mtry_; ++k) {
        const auto pick = static_cast<std::size_t>(k) + rng_->index(features.size() - static_cast<std::size_t>(k));
        std::swap(features[static_cast<std::size_t>(k)], features[pick]);
      }
      features.resize(static_cast<std::size_t>(mtry_));
      std::sort(features.begin(), features.end());
    }

    double best_sse = sse;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order(index);
    std::vector<double> prefix(index.size() + 1), prefix_sq(index.size() + 1);
    for (const auto f : features) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return X_(a, f) < X_(b, f); });
      prefix[0] = prefix_sq[0] = 0.0;
      for (std::size_t k = 0; k < order.size(); ++k) {
        const double d = y_[order[k]] - mean;
        prefix[k + 1] = prefix[k] + d;
        prefix_sq[k + 1] = prefix_sq[k] + d * d;
      }
      for (std::size_t k = min_leaf; k + min_leaf <= order.size(); ++k) {
        const double lo = X_(order[k - 1], f);
        const double hi = X_(order[k], f);
        if (!(lo < hi)) continue;
        const double nl = static_cast<double>(k);
        const double nr = n - nl;
        const double sl = prefix[k], sr = prefix[order.size()] - prefix[k];
        const double split_sse =
            (prefix_sq[k] - sl * sl / nl) + (prefix_sq[order.size()] - prefix_sq[k] - sr * sr / nr);
        if (split_sse < best_sse) {
          best_sse = split_sse;
          best_feature = static_cast<int>(f);
          double mid = 0.5 * (lo + hi);
          if (!(mid < hi)) mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0 || !(best_sse < sse - 1e-12 * (1.0 + sse))) return node_id;

    std::vector<std::size_t> left, right;
    for (const auto i : index) {
      (X_(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left : right).push_back(i);
    }
    index.clear();
    index.shrink_to_fit();
    const auto l = grow(left, depth + 1);
    const auto r = grow(right, depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(node_id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return node_id;
  }

  const Matrix& X_;
  std::span<const double> y_;
  TreeParams params_;
  Rng* rng_;
  int mtry_ = 0;
  RegressionTree tree_;
};

void check_tree_params(int max_depth, int min_leaf) {
  if (max_depth < 0 || min_leaf < 1) {
    throw Error(ErrorCode::InvalidHyperparams, "tree needs max_depth >= 0 and min_leaf >= 1");
  }
}

}  // namespace

RegressionTree fit_cart(const Matrix& X, std::span<const double> y, const TreeParams& params) {
  require_samples(X, y);
  check_tree_params(params.max_depth, params.min_leaf);
  std::vector<std::size_t> index(X.rows());
  std::iota(index.begin(), index.end(), 0);
  Rng rng(0);
  CartBuilder builder(X, y, params, params.max_features > 0 ? &rng : nullptr);
  return builder.build(std::move(index));
}

double RandomForest::predict(std::span<const double> x) const noexcept {
  double acc = 0.0;
  for (const auto& t : trees) acc += t.predict(x);
  return acc / static_cast<double>(trees.size());
}

RandomForest fit_random_forest(const Matrix& X, std::span<const double> y, const ForestParams& params,
                               std::uint64_t seed) {
  require_samples(X, y);
  check_tree_params(params.max_depth, params.min_leaf);
  if (params.n_trees < 1) throw Error(ErrorCode::InvalidHyperparams, "forest needs n_trees >= 1");
  const auto p = static_cast<int>(X.cols());
  TreeParams tp{params.max_depth, params.min_leaf, params.max_features > 0 ? params.max_features : (p + 2) / 3};

  RandomForest forest;
  forest.trees.reserve(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> index(X.rows());
    if (params.bootstrap) {
      for (auto& i : index) i = static_cast<std::size_t>(rng.index(X.rows()));
    } else {
      std::iota(index.begin(), index.end(), 0);
    }
    CartBuilder builder(X, y, tp, tp.max_features < p ? &rng : nullptr);
    forest.trees.push_back(builder.build(std::move(index)));
  }
  return forest;
}

double BoostedTrees::predict(std::span<const double> x) const noexcept {
  double acc = base;
  for (const auto& t : stages) acc += learning_rate * t.predict(x);
  return acc;
}

BoostedTrees fit_gbr(const Matrix& X, std::span<const double> y, const BoostParams& params) {
  require_samples(X, y);
  check_tree_params(params.max_depth, params.min_leaf);
  if (params.n_stages < 0 || !(params.learning_rate >= 0.0 && params.learning_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidHyperparams, "boosting needs n_stages >= 0 and learning_rate in [0, 1]");
  }
  BoostedTrees model;
  model.base = mean_of(y);
  model.learning_rate = params.learning_rate;
  if (params.learning_rate == 0.0) return model;

  std::vector<double> fitted(y.size(), model.base);
  std::vector<double> resid(y.size());
  const TreeParams tp{params.max_depth, params.min_leaf, 0};
  for (int m = 0; m < params.n_stages; ++m) {
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - fitted[i];
    auto tree = fit_cart(X, resid, tp);
    for (std::size_t i = 0; i < y.size(); ++i) fitted[i] += params.learning_rate * tree.predict(X.row(i));
    model.stages.push_back(std::move(tree));
  }
  return model;
}

double Mlp::forward(std::span<const double> x) const {
  std::vector<double> act(x.begin(), x.end()), next;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    next.assign(layer.n_out, 0.0);
    for (std::size_t o = 0; o < layer.n_out; ++o) {
      double z = layer.bias[o];
      for (std::size_t i = 0; i < layer.n_in; ++i) z += layer.weights[o * layer.n_in + i] * act[i];
      next[o] = l + 1 < layers.size() ? std::tanh(z) : z;
    }
    act.swap(next);
  }
  return act.front();
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw Error(ErrorCode::MismatchedLengths, "parameter vector size");
  std::size_t k = 0;
  for (auto& l : layers) {
    for (auto& w : l.weights) w = flat[k++];
    for (auto& b : l.bias) b = flat[k++];
  }
}

Mlp init_mlp(std::size_t n_inputs, const std::vector<int>& hidden, std::uint64_t seed) {
  if (hidden.empty()) throw Error(ErrorCode::InvalidHyperparams, "MLP needs at least one hidden layer");
  Rng rng(seed);
  Mlp net;
  std::size_t fan_in = n_inputs;
  auto add_layer = [&](std::size_t fan_out) {
    DenseLayer layer;
    layer.n_in = fan_in;
    layer.n_out = fan_out;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    layer.weights.resize(fan_in * fan_out);
    for (auto& w : layer.weights) w = rng.uniform(-limit, limit);
    layer.bias.assign(fan_out, 0.0);
    net.layers.push_back(std::move(layer));
    fan_in = fan_out;
  };
  for (const int width : hidden) {
    if (width < 1) throw Error(ErrorCode::InvalidHyperparams, "MLP layer widths must be >= 1");
    add_layer(static_cast<std::size_t>(width));
  }
  add_layer(1);
  return net;
}

double mlp_loss_and_gradient(const Mlp& net, const Matrix& X, std::span<const double> t, std::vector<double>* grad) {
  const std::size_t n = X.rows();
  const std::size_t L = net.layers.size();
  std::vector<std::vector<double>> dW(L), db(L);
  if (grad != nullptr) {
    for (std::size_t l = 0; l < L; ++l) {
      dW[l].assign(net.layers[l].weights.size(), 0.0);
      db[l].assign(net.layers[l].bias.size(), 0.0);
    }
  }
  std::vector<std::vector<double>> acts(L + 1);
  std::vector<double> delta, prev_delta;
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = X.row(s);
    acts[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = net.layers[l];
      acts[l + 1].assign(layer.n_out, 0.0);
      for (std::size_t o = 0; o < layer.n_out; ++o) {
        double z = layer.bias[o];
        for (std::size_t i = 0; i < layer.n_in; ++i) z += layer.weights[o * layer.n_in + i] * acts[l][i];
        acts[l + 1][o] = l + 1 < L ? std::tanh(z) : z;
      }
    }
    const double err = acts[L][0] - t[s];
    loss += err * err;
    if (grad == nullptr) continue;

    delta.assign(1, 2.0 * err / static_cast<double>(n));
    for (std::size_t l = L; l-- > 0;) {
      const auto& layer = net.layers[l];
      for (std::size_t o = 0; o < layer.n_out; ++o) {
        db[l][o] += delta[o];
        for (std::size_t i = 0; i < layer.n_in; ++i) dW[l][o * layer.n_in + i] += delta[o] * acts[l][i];
      }
      if (l == 0) break;
      prev_delta.assign(layer.n_in, 0.0);
      for (std::size_t i = 0; i < layer.n_in; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < layer.n_out; ++o) acc += layer.weights[o * layer.n_in + i] * delta[o];
        const double a = acts[l][i];
        prev_delta[i] = acc * (1.0 - a * a);
      }
      delta.swap(prev_delta);
    }
  }
  if (grad != nullptr) {
    grad->clear();
    for (std::size_t l = 0; l < L; ++l) {
      grad->insert(grad->end(), dW[l].begin(), dW[l].end());
      grad->insert(grad->end(), db[l].begin(), db[l].end());
    }
  }
  return loss / static_cast<double>(n);
}

Mlp fit_mlp(const Matrix& X, std::span<const double> y, const MlpParams& params, std::uint64_t seed) {
  require_samples(X, y);
  if (params.epochs < 0 || !(params.learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidHyperparams, "MLP needs epochs >= 0 and learning_rate > 0");
  }
  Mlp net = init_mlp(X.cols(), params.hidden, seed);
  std::vector<double> t(y.begin(), y.end());
  if (params.scale_target) {
    net.y_mean = mean_of(y);
    double ss = 0.0;
    for (const double v : y) ss += (v - net.y_mean) * (v - net.y_mean);
    net.y_scale = y.size() > 1 ? std::sqrt(ss / static_cast<double>(y.size() - 1)) : 0.0;
    // A constant target leaves nothing to learn: predict() returns the mean.
    if (net.y_scale == 0.0) return net;
    for (auto& v : t) v = (v - net.y_mean) / net.y_scale;
  }

  auto theta = net.parameters();
  std::vector<double> grad;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const double loss = mlp_loss_and_gradient(net, X, t, &grad);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::DivergedLoss, "MLP loss became non-finite at epoch " + std::to_string(epoch));
    }
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= params.learning_rate * grad[k];
    net.set_parameters(theta);
  }
  if (!std::isfinite(mlp_loss_and_gradient(net, X, t, nullptr))) {
    throw Error(ErrorCode::DivergedLoss, "MLP loss became non-finite");
  }
  return net;
}

}  // namespace dvhkit
