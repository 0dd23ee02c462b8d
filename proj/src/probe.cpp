#include "x3d/probe.hpp"

#include "x3d/error.hpp"
#include "x3d/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace x3d::probe {

std::string_view to_string(ProbeTask task) {
  switch (task) {
    case ProbeTask::RelativeCoordinateBins: return "relative_coordinate_bins";
    case ProbeTask::NormalRegression: return "normal_regression";
    case ProbeTask::GeodesicRegression: return "geodesic_regression";
  }
  return "?";
}

ProbeTask parse_task(std::string_view name) {
  if (name == "relative_coordinate_bins" || name == "bins") return ProbeTask::RelativeCoordinateBins;
  if (name == "normal_regression" || name == "normal") return ProbeTask::NormalRegression;
  if (name == "geodesic_regression" || name == "geodesic") return ProbeTask::GeodesicRegression;
  throw ConfigError("unknown probe task '" + std::string(name) + "'");
}

Matrix pair_inputs(const Matrix& center_features, const Matrix& point_features, const NeighborhoodIndex& nbr) {
  if (center_features.rows() != nbr.regions()) throw ShapeError("pair_inputs: one center row per region");
  Index rows = 0;
  for (Index i = 0; i < nbr.regions(); ++i) rows += nbr.valid(i);
  Matrix out(rows, center_features.cols() + point_features.cols());
  Index r = 0;
  for (Index i = 0; i < nbr.regions(); ++i)
    for (Index j = 0; j < nbr.valid(i); ++j, ++r) {
      out.row(r).head(center_features.cols()) = center_features.row(i);
      out.row(r).tail(point_features.cols()) = point_features.row(nbr.neighbor(i, j));
    }
  return out;
}

Index bin_of(double v, double lo, double hi, Index bins) {
  if (!(hi > lo)) return 0;
  const auto b = static_cast<Index>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
  return std::clamp<Index>(b, 0, bins - 1);
}

namespace {

struct Split {
  std::vector<Index> train, test;
};

Split split_rows(Index n, double test_fraction, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  if (s.train.empty() || s.test.empty()) throw SizeError("probe: too few samples for a train/test split");
  return s;
}

Matrix take_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = x.row(rows[r]);
  return out;
}

/// Standardize columns with train statistics; constant columns pass through centered.
void standardize_inputs(Matrix& train, Matrix& test) {
  const Eigen::RowVectorXd mean = train.colwise().mean();
  Eigen::RowVectorXd sd = ((train.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Index c = 0; c < sd.size(); ++c)
    if (!(sd[c] > 1e-12)) sd[c] = 1.0;
  train = ((train.rowwise() - mean).array().rowwise() / sd.array()).matrix();
  test = ((test.rowwise() - mean).array().rowwise() / sd.array()).matrix();
}

enum class Loss { CrossEntropy, Mse };

/// Minibatch SGD on a 2-layer MLP; returns the trained parameters.
nn::ParamStore fit(const nn::Mlp& mlp, const Matrix& x, const std::vector<int>* labels, const Matrix* y,
                   const ProbeOptions& opt, std::uint64_t seed) {
  nn::ParamStore params;
  mlp.register_params(params);
  std::mt19937_64 rng(seed);
  mlp.init_params(params, rng);
  nn::SgdState state;
  std::vector<Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index batch = std::max<Index>(1, opt.batch);
  for (Index epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < x.rows(); start += batch) {
      const Index end = std::min<Index>(x.rows(), start + batch);
      std::vector<Index> rows(order.begin() + start, order.begin() + end);
      nn::Tape tape(&params);
      const nn::Var out = mlp.forward(tape, tape.constant(take_rows(x, rows)));
      nn::Var loss;
      if (labels) {
        std::vector<int> yb(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) yb[r] = (*labels)[rows[r]];
        loss = nn::cross_entropy(tape, out, yb);
      } else {
        const nn::Var d = nn::sub(tape, out, tape.constant(take_rows(*y, rows)));
        loss = nn::scale(tape, nn::sum_all(tape, nn::mul(tape, d, d)),
                         1.0 / static_cast<double>(rows.size() * y->cols()));
      }
      const auto grads = tape.backward(loss, Matrix::Ones(1, 1));
      nn::sgd_step(params, grads.params, opt.lr, opt.momentum, state);
    }
  }
  return params;
}

}  // namespace

ProbeResult probe_geometry(const Matrix& inputs, const Matrix& targets, ProbeTask task, const ProbeOptions& opt) {
  if (inputs.rows() != targets.rows()) throw ShapeError("probe: inputs and targets need the same row count");
  if (opt.bins < 2 && task == ProbeTask::RelativeCoordinateBins) throw ConfigError("probe: bins must be >= 2");
  ProbeResult res;
  res.task = task;
  const Split split = split_rows(inputs.rows(), opt.test_fraction, opt.seed);
  Matrix xtr = take_rows(inputs, split.train), xte = take_rows(inputs, split.test);
  standardize_inputs(xtr, xte);
  res.train_count = xtr.rows();
  res.test_count = xte.rows();
  const Index d = inputs.cols();

  if (task == ProbeTask::RelativeCoordinateBins) {
    if (targets.cols() != 3) throw ShapeError("probe: bin targets are 3-D offsets");
    std::uint64_t sub = opt.seed * 0x9E3779B97F4A7C15ull + 1;
    for (int axis = 0; axis < 3; ++axis) {
      const double lo = targets.col(axis).minCoeff(), hi = targets.col(axis).maxCoeff();
      if (!(hi > lo)) {
        res.skipped_axes.push_back(axis);
        continue;
      }
      std::vector<int> ytr(split.train.size()), yte(split.test.size());
      for (std::size_t r = 0; r < ytr.size(); ++r)
        ytr[r] = static_cast<int>(bin_of(targets(split.train[r], axis), lo, hi, opt.bins));
      for (std::size_t r = 0; r < yte.size(); ++r)
        yte[r] = static_cast<int>(bin_of(targets(split.test[r], axis), lo, hi, opt.bins));
      const nn::Mlp mlp("probe" + std::to_string(axis), nn::LayerSpec::chain({d, opt.hidden, opt.bins}));
      const auto params = fit(mlp, xtr, &ytr, nullptr, opt, sub++);
      const Matrix logits = nn::mlp_forward(mlp, params, xte);
      Index hit = 0;
      for (Index r = 0; r < logits.rows(); ++r) {
        Index arg = 0;
        logits.row(r).maxCoeff(&arg);
        hit += arg == yte[r];
      }
      res.axis_scores.push_back(static_cast<double>(hit) / static_cast<double>(logits.rows()));
    }
    if (res.axis_scores.empty()) throw SizeError("probe: every axis is constant");
    res.score = std::accumulate(res.axis_scores.begin(), res.axis_scores.end(), 0.0) /
                static_cast<double>(res.axis_scores.size());
    return res;
  }

  const Index out_dim = task == ProbeTask::NormalRegression ? 3 : 1;
  if (targets.cols() != out_dim) throw ShapeError("probe: regression target width");
  const Matrix ytr = take_rows(targets, split.train), yte = take_rows(targets, split.test);
  const nn::Mlp mlp("probe", nn::LayerSpec::chain({d, opt.hidden, out_dim}));
  const auto params = fit(mlp, xtr, nullptr, &ytr, opt, opt.seed * 0x9E3779B97F4A7C15ull + 11);
  const Matrix pred = nn::mlp_forward(mlp, params, xte);
  res.score = (pred - yte).squaredNorm() / static_cast<double>(yte.size());
  return res;
}

}  // namespace x3d::probe
