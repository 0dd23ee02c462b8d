#include "x3d/harness/train.hpp"

#include "x3d/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

namespace x3d::harness {

namespace {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; fn writes only slot i.
template <class Fn>
void parallel_for(Index n, int jobs, Fn&& fn) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (Index i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int argmax_row(const Matrix& logits) {
  Index arg = 0;
  logits.row(0).maxCoeff(&arg);
  return static_cast<int>(arg);
}

}  // namespace

double learning_rate(const TrainSpec& spec, Index step, Index total) {
  if (!spec.cosine || total <= 1) return spec.lr;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return 0.5 * spec.lr * (1.0 + std::cos(std::numbers::pi * t));
}

std::vector<SampleGeometry> build_geometry(const Dataset& data, const ModelSpec& spec, int jobs) {
  std::vector<SampleGeometry> out(data.samples.size());
  parallel_for(data.size(), jobs, [&](Index i) {
    out[i] = make_geometry(data.samples[i].cloud.coords, spec.centers, spec.k);
  });
  return out;
}

TrainResult train(const Classifier& model, const Dataset& data, const std::vector<SampleGeometry>& geometry,
                  const TrainSpec& spec) {
  if (spec.epochs < 0 || spec.batch < 1) throw ConfigError("train: epochs >= 0 and batch >= 1 required");
  if (geometry.size() != data.samples.size()) throw ShapeError("train: one geometry per sample");
  const auto start = std::chrono::steady_clock::now();
  TrainResult res;
  res.params = model.make_params(spec.seed);
  nn::SgdState state;
  std::mt19937_64 rng(spec.seed ^ 0xA5A5A5A5ull);
  std::vector<Index> order(data.samples.size());
  std::iota(order.begin(), order.end(), Index{0});
  const Index n = data.size();
  const Index steps_per_epoch = (n + spec.batch - 1) / spec.batch;
  const Index total = steps_per_epoch * spec.epochs;
  Index step = 0;
  for (Index epoch = 0; epoch < spec.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    log.lr = learning_rate(spec, step, total);
    double loss_sum = 0.0;
    for (Index b0 = 0; b0 < n; b0 += spec.batch) {
      const Index b1 = std::min(n, b0 + spec.batch);
      Vector grad = Vector::Zero(res.params.size());
      for (Index s = b0; s < b1; ++s) {
        const Index idx = order[s];
        nn::Tape tape(&res.params);
        const nn::Var logits = model.forward(tape, geometry[idx]);
        const int label = data.samples[idx].label;
        const nn::Var loss = nn::cross_entropy(tape, logits, std::span<const int>(&label, 1));
        const double lv = tape.value(loss)(0, 0);
        if (!std::isfinite(lv))
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                             std::to_string(idx));
        loss_sum += lv;
        grad += tape.backward(loss, Matrix::Ones(1, 1)).params;
      }
      grad /= static_cast<double>(b1 - b0);
      nn::sgd_step(res.params, grad, learning_rate(spec, step, total), spec.momentum, state);
      ++step;
    }
    log.loss = n > 0 ? loss_sum / static_cast<double>(n) : 0.0;
    res.epochs.push_back(log);
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

EvalResult evaluate(const Classifier& model, const nn::ParamStore& params, const Dataset& data,
                    const std::vector<SampleGeometry>& geometry, int jobs) {
  if (geometry.size() != data.samples.size()) throw ShapeError("evaluate: one geometry per sample");
  const Index n = data.size();
  std::vector<Matrix> logits(static_cast<std::size_t>(n));
  parallel_for(n, jobs, [&](Index i) { logits[i] = model.predict(params, geometry[i]); });

  EvalResult r;
  r.count = n;
  const Index classes = model.classes();
  std::vector<Index> seen(static_cast<std::size_t>(classes), 0), hit(static_cast<std::size_t>(classes), 0);
  double loss = 0.0;
  Index correct = 0;
  for (Index i = 0; i < n; ++i) {
    const int y = data.samples[i].label;
    const int pred = argmax_row(logits[i]);
    r.predictions.push_back(pred);
    const Vector p = nn::softmax(logits[i].row(0).transpose());
    loss -= std::log(std::max(p[y], 1e-300));
    ++seen[y];
    if (pred == y) {
      ++hit[y];
      ++correct;
    }
  }
  r.accuracy = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  r.loss = n > 0 ? loss / static_cast<double>(n) : 0.0;
  double macc = 0.0;
  Index present = 0;
  for (Index c = 0; c < classes; ++c) {
    const double acc = seen[c] > 0 ? static_cast<double>(hit[c]) / static_cast<double>(seen[c]) : 0.0;
    r.per_class.push_back(acc);
    if (seen[c] > 0) {
      macc += acc;
      ++present;
    }
  }
  r.mean_class_accuracy = present > 0 ? macc / static_cast<double>(present) : 0.0;
  return r;
}

metrics::GapReport gap_report(const Classifier& model, const nn::ParamStore& params,
                              const std::vector<SampleGeometry>& geometry, metrics::GapMode mode, Index max_clouds) {
  metrics::GapReport rep;
  rep.mode = mode;
  const Index n = max_clouds > 0 ? std::min<Index>(max_clouds, static_cast<Index>(geometry.size()))
                                 : static_cast<Index>(geometry.size());
  const Index layers = model.spec().blocks;
  rep.layers.assign(static_cast<std::size_t>(layers), {});
  std::vector<double> sums(static_cast<std::size_t>(layers), 0.0);
  for (Index i = 0; i < n; ++i) {
    ModelDump dump;
    model.predict(params, geometry[i], &dump);
    const Grouping& g = geometry[i].level1;
    for (Index l = 0; l < layers; ++l) {
      const auto v = metrics::gap_metric(g.coords, g.nbr, dump.block_outputs[l], mode);
      sums[l] += v.mean;
      rep.layers[l].evaluated += v.evaluated;
      rep.layers[l].skipped += v.skipped;
    }
  }
  for (Index l = 0; l < layers; ++l) rep.layers[l].mean = n > 0 ? sums[l] / static_cast<double>(n) : 0.0;
  return rep;
}

probe::ProbeResult run_probe(const Classifier& model, const nn::ParamStore& params, const Dataset& data,
                             const std::vector<SampleGeometry>& geometry, probe::ProbeTask task,
                             const ProbeSpec& spec) {
  const Index n = std::min<Index>(spec.clouds, data.size());
  std::vector<Matrix> inputs, targets;
  Index rows = 0;
  for (Index i = 0; i < n; ++i) {
    ModelDump dump;
    model.predict(params, geometry[i], &dump);
    const Grouping& g = geometry[i].level0;
    inputs.push_back(probe::pair_inputs(dump.block_outputs[0], Matrix(g.coords), g.nbr));
    Matrix t;
    const Index pairs = inputs.back().rows();
    switch (task) {
      case probe::ProbeTask::RelativeCoordinateBins:
      case probe::ProbeTask::NormalRegression: {
        t.resize(pairs, 3);
        Index r = 0;
        for (Index c = 0; c < g.regions(); ++c)
          for (Index j = 0; j < g.nbr.valid(c); ++j, ++r)
            t.row(r) = task == probe::ProbeTask::NormalRegression
                           ? Eigen::RowVector3d(data.samples[i].normals.row(geometry[i].level0_source[g.nbr.neighbor(c, j)]))
                           : Eigen::RowVector3d(g.offsets.rows.row(c * g.k() + j));
        break;
      }
      case probe::ProbeTask::GeodesicRegression: {
        // geodesics run on the full cloud, not the compacted neighborhood points
        const auto& source = geometry[i].level0_source;
        std::vector<Index> sources;
        for (Index c : g.nbr.centers) sources.push_back(source[c]);
        const auto geo = metrics::geodesic_from_sources(data.samples[i].cloud.coords, 8, sources);
        t.resize(pairs, 1);
        Index r = 0;
        for (Index c = 0; c < g.regions(); ++c)
          for (Index j = 0; j < g.nbr.valid(c); ++j, ++r) {
            const double d = geo.distances(c, source[g.nbr.neighbor(c, j)]);
            // disconnected pairs fall back to the straight-line distance
            t(r, 0) = std::isfinite(d) ? d : g.offsets.rows.row(c * g.k() + j).norm();
          }
        break;
      }
    }
    targets.push_back(std::move(t));
    rows += pairs;
  }
  if (inputs.empty()) throw SizeError("run_probe: no clouds");
  Matrix x(rows, inputs[0].cols()), y(rows, targets[0].cols());
  Index r = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    x.middleRows(r, inputs[i].rows()) = inputs[i];
    y.middleRows(r, targets[i].rows()) = targets[i];
    r += inputs[i].rows();
  }
  return probe::probe_geometry(x, y, task, spec.options);
}

std::vector<RobustnessEntry> robustness(const Classifier& model, const nn::ParamStore& params, const Dataset& test,
                                        double clean_accuracy, const std::vector<Transform>& transforms, int jobs) {
  std::vector<RobustnessEntry> out;
  for (const auto& t : transforms) {
    Dataset moved;
    moved.class_names = test.class_names;
    for (Index i = 0; i < test.size(); ++i)
      moved.samples.push_back(augment(test.samples[i], t, static_cast<std::uint64_t>(i)));
    const auto geo = build_geometry(moved, model.spec(), jobs);
    const auto ev = evaluate(model, params, moved, geo, jobs);
    out.push_back({t, ev.accuracy, clean_accuracy - ev.accuracy});
  }
  return out;
}

nlohmann::json to_json(const EvalResult& r) {
  return {{"count", r.count},
          {"accuracy", r.accuracy},
          {"mean_class_accuracy", r.mean_class_accuracy},
          {"per_class", r.per_class},
          {"loss", r.loss}};
}

nlohmann::json to_json(const metrics::GapReport& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : r.layers) layers.push_back({{"mean", l.mean}, {"evaluated", l.evaluated}, {"skipped", l.skipped}});
  return {{"metric", "gap"},
          {"config", {{"mode", metrics::to_string(r.mode)}, {"distance_source", "level1_knn"}}},
          {"per_layer", layers},
          {"mean_over_layers", r.mean_over_layers()}};
}

nlohmann::json to_json(const probe::ProbeResult& r) {
  return {{"task", probe::to_string(r.task)},
          {"score", r.score},
          {"axis_scores", r.axis_scores},
          {"skipped_axes", r.skipped_axes},
          {"train_count", r.train_count},
          {"test_count", r.test_count}};
}

}  // namespace x3d::harness
