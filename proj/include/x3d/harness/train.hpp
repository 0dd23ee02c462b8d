#pragma once

// Training and evaluation loops plus the JSON run report.

#include "x3d/harness/model.hpp"
#include "x3d/harness/shapes.hpp"
#include "x3d/metrics.hpp"
#include "x3d/probe.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace x3d::harness {

struct TrainSpec {
  Index epochs = 100;
  double lr = 0.05;
  double momentum = 0.9;
  Index batch = 16;
  std::uint64_t seed = 1;
  bool cosine = true;
};

/// Learning rate for optimizer step `step` of `total` (cosine decay to 0 when enabled).
double learning_rate(const TrainSpec& spec, Index step, Index total);

struct EpochLog {
  Index epoch = 0;
  double loss = 0.0;  // mean training loss over the epoch
  double lr = 0.0;    // rate at the epoch's first step
};

struct TrainResult {
  nn::ParamStore params;
  std::vector<EpochLog> epochs;
  double seconds = 0.0;
};

struct EvalResult {
  Index count = 0;
  double accuracy = 0.0;
  double mean_class_accuracy = 0.0;
  std::vector<double> per_class;
  double loss = 0.0;
  std::vector<int> predictions;
};

std::vector<SampleGeometry> build_geometry(const Dataset& data, const ModelSpec& spec, int jobs = 1);

/// Minibatch SGD; per-sample gradients are summed in batch order and averaged.
/// Throws NumericError when the loss or a gradient becomes non-finite.
TrainResult train(const Classifier& model, const Dataset& data, const std::vector<SampleGeometry>& geometry,
                  const TrainSpec& spec);

EvalResult evaluate(const Classifier& model, const nn::ParamStore& params, const Dataset& data,
                    const std::vector<SampleGeometry>& geometry, int jobs = 1);

/// Per-block GAP over level-1 neighborhoods, averaged over clouds.
metrics::GapReport gap_report(const Classifier& model, const nn::ParamStore& params,
                              const std::vector<SampleGeometry>& geometry, metrics::GapMode mode,
                              Index max_clouds = 0);

struct ProbeSpec {
  Index clouds = 20;
  probe::ProbeOptions options;
};

/// Probe inputs [block-1 output at center i, xyz of neighbor j] over level-0 neighborhoods.
probe::ProbeResult run_probe(const Classifier& model, const nn::ParamStore& params, const Dataset& data,
                             const std::vector<SampleGeometry>& geometry, probe::ProbeTask task,
                             const ProbeSpec& spec);

struct RobustnessEntry {
  Transform transform;
  double accuracy = 0.0;
  double drop = 0.0;  // clean accuracy - transformed accuracy
};

std::vector<RobustnessEntry> robustness(const Classifier& model, const nn::ParamStore& params,
                                        const Dataset& test, double clean_accuracy,
                                        const std::vector<Transform>& transforms, int jobs = 1);

nlohmann::json to_json(const EvalResult& r);
nlohmann::json to_json(const metrics::GapReport& r);
nlohmann::json to_json(const probe::ProbeResult& r);

}  // namespace x3d::harness
