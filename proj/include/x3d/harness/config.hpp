#pragma once

// Experiment configuration: a key=value file with [dataset], [model], [train]
// and [eval] sections. Unknown sections or keys are rejected.

#include "x3d/harness/train.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace x3d::harness {

struct EvalSpec {
  std::vector<Transform> transforms;
  bool gap = true;
  metrics::GapMode gap_mode = metrics::GapMode::Euclidean;
  std::vector<probe::ProbeTask> probes;
  ProbeSpec probe;
  int jobs = 1;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ModelSpec model;
  TrainSpec train;
  EvalSpec eval;

  void validate() const;
};

/// Throws ConfigError with the offending key on any parse or range problem.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& config);

/// Generate data, train, evaluate, and assemble the run report.
nlohmann::json run_experiment(const ExperimentConfig& config, nn::ParamStore* params_out = nullptr);

/// Evaluation sections of a report for already-trained parameters.
nlohmann::json evaluation_report(const ExperimentConfig& config, const nn::ParamStore& params);

}  // namespace x3d::harness
