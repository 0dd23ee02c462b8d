#pragma once

// Linear-ish geometry probes: a small MLP trained on frozen features of
// (center, neighbor) pairs to predict geometric targets.

#include "x3d/core_geometry.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace x3d::probe {

enum class ProbeTask { RelativeCoordinateBins, NormalRegression, GeodesicRegression };

std::string_view to_string(ProbeTask task);
ProbeTask parse_task(std::string_view name);

struct ProbeOptions {
  Index bins = 8;
  Index hidden = 64;
  Index epochs = 60;
  Index batch = 128;
  double lr = 0.02;
  double momentum = 0.9;
  double test_fraction = 0.3;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  ProbeTask task = ProbeTask::RelativeCoordinateBins;
  double score = 0.0;               // accuracy (bins) or test MSE (regressions)
  std::vector<double> axis_scores;  // bins: accuracy per evaluated axis
  std::vector<int> skipped_axes;    // bins: axes with fewer than 2 distinct values
  Index train_count = 0;
  Index test_count = 0;
};

/// One row per valid (region, slot): [center_features(i), point_features(nbr(i, j))].
Matrix pair_inputs(const Matrix& center_features, const Matrix& point_features, const NeighborhoodIndex& nbr);

/// Equal-width bin of v over [lo, hi]; the top edge falls in the last bin.
Index bin_of(double v, double lo, double hi, Index bins);

/// `targets`: offsets (n x 3) for bins, normals (n x 3) or geodesic distances (n x 1).
ProbeResult probe_geometry(const Matrix& inputs, const Matrix& targets, ProbeTask task,
                           const ProbeOptions& options = {});

}  // namespace x3d::probe
