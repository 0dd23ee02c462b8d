#pragma once

// Neighborhood context propagation: each sampled center gathers the updated
// features it received as a neighbor of every overlapping region, averages
// them, and fuses the result with its own pooled region feature.

#include "x3d/mlp.hpp"

#include <span>
#include <utility>
#include <vector>

namespace x3d::ncp {

/// For every point p, the (region, slot) pairs where p sits in a valid slot.
struct OverlapSet {
  std::vector<std::vector<std::pair<Index, Index>>> occurrences;

  Index count(Index point) const { return static_cast<Index>(occurrences[point].size()); }
};

OverlapSet build_overlap_set(const NeighborhoodIndex& nbr, Index n_points);

/// Valid-masked column-wise max over each region's updated neighbor rows.
nn::Var center_pool(nn::Tape& tape, nn::Var updated, const NeighborhoodIndex& nbr);

/// Mean of all updated rows addressed to each target point (padding excluded),
/// accumulated region-major, slot-minor. Targets that never occur as a
/// neighbor get a zero row and are appended to `empty_targets` when given.
nn::Var overlap_context(nn::Tape& tape, nn::Var updated, const NeighborhoodIndex& nbr,
                        std::span<const Index> targets, Index n_points,
                        std::vector<Index>* empty_targets = nullptr);

/// fuse([context, pooled]).
nn::Var context_fuse(nn::Tape& tape, const nn::Mlp& fuse, nn::Var context, nn::Var pooled);

}  // namespace x3d::ncp
