#pragma once

// Point-cloud containers, sampling and neighborhood queries.
//
// Offsets are stored neighbor-minus-center (p_ij - p_i). Consumers that need
// center-minus-neighbor negate locally.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace x3d {

using Index = Eigen::Index;
// Rows are samples/points throughout, so dense matrices are row-major.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Coords = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Vec3 = Eigen::Vector3d;

struct PointCloud {
  Coords coords;                          // N x 3
  std::optional<Matrix> features;         // N x C
  std::optional<std::vector<int>> labels; // N

  PointCloud() = default;
  explicit PointCloud(Coords xyz) : coords(std::move(xyz)) {}

  Index size() const { return coords.rows(); }
  Index feature_dim() const { return features ? features->cols() : 0; }

  /// Throws SizeError/ShapeError/NumericError when an invariant is broken.
  void validate() const;
};

/// Per-center neighbor lists. Rows beyond valid_counts[i] repeat the first
/// valid neighbor of that row.
struct NeighborhoodIndex {
  std::vector<Index> centers;    // M
  std::vector<Index> neighbors;  // M * k, row-major
  std::vector<Index> valid_counts;
  Index k = 0;

  Index regions() const { return static_cast<Index>(centers.size()); }
  Index neighbor(Index region, Index slot) const { return neighbors[region * k + slot]; }
  Index valid(Index region) const { return valid_counts[region]; }
  std::span<const Index> row(Index region) const {
    return {neighbors.data() + region * k, static_cast<std::size_t>(k)};
  }

  /// Throws when an index is out of [0, n) or a count is outside [1, k].
  void validate(Index n) const;
};

/// (M*k) x 3 matrix; row i*k + j holds coords[nbr(i,j)] - coords[center(i)].
struct Offsets {
  Index regions = 0;
  Index k = 0;
  Matrix rows;

  Vec3 at(Index region, Index slot) const { return rows.row(region * k + slot).transpose(); }
};

double squared_distance(const Coords& coords, Index a, Index b);

std::vector<Index> farthest_point_sample(const PointCloud& cloud, Index m, Index start = 0);

/// k nearest points by Euclidean distance, ascending, ties to the smaller index.
NeighborhoodIndex knn_query(const PointCloud& cloud, std::span<const Index> centers, Index k);

/// Points within `radius` in index order, at most k_max of them.
NeighborhoodIndex ball_query(const PointCloud& cloud, std::span<const Index> centers,
                             double radius, Index k_max);

Offsets relative_offsets(const PointCloud& cloud, const NeighborhoodIndex& nbr);

std::vector<Index> iota_indices(Index n);

/// Input coordinates plus one neighborhood query over them: everything a
/// local aggregation block needs besides features and parameters.
struct Grouping {
  Coords coords;
  NeighborhoodIndex nbr;
  Offsets offsets;

  Index points() const { return coords.rows(); }
  Index regions() const { return nbr.regions(); }
  Index k() const { return nbr.k; }
};

Grouping make_grouping(Coords coords, NeighborhoodIndex nbr);

}  // namespace x3d
