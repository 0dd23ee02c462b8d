#include "x3d/core_geometry.hpp"

#include "x3d/error.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

namespace x3d {

void PointCloud::validate() const {
  const Index n = coords.rows();
  if (n < 1) throw SizeError("point cloud must contain at least one point");
  if (!coords.allFinite()) throw NumericError("point cloud coordinates must be finite");
  if (features && features->rows() != n) {
    throw ShapeError("feature rows (" + std::to_string(features->rows()) +
                     ") do not match point count (" + std::to_string(n) + ")");
  }
  if (labels && static_cast<Index>(labels->size()) != n) {
    throw ShapeError("label count does not match point count");
  }
}

void NeighborhoodIndex::validate(Index n) const {
  const Index m = regions();
  if (static_cast<Index>(neighbors.size()) != m * k || static_cast<Index>(valid_counts.size()) != m) {
    throw ShapeError("neighborhood index tables have inconsistent sizes");
  }
  for (Index i = 0; i < m; ++i) {
    if (centers[i] < 0 || centers[i] >= n) throw SizeError("center index out of range");
    if (valid_counts[i] < 1 || valid_counts[i] > k) throw SizeError("valid count outside [1, k]");
  }
  for (Index v : neighbors) {
    if (v < 0 || v >= n) throw SizeError("neighbor index out of range");
  }
}

double squared_distance(const Coords& coords, Index a, Index b) {
  const double dx = coords(a, 0) - coords(b, 0);
  const double dy = coords(a, 1) - coords(b, 1);
  const double dz = coords(a, 2) - coords(b, 2);
  return dx * dx + dy * dy + dz * dz;
}

std::vector<Index> iota_indices(Index n) {
  std::vector<Index> out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), Index{0});
  return out;
}

std::vector<Index> farthest_point_sample(const PointCloud& cloud, Index m, Index start) {
  const Index n = cloud.size();
  if (m < 1 || m > n) {
    throw SizeError("farthest_point_sample: m=" + std::to_string(m) + " outside [1, " +
                    std::to_string(n) + "]");
  }
  if (start < 0 || start >= n) throw SizeError("farthest_point_sample: start out of range");

  std::vector<Index> picked;
  picked.reserve(static_cast<std::size_t>(m));
  std::vector<double> min_d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Index current = start;
  for (Index s = 0; s < m; ++s) {
    picked.push_back(current);
    min_d2[current] = -1.0;  // never re-picked
    Index best = -1;
    double best_d2 = -1.0;
    for (Index p = 0; p < n; ++p) {
      if (min_d2[p] < 0.0) continue;
      const double d2 = squared_distance(cloud.coords, current, p);
      if (d2 < min_d2[p]) min_d2[p] = d2;
      if (min_d2[p] > best_d2) {
        best_d2 = min_d2[p];
        best = p;
      }
    }
    current = best;
  }
  return picked;
}

NeighborhoodIndex knn_query(const PointCloud& cloud, std::span<const Index> centers, Index k) {
  const Index n = cloud.size();
  if (k < 1 || k > n) {
    throw SizeError("knn_query: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  NeighborhoodIndex out;
  out.k = k;
  out.centers.assign(centers.begin(), centers.end());
  out.neighbors.resize(centers.size() * static_cast<std::size_t>(k));
  out.valid_counts.assign(centers.size(), k);

  std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Index c = centers[i];
    if (c < 0 || c >= n) throw SizeError("knn_query: center index out of range");
    for (Index p = 0; p < n; ++p) dist[p] = {squared_distance(cloud.coords, c, p), p};
    // pair ordering compares distance first, then index: the tie rule.
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (Index j = 0; j < k; ++j) out.neighbors[i * k + j] = dist[j].second;
  }
  return out;
}

NeighborhoodIndex ball_query(const PointCloud& cloud, std::span<const Index> centers,
                             double radius, Index k_max) {
  if (!(radius > 0.0)) throw SizeError("ball_query: radius must be positive");
  if (k_max < 1) throw SizeError("ball_query: k_max must be at least 1");
  const Index n = cloud.size();
  const double r2 = radius * radius;

  NeighborhoodIndex out;
  out.k = k_max;
  out.centers.assign(centers.begin(), centers.end());
  out.neighbors.resize(centers.size() * static_cast<std::size_t>(k_max));
  out.valid_counts.resize(centers.size());

  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Index c = centers[i];
    if (c < 0 || c >= n) throw SizeError("ball_query: center index out of range");
    Index* row = out.neighbors.data() + i * k_max;
    Index found = 0;
    for (Index p = 0; p < n && found < k_max; ++p) {
      if (squared_distance(cloud.coords, c, p) <= r2) row[found++] = p;
    }
    if (found == 0) row[found++] = c;
    out.valid_counts[i] = found;
    std::fill(row + found, row + k_max, row[0]);
  }
  return out;
}

Offsets relative_offsets(const PointCloud& cloud, const NeighborhoodIndex& nbr) {
  Offsets out;
  out.regions = nbr.regions();
  out.k = nbr.k;
  out.rows.resize(out.regions * out.k, 3);
  for (Index i = 0; i < out.regions; ++i) {
    const Index c = nbr.centers[i];
    for (Index j = 0; j < out.k; ++j) {
      const Index p = nbr.neighbor(i, j);
      for (int d = 0; d < 3; ++d) out.rows(i * out.k + j, d) = cloud.coords(p, d) - cloud.coords(c, d);
    }
  }
  return out;
}

Grouping make_grouping(Coords coords, NeighborhoodIndex nbr) {
  Grouping g;
  g.coords = std::move(coords);
  g.nbr = std::move(nbr);
  g.nbr.validate(g.coords.rows());
  g.offsets = relative_offsets(PointCloud(g.coords), g.nbr);
  return g;
}

}  // namespace x3d
