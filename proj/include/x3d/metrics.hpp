#pragma once

// Analysis instruments: geodesic distances on a kNN graph, the embedding/input
// distance-profile gap, and a closed-form FLOP model of every block kind.

#include "x3d/baselines.hpp"
#include "x3d/x3d_layer.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace x3d::metrics {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct GeodesicResult {
  Matrix distances;  // sources x N; kUnreachable across components
  Index components = 1;
  bool connected() const { return components == 1; }
};

/// Dijkstra over the symmetrized graph joining each point to its graph_k
/// nearest other points, weighted by Euclidean length.
GeodesicResult geodesic_from_sources(const Coords& coords, Index graph_k, std::span<const Index> sources);
GeodesicResult geodesic_matrix(const Coords& coords, Index graph_k);

enum class GapMode { Euclidean, Geodesic };

std::string_view to_string(GapMode mode);
GapMode parse_gap_mode(std::string_view name);

struct GapValue {
  double mean = 0.0;       // over evaluated regions
  Index evaluated = 0;
  Index skipped = 0;       // zero-norm distance profile on either side
  std::vector<double> per_region;  // NaN where skipped
};

/// Per region: a = input-space distances center -> valid neighbors, b = the
/// same in embedding space; both scaled to unit L2 norm; value = |a - b|.
/// `embeddings` has one row per point of `coords`. Geodesic mode uses the
/// kNN graph of `graph_k` over coords.
GapValue gap_metric(const Coords& coords, const NeighborhoodIndex& nbr, const Matrix& embeddings,
                    GapMode mode = GapMode::Euclidean, Index graph_k = 8);

struct GapReport {
  GapMode mode = GapMode::Euclidean;
  std::vector<GapValue> layers;

  double mean_over_layers() const;
};

enum class CostMethod { X3d, SharedMlp, RsConv, KpConv, VectorAttention, ScalarAttention };

std::string_view to_string(CostMethod method);
CostMethod parse_cost_method(std::string_view name);

struct CostDims {
  Index in_channels = 0;  // 0: same as C
  Index hidden = 64;
  Index struct_dim = 32;
  es::Kind es_kind = es::Kind::PH;
  bool implicit_structure = false;
  // the bare structure-kernel operator by default; denoising and context
  // propagation are separate add-ons with their own cost
  bool denoise = false;
  bool ncp = false;
  bool mean_aggregation = false;
  bool normalize = false;
  ihsm::RelationKind relation = ihsm::RelationKind::PNPP;
  Index kernel_points = 15;
  Index regions = 0;  // 0: every point is a center
};

struct CostEstimate {
  CostMethod method = CostMethod::X3d;
  Index points = 0;
  Index channels = 0;
  Index k = 0;
  double flops = 0.0;
  double per_point = 0.0;     // terms that scale with N
  double per_region = 0.0;    // terms that scale with M
  double per_neighbor = 0.0;  // terms that scale with M * K
};

/// Forward FLOPs (multiply-accumulate = 2) of one block over N points with
/// K neighbors per region; identical to the tape counter of that block.
CostEstimate flops_estimate(CostMethod method, Index points, Index channels, Index k, const CostDims& dims = {});

/// The block configurations the estimate describes, for instrumented checks.
layer::X3dConfig cost_x3d_config(Index channels, Index k, const CostDims& dims);
ihsm::IhsmConfig cost_ihsm_config(CostMethod method, Index channels, const CostDims& dims);

}  // namespace x3d::metrics
