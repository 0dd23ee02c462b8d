#pragma once

// Explicit local structure descriptors computed directly on center-relative
// neighbor coordinates: PointHop octant centroids (PH), neighborhood PCA shape
// descriptor (PCA) and locally-linear reconstruction weights (LR).

#include "x3d/core_geometry.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace x3d::es {

enum class Kind { PH, PCA, LR };

std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view name);

/// Descriptor length for one region. LR depends on the neighborhood size k.
Index descriptor_dim(Kind kind, Index k);

inline constexpr Index kPointHopDim = 24;
inline constexpr Index kPcaDim = 15;
inline constexpr double kLleRegularizer = 1e-3;

struct ExplicitStructure {
  Kind kind = Kind::PH;
  Vector data;
  bool degenerate = false;  // PCA only: all points coincident
};

/// 4*[x>0] + 2*[y>0] + [z>0]. Zero coordinates take the "not > 0" branch.
int octant_of(double x, double y, double z);

struct OctantAssignment {
  Index regions = 0;
  Index k = 0;
  std::vector<std::uint8_t> octant;  // regions * k, row-major

  int at(Index region, Index slot) const { return octant[region * k + slot]; }
};

OctantAssignment octant_assign(const Offsets& offsets);

/// `points` holds the valid center-relative neighbors of one region (n x 3).
ExplicitStructure pointhop_descriptor(const Eigen::Ref<const Matrix>& points);

struct PcaOptions {
  /// Second moment about the center (origin) instead of about the neighborhood mean.
  bool about_center = false;
};

/// Layout: lambda1..3 (descending), e1, e2, e3 (3 entries each), linear, planar, scatter.
ExplicitStructure pca_descriptor(const Eigen::Ref<const Matrix>& points, PcaOptions options = {});

/// Affine reconstruction weights of the origin from `points`, padded with
/// zeros to `k` entries. Regularizer eps * trace(G) / n on the Gram diagonal.
ExplicitStructure lle_weights(const Eigen::Ref<const Matrix>& points, Index k,
                              double eps = kLleRegularizer);

/// Regularized reconstruction objective minimized by lle_weights.
double lle_objective(const Eigen::Ref<const Matrix>& points, const Eigen::Ref<const Vector>& weights,
                     double eps = kLleRegularizer);

/// One descriptor row per region, computed over valid slots only. LR weights
/// skip zero offsets (the center itself), which keep weight 0.
Matrix compute_descriptors(Kind kind, const Offsets& offsets, std::span<const Index> valid_counts,
                           PcaOptions pca = {});

/// Forward FLOPs for computing `regions` descriptors over k neighbors each.
double descriptor_flops(Kind kind, Index regions, Index k);

/// CSV: center,kind,v0,v1,...
void write_descriptor_csv(std::ostream& out, Kind kind, std::span<const Index> centers,
                          const Matrix& descriptors);

}  // namespace x3d::es
