#include "x3d/explicit_structures.hpp"

#include "x3d/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace x3d::es {

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::PH: return "PH";
    case Kind::PCA: return "PCA";
    case Kind::LR: return "LR";
  }
  return "?";
}

Kind parse_kind(std::string_view name) {
  if (name == "PH" || name == "ph" || name == "pointhop") return Kind::PH;
  if (name == "PCA" || name == "pca") return Kind::PCA;
  if (name == "LR" || name == "lr" || name == "lle") return Kind::LR;
  throw ConfigError("unknown explicit structure kind '" + std::string(name) + "'");
}

Index descriptor_dim(Kind kind, Index k) {
  switch (kind) {
    case Kind::PH: return kPointHopDim;
    case Kind::PCA: return kPcaDim;
    case Kind::LR: return k;
  }
  return 0;
}

int octant_of(double x, double y, double z) {
  return (x > 0.0 ? 4 : 0) + (y > 0.0 ? 2 : 0) + (z > 0.0 ? 1 : 0);
}

OctantAssignment octant_assign(const Offsets& offsets) {
  OctantAssignment out;
  out.regions = offsets.regions;
  out.k = offsets.k;
  out.octant.resize(static_cast<std::size_t>(offsets.rows.rows()));
  for (Index r = 0; r < offsets.rows.rows(); ++r) {
    out.octant[r] = static_cast<std::uint8_t>(
        octant_of(offsets.rows(r, 0), offsets.rows(r, 1), offsets.rows(r, 2)));
  }
  return out;
}

ExplicitStructure pointhop_descriptor(const Eigen::Ref<const Matrix>& points) {
  ExplicitStructure es{Kind::PH, Vector::Zero(kPointHopDim), false};
  if (points.rows() < 1) throw SizeError("pointhop_descriptor: need at least one point");
  int counts[8] = {};
  for (Index r = 0; r < points.rows(); ++r) {
    const int c = octant_of(points(r, 0), points(r, 1), points(r, 2));
    ++counts[c];
    for (int d = 0; d < 3; ++d) es.data[3 * c + d] += points(r, d);
  }
  for (int c = 0; c < 8; ++c) {
    if (counts[c] == 0) continue;  // empty octant stays zero
    for (int d = 0; d < 3; ++d) es.data[3 * c + d] /= static_cast<double>(counts[c]);
  }
  return es;
}

ExplicitStructure pca_descriptor(const Eigen::Ref<const Matrix>& points, PcaOptions options) {
  const Index n = points.rows();
  if (n < 1) throw SizeError("pca_descriptor: need at least one point");
  ExplicitStructure es{Kind::PCA, Vector::Zero(kPcaDim), false};

  Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
  if (!options.about_center) mean = points.colwise().sum() / static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (Index r = 0; r < n; ++r) {
    const Eigen::RowVector3d q = points.row(r) - mean;
    cov.noalias() += q.transpose() * q;
  }
  cov /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  const Eigen::Vector3d ascending = solver.eigenvalues();
  const Eigen::Matrix3d vectors = solver.eigenvectors();
  for (int e = 0; e < 3; ++e) {
    const int src = 2 - e;
    es.data[e] = ascending[src];
    Eigen::Vector3d v = vectors.col(src);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    es.data.segment<3>(3 + 3 * e) = v;
  }

  const double l1 = es.data[0], l2 = es.data[1], l3 = es.data[2];
  if (!(l1 > 0.0) || cov.isZero(0.0)) {
    es.degenerate = true;
    return es;  // linear/planar/scatter stay zero
  }
  es.data[12] = (l1 - l2) / l1;
  es.data[13] = (l2 - l3) / l1;
  es.data[14] = l3 / l1;
  return es;
}

ExplicitStructure lle_weights(const Eigen::Ref<const Matrix>& points, Index k, double eps) {
  const Index n = points.rows();
  if (n < 1) throw SizeError("lle_weights: need at least one point");
  if (k < n) throw SizeError("lle_weights: k smaller than the number of valid points");
  ExplicitStructure es{Kind::LR, Vector::Zero(k), false};

  Matrix gram = points * points.transpose();
  const double trace = gram.trace();
  // all-zero neighborhoods still get a positive-definite system
  const double reg = trace > 0.0 ? eps * trace / static_cast<double>(n) : eps;
  gram.diagonal().array() += reg;
  const Vector w = gram.ldlt().solve(Vector::Ones(n));
  es.data.head(n) = w / w.sum();
  return es;
}

double lle_objective(const Eigen::Ref<const Matrix>& points, const Eigen::Ref<const Vector>& weights,
                     double eps) {
  const Index n = points.rows();
  const Vector w = weights.head(n);
  const Eigen::RowVector3d recon = w.transpose() * points;
  const double trace = points.squaredNorm();
  const double reg = trace > 0.0 ? eps * trace / static_cast<double>(n) : eps;
  return recon.squaredNorm() + reg * w.squaredNorm();
}

Matrix compute_descriptors(Kind kind, const Offsets& offsets, std::span<const Index> valid_counts,
                           PcaOptions pca) {
  if (static_cast<Index>(valid_counts.size()) != offsets.regions) {
    throw ShapeError("compute_descriptors: valid_counts size does not match region count");
  }
  const Index dim = descriptor_dim(kind, offsets.k);
  Matrix out(offsets.regions, dim);
  for (Index i = 0; i < offsets.regions; ++i) {
    const Index valid = valid_counts[i];
    const auto block = offsets.rows.middleRows(i * offsets.k, valid);
    ExplicitStructure es;
    switch (kind) {
      case Kind::PH: es = pointhop_descriptor(block); break;
      case Kind::PCA: es = pca_descriptor(block, pca); break;
      case Kind::LR: {
        // the center's own zero offset would reconstruct the origin alone; weights go to the others
        std::vector<Index> slots;
        for (Index j = 0; j < valid; ++j)
          if (block.row(j).squaredNorm() > 0.0) slots.push_back(j);
        out.row(i).setZero();
        if (slots.empty()) continue;
        Matrix others(static_cast<Index>(slots.size()), 3);
        for (std::size_t r = 0; r < slots.size(); ++r) others.row(static_cast<Index>(r)) = block.row(slots[r]);
        const ExplicitStructure w = lle_weights(others, others.rows());
        for (std::size_t r = 0; r < slots.size(); ++r) out(i, slots[r]) = w.data[static_cast<Index>(r)];
        continue;
      }
    }
    out.row(i) = es.data.transpose();
  }
  return out;
}

double descriptor_flops(Kind kind, Index regions, Index k) {
  const double m = static_cast<double>(regions);
  const double kk = static_cast<double>(k);
  switch (kind) {
    case Kind::PH: return m * (3.0 * kk + 24.0);  // scatter-add, then divide
    case Kind::PCA: return m * (3.0 * kk + 12.0 * kk + 250.0);
    case Kind::LR: return m * (6.0 * kk * kk + kk * kk * kk / 3.0 + 2.0 * kk * kk);
  }
  return 0.0;
}

void write_descriptor_csv(std::ostream& out, Kind kind, std::span<const Index> centers,
                          const Matrix& descriptors) {
  out << "center,kind";
  for (Index c = 0; c < descriptors.cols(); ++c) out << ",v" << c;
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index r = 0; r < descriptors.rows(); ++r) {
    out << centers[r] << ',' << to_string(kind);
    for (Index c = 0; c < descriptors.cols(); ++c) out << ',' << descriptors(r, c);
    out << '\n';
  }
}

}  // namespace x3d::es
