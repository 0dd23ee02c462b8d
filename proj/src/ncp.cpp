#include "x3d/ncp.hpp"

#include "x3d/error.hpp"

namespace x3d::ncp {

using nn::Tape;
using nn::Var;

OverlapSet build_overlap_set(const NeighborhoodIndex& nbr, Index n_points) {
  OverlapSet set;
  set.occurrences.resize(static_cast<std::size_t>(n_points));
  for (Index i = 0; i < nbr.regions(); ++i) {
    for (Index j = 0; j < nbr.valid(i); ++j) {
      const Index p = nbr.neighbor(i, j);
      if (p < 0 || p >= n_points) throw SizeError("build_overlap_set: neighbor index out of range");
      set.occurrences[p].emplace_back(i, j);
    }
  }
  return set;
}

Var center_pool(Tape& tape, Var updated, const NeighborhoodIndex& nbr) {
  return nn::segment_max(tape, updated, nbr.k, nbr.valid_counts);
}

Var overlap_context(Tape& tape, Var updated, const NeighborhoodIndex& nbr, std::span<const Index> targets,
                    Index n_points, std::vector<Index>* empty_targets) {
  const Matrix& u = tape.value(updated);
  const Index k = nbr.k;
  if (u.rows() != nbr.regions() * k) throw ShapeError("overlap_context: updated rows must be regions * k");
  const Index channels = u.cols();

  Matrix acc = Matrix::Zero(n_points, channels);
  std::vector<Index> count(static_cast<std::size_t>(n_points), 0);
  for (Index i = 0; i < nbr.regions(); ++i) {
    for (Index j = 0; j < nbr.valid(i); ++j) {
      const Index p = nbr.neighbor(i, j);
      if (p < 0 || p >= n_points) throw SizeError("overlap_context: neighbor index out of range");
      acc.row(p) += u.row(i * k + j);
      ++count[p];
    }
  }

  const Index t_count = static_cast<Index>(targets.size());
  Matrix out = Matrix::Zero(t_count, channels);
  for (Index t = 0; t < t_count; ++t) {
    const Index p = targets[t];
    if (p < 0 || p >= n_points) throw SizeError("overlap_context: target index out of range");
    if (count[p] == 0) {
      if (empty_targets) empty_targets->push_back(p);
      continue;
    }
    out.row(t) = acc.row(p) / static_cast<double>(count[p]);
  }

  std::vector<Index> tgt(targets.begin(), targets.end());
  const double flops = static_cast<double>(u.size() + out.size());
  return tape.push(std::move(out), {updated},
                   [updated, nbr, tgt = std::move(tgt), count = std::move(count), n_points](Tape& tp,
                                                                                            const Matrix& g) {
                     Matrix per_point = Matrix::Zero(n_points, g.cols());
                     for (std::size_t t = 0; t < tgt.size(); ++t) {
                       const Index p = tgt[t];
                       if (count[p] > 0) per_point.row(p) += g.row(static_cast<Index>(t)) / static_cast<double>(count[p]);
                     }
                     Matrix& gu = tp.grad_buffer(updated);
                     for (Index i = 0; i < nbr.regions(); ++i)
                       for (Index j = 0; j < nbr.valid(i); ++j) gu.row(i * nbr.k + j) += per_point.row(nbr.neighbor(i, j));
                   },
                   flops);
}

Var context_fuse(Tape& tape, const nn::Mlp& fuse, Var context, Var pooled) {
  if (fuse.in_dim() != tape.cols(context) + tape.cols(pooled)) {
    throw ShapeError("context_fuse: fusion MLP input must equal 2C");
  }
  return fuse.forward(tape, nn::concat_cols(tape, context, pooled));
}

}  // namespace x3d::ncp
