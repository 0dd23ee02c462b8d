#include "x3d/baselines.hpp"

#include "x3d/error.hpp"

#include <cmath>

namespace x3d::ihsm {

using nn::Tape;
using nn::Var;

std::string_view to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::PNPP: return "pnpp";
    case RelationKind::RANDLA: return "randla";
    case RelationKind::GAM: return "gam";
  }
  return "?";
}

RelationKind parse_relation(std::string_view name) {
  if (name == "pnpp" || name == "PNPP") return RelationKind::PNPP;
  if (name == "randla" || name == "RANDLA") return RelationKind::RANDLA;
  if (name == "gam" || name == "GAM") return RelationKind::GAM;
  throw ConfigError("unknown relation vector '" + std::string(name) + "'");
}

Index relation_dim(RelationKind kind) {
  switch (kind) {
    case RelationKind::PNPP: return 3;
    case RelationKind::RANDLA: return 10;
    case RelationKind::GAM: return 2;
  }
  return 0;
}

Matrix relation_vector(RelationKind kind, const Grouping& g) {
  const Index k = g.k();
  const Index rows = g.regions() * k;
  Matrix out(rows, relation_dim(kind));
  for (Index r = 0; r < rows; ++r) {
    const Index region = r / k;
    const Eigen::RowVector3d d = -g.offsets.rows.row(r);
    const double d2 = d.squaredNorm();
    switch (kind) {
      case RelationKind::PNPP: out.row(r) = d; break;
      case RelationKind::RANDLA:
        out.block<1, 3>(r, 0) = d;
        out.block<1, 3>(r, 3) = g.coords.row(g.nbr.centers[region]);
        out.block<1, 3>(r, 6) = g.coords.row(g.nbr.neighbors[r]);
        out(r, 9) = d2;
        break;
      case RelationKind::GAM: {
        const double planar = d[0] * d[0] + d[1] * d[1];
        out(r, 0) = (planar > 0.0 && d2 > 0.0) ? d[2] / d2 * (d[0] + d[1]) / std::sqrt(planar) : 0.0;
        out(r, 1) = d2;
        break;
      }
    }
  }
  return out;
}

KernelPointSet make_kernel_points(Index r, double sigma, std::uint64_t seed) {
  if (r < 1) throw ConfigError("kernel points: r must be >= 1");
  if (!(sigma > 0.0)) throw ConfigError("kernel points: sigma must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index pool = 32 * r;
  PointCloud candidates(Coords(pool, 3));
  for (Index i = 0; i < pool; ++i) {
    Vec3 v(normal(rng), normal(rng), normal(rng));
    while (v.norm() == 0.0) v = Vec3(normal(rng), normal(rng), normal(rng));
    candidates.coords.row(i) = (0.75 * sigma) * v.normalized().transpose();
  }
  const auto picks = farthest_point_sample(candidates, r, 0);
  KernelPointSet kps;
  kps.sigma = sigma;
  kps.points.resize(r, 3);
  for (Index i = 0; i < r; ++i) kps.points.row(i) = candidates.coords.row(picks[i]);
  return kps;
}

double kernel_influence(double distance, double sigma) { return std::max(0.0, 1.0 - distance / sigma); }

Matrix kernel_correlation(const KernelPointSet& kps, const Offsets& offsets) {
  Matrix h(offsets.rows.rows(), kps.size());
  for (Index r = 0; r < offsets.rows.rows(); ++r)
    for (Index p = 0; p < kps.size(); ++p)
      h(r, p) = kernel_influence((offsets.rows.row(r) - kps.points.row(p)).norm(), kps.sigma);
  return h;
}

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::SharedMlp: return "shared_mlp";
    case BlockKind::RsConv: return "rsconv";
    case BlockKind::KpConv: return "kpconv";
    case BlockKind::VectorAttention: return "vector_attention";
    case BlockKind::ScalarAttention: return "scalar_attention";
  }
  return "?";
}

BlockKind parse_block_kind(std::string_view name) {
  if (name == "shared_mlp") return BlockKind::SharedMlp;
  if (name == "rsconv") return BlockKind::RsConv;
  if (name == "kpconv") return BlockKind::KpConv;
  if (name == "vector_attention") return BlockKind::VectorAttention;
  if (name == "scalar_attention") return BlockKind::ScalarAttention;
  throw ConfigError("unknown block kind '" + std::string(name) + "'");
}

Var shared_mlp_embed(Tape& tape, const nn::Mlp& rel_mlp, const Matrix& relation, Var nbr_embedded) {
  return nn::add(tape, rel_mlp.forward(tape, tape.constant(relation)), nbr_embedded);
}

Var rsconv_embed(Tape& tape, const nn::Mlp& kernel_mlp, const nn::Mlp& out_mlp, const Matrix& relation,
                 Var nbr_features, Var* kernels) {
  if (kernel_mlp.out_dim() != tape.cols(nbr_features)) throw ShapeError("rsconv: kernel width must match features");
  const Var w = kernel_mlp.forward(tape, tape.constant(relation));
  if (kernels) *kernels = w;
  return out_mlp.forward(tape, nn::mul(tape, w, nbr_features));
}

Var kpconv_embed(Tape& tape, Var weights, const Matrix& correlation, Var nbr_features) {
  const Index r = correlation.cols();
  if (tape.rows(weights) != tape.cols(nbr_features) || tape.cols(weights) % r != 0)
    throw ShapeError("kpconv: weight shape must be C_in x (r * C_out)");
  return nn::blend_blocks(tape, nn::matmul(tape, nbr_features, weights), correlation);
}

namespace {

std::vector<Index> center_per_row(const Grouping& g) {
  std::vector<Index> out(static_cast<std::size_t>(g.regions() * g.k()));
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = g.nbr.centers[static_cast<Index>(r) / g.k()];
  return out;
}

}  // namespace

AttentionResult vector_attention_embed(Tape& tape, const VectorAttentionParts& parts, const Grouping& g,
                                       Var features) {
  const auto& valid = g.nbr.valid_counts;
  const auto centers = center_per_row(g);
  const Var diff = nn::sub(tape, nn::gather_rows(tape, features, centers),
                           nn::gather_rows(tape, features, g.nbr.neighbors));
  const Var pos = parts.position->forward(tape, tape.constant(-g.offsets.rows));
  const Var logits = nn::add(tape, parts.relation->forward(tape, diff), pos);
  const Var w = nn::segment_softmax(tape, logits, g.k(), valid);
  const Var value =
      nn::add(tape, nn::gather_rows(tape, parts.value->forward(tape, features), g.nbr.neighbors), pos);
  return {nn::segment_sum(tape, nn::mul(tape, w, value), g.k(), valid), w};
}

AttentionResult scalar_attention_embed(Tape& tape, const nn::Mlp& query, const nn::Mlp& key, const nn::Mlp& value,
                                       const Grouping& g, Var features) {
  const auto& valid = g.nbr.valid_counts;
  const Var q = nn::gather_rows(tape, query.forward(tape, features), center_per_row(g));
  const Var kk = nn::gather_rows(tape, key.forward(tape, features), g.nbr.neighbors);
  const Var v = nn::gather_rows(tape, value.forward(tape, features), g.nbr.neighbors);
  const double temp = 1.0 / std::sqrt(static_cast<double>(query.out_dim()));
  const Var w = nn::segment_softmax(tape, nn::scale(tape, nn::row_dot(tape, q, kk), temp), g.k(), valid);
  return {nn::segment_sum(tape, nn::scale_rows(tape, v, w), g.k(), valid), w};
}

IhsmBlock::IhsmBlock(std::string prefix, IhsmConfig config) : prefix_(std::move(prefix)), config_(config) {
  const auto& c = config_;
  if (c.in_channels < 1 || c.channels < 1 || c.hidden < 1) throw ConfigError("ihsm: widths must be >= 1");
  const Index d = relation_dim(c.relation);
  using nn::LayerSpec;
  switch (c.kind) {
    case BlockKind::SharedMlp:
      a_ = nn::Mlp(prefix_ + ".rel", LayerSpec::chain({d, c.hidden, c.channels}, c.normalize));
      b_ = nn::Mlp(prefix_ + ".feature", LayerSpec::chain({c.in_channels, c.hidden, c.channels}, c.normalize));
      break;
    case BlockKind::RsConv:
      a_ = nn::Mlp(prefix_ + ".kernel", LayerSpec::chain({d, c.hidden, c.channels}, c.normalize));
      b_ = nn::Mlp(prefix_ + ".lift", LayerSpec::chain({c.in_channels, c.channels}));
      c_ = nn::Mlp(prefix_ + ".out", LayerSpec::chain({c.channels, c.hidden, c.channels}, c.normalize));
      break;
    case BlockKind::KpConv:
      kps_ = make_kernel_points(c.kernel_points, c.kernel_sigma, c.kernel_seed);
      break;
    case BlockKind::VectorAttention:
      a_ = nn::Mlp(prefix_ + ".relation", LayerSpec::chain({c.in_channels, c.hidden, c.channels}, c.normalize));
      b_ = nn::Mlp(prefix_ + ".position", LayerSpec::chain({3, c.hidden, c.channels}, c.normalize));
      c_ = nn::Mlp(prefix_ + ".value", LayerSpec::chain({c.in_channels, c.channels}));
      break;
    case BlockKind::ScalarAttention:
      a_ = nn::Mlp(prefix_ + ".query", LayerSpec::chain({c.in_channels, c.channels}));
      b_ = nn::Mlp(prefix_ + ".key", LayerSpec::chain({c.in_channels, c.channels}));
      c_ = nn::Mlp(prefix_ + ".value", LayerSpec::chain({c.in_channels, c.channels}));
      break;
  }
}

void IhsmBlock::register_params(nn::ParamStore& store) const {
  if (config_.kind == BlockKind::KpConv) {
    store.add(kpconv_weight_name(), config_.in_channels, kps_.size() * config_.channels);
    return;
  }
  for (const nn::Mlp* m : {&a_, &b_, &c_})
    if (!m->spec().layers.empty()) m->register_params(store);
}

void IhsmBlock::init_params(nn::ParamStore& store, std::mt19937_64& rng) const {
  if (config_.kind == BlockKind::KpConv) {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(config_.in_channels + config_.channels));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = store.matrix(kpconv_weight_name());
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    return;
  }
  for (const nn::Mlp* m : {&a_, &b_, &c_})
    if (!m->spec().layers.empty()) m->init_params(store, rng);
}

Var IhsmBlock::forward(Tape& tape, const Grouping& g, Var features, IhsmIntermediates* dump) const {
  if (tape.rows(features) != g.points()) throw ShapeError("ihsm block: one feature row per point");
  if (tape.cols(features) != config_.in_channels) throw ShapeError("ihsm block: feature width");
  const auto& valid = g.nbr.valid_counts;
  const Index k = g.k();

  Var embedded, kernels, out;
  Matrix relation;
  switch (config_.kind) {
    case BlockKind::SharedMlp: {
      relation = relation_vector(config_.relation, g);
      const Var nbr = nn::gather_rows(tape, b_.forward(tape, features), g.nbr.neighbors);
      embedded = shared_mlp_embed(tape, a_, relation, nbr);
      break;
    }
    case BlockKind::RsConv: {
      relation = relation_vector(config_.relation, g);
      const Var nbr = nn::gather_rows(tape, b_.forward(tape, features), g.nbr.neighbors);
      embedded = rsconv_embed(tape, a_, c_, relation, nbr, &kernels);
      break;
    }
    case BlockKind::KpConv: {
      const Matrix h = kernel_correlation(kps_, g.offsets);
      const Var nbr = nn::gather_rows(tape, features, g.nbr.neighbors);
      const Var weights = tape.param(kpconv_weight_name());
      embedded = kpconv_embed(tape, weights, h, nbr);
      if (dump) {
        // W_ij = sum_k h_k G_k, flattened row-major C_in x C
        const Matrix& G = tape.value(weights);
        const Index cin = config_.in_channels, c = config_.channels;
        dump->kernels = Matrix::Zero(h.rows(), cin * c);
        for (Index r = 0; r < h.rows(); ++r)
          for (Index p = 0; p < h.cols(); ++p)
            for (Index a = 0; a < cin; ++a)
              for (Index b = 0; b < c; ++b) dump->kernels(r, a * c + b) += h(r, p) * G(a, p * c + b);
      }
      break;
    }
    case BlockKind::VectorAttention: {
      const AttentionResult res = vector_attention_embed(tape, {&a_, &b_, &c_}, g, features);
      out = res.output;
      kernels = res.weights;
      break;
    }
    case BlockKind::ScalarAttention: {
      const AttentionResult res = scalar_attention_embed(tape, a_, b_, c_, g, features);
      out = res.output;
      kernels = res.weights;
      break;
    }
  }
  if (!out.valid()) out = nn::segment_max(tape, embedded, k, valid);

  if (dump) {
    dump->relation = relation;
    if (kernels.valid()) dump->kernels = tape.value(kernels);
    if (embedded.valid()) dump->embedded = tape.value(embedded);
    dump->output = tape.value(out);
  }
  return out;
}

Matrix ihsm_block_forward(const IhsmBlock& block, const nn::ParamStore& params, const Grouping& grouping,
                          const Matrix& features, IhsmIntermediates* dump) {
  Tape tape(&params, false);
  return tape.value(block.forward(tape, grouping, tape.input(features), dump));
}

}  // namespace x3d::ihsm
