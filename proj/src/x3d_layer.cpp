#include "x3d/x3d_layer.hpp"

#include "x3d/error.hpp"
#include "x3d/ncp.hpp"

namespace x3d::layer {

using nn::Tape;
using nn::Var;

X3dConfig X3dConfig::standard(Index in_channels, Index channels, Index struct_dim, Index hidden,
                              es::Kind kind, Index k, bool normalize) {
  X3dConfig c;
  c.es_kind = kind;
  c.channels = channels;
  c.es_mlp = nn::LayerSpec::chain({es::descriptor_dim(kind, k), hidden, struct_dim}, normalize);
  c.point_mlp = nn::LayerSpec::chain({3, hidden, struct_dim}, normalize);
  c.kernel_mlp = nn::LayerSpec::chain({struct_dim, hidden, 3 * channels}, normalize);
  c.feature_mlp = nn::LayerSpec::chain({in_channels, hidden, channels}, normalize);
  c.fuse_mlp = nn::LayerSpec::chain({2 * channels, hidden, channels}, normalize);
  return c;
}

void X3dConfig::validate(Index k) const {
  if (channels < 1) throw ConfigError("x3d: channels must be >= 1");
  for (const auto* spec : {&es_mlp, &point_mlp, &kernel_mlp, &feature_mlp}) spec->validate();
  const Index es_in = implicit_structure ? 3 : es::descriptor_dim(es_kind, k);
  if (es_mlp.in_dim() != es_in) throw ShapeError("x3d: structure MLP input does not match descriptor");
  if (denoise) {
    if (point_mlp.in_dim() != 3) throw ShapeError("x3d: point MLP must take 3-D offsets");
    if (point_mlp.out_dim() != es_mlp.out_dim())
      throw ShapeError("x3d: point embedding width must equal structure feature width");
  }
  if (kernel_mlp.in_dim() != es_mlp.out_dim()) throw ShapeError("x3d: kernel MLP input must be D_s");
  if (kernel_mlp.out_dim() != 3 * channels) throw ShapeError("x3d: kernel MLP output must be 3C");
  if (feature_mlp.out_dim() != channels) throw ShapeError("x3d: feature MLP output must be C");
  if (ncp) {
    fuse_mlp.validate();
    if (fuse_mlp.in_dim() != 2 * channels) throw ShapeError("x3d: fusion MLP input must be 2C");
  }
}

Var extract_structure_feature(Tape& tape, const nn::Mlp& es_mlp, const Matrix& descriptors) {
  if (descriptors.cols() != es_mlp.in_dim()) throw ShapeError("extract_structure_feature: descriptor width");
  return es_mlp.forward(tape, tape.constant(descriptors));
}

namespace {

std::vector<Index> region_of_rows(Index regions, Index k) {
  std::vector<Index> out(static_cast<std::size_t>(regions * k));
  for (Index r = 0; r < regions * k; ++r) out[r] = nn::kernel_region_for_row(r, k);
  return out;
}

}  // namespace

DenoiseResult denoise(Tape& tape, const nn::Mlp& point_mlp, Var structure, const Offsets& offsets,
                      std::span<const Index> valid) {
  if (tape.rows(structure) != offsets.regions) throw ShapeError("denoise: one structure row per region");
  if (point_mlp.out_dim() != tape.cols(structure)) throw ShapeError("denoise: embedding width must be D_s");
  const Var emb = point_mlp.forward(tape, tape.constant(offsets.rows));
  const auto rows = region_of_rows(offsets.regions, offsets.k);
  const Var per_row = nn::gather_rows(tape, structure, rows);
  const Var scores = nn::segment_softmax(tape, nn::row_dot(tape, emb, per_row), offsets.k, valid);
  const Var delta = nn::segment_sum(tape, nn::scale_rows(tape, emb, scores), offsets.k, valid);
  return {nn::add(tape, structure, delta), scores};
}

Var make_structure_kernel(Tape& tape, const nn::Mlp& kernel_mlp, Var structure, Index channels) {
  if (kernel_mlp.out_dim() != 3 * channels) throw ShapeError("make_structure_kernel: output must be 3C");
  return kernel_mlp.forward(tape, structure);
}

KernelUpdate apply_structure_kernel_embedded(Tape& tape, Var kernels, const Offsets& offsets, Var embedded) {
  if (tape.rows(kernels) != offsets.regions) throw ShapeError("apply_structure_kernel: one kernel per region");
  if (tape.rows(embedded) != offsets.rows.rows()) throw ShapeError("apply_structure_kernel: one row per slot");
  const Matrix center_minus_neighbor = -offsets.rows;
  KernelUpdate out;
  out.position = nn::kernel_apply(tape, kernels, center_minus_neighbor, offsets.k);
  out.embedded = embedded;
  out.updated = nn::add(tape, out.position, embedded);
  return out;
}

KernelUpdate apply_structure_kernel(Tape& tape, Var kernels, const Offsets& offsets, Var neighbor_features,
                                    const nn::Mlp& feature_mlp) {
  return apply_structure_kernel_embedded(tape, kernels, offsets, feature_mlp.forward(tape, neighbor_features));
}

X3dBlock::X3dBlock(std::string prefix, X3dConfig config, Index k)
    : prefix_(std::move(prefix)), config_(std::move(config)), k_(k) {
  config_.validate(k_);
  es_mlp_ = nn::Mlp(prefix_ + ".es", config_.es_mlp);
  if (config_.denoise) point_mlp_ = nn::Mlp(prefix_ + ".point", config_.point_mlp);
  kernel_mlp_ = nn::Mlp(prefix_ + ".kernel", config_.kernel_mlp);
  feature_mlp_ = nn::Mlp(prefix_ + ".feature", config_.feature_mlp);
  if (config_.ncp) fuse_mlp_ = nn::Mlp(prefix_ + ".fuse", config_.fuse_mlp);
}

void X3dBlock::register_params(nn::ParamStore& store) const {
  es_mlp_.register_params(store);
  if (config_.denoise) point_mlp_.register_params(store);
  kernel_mlp_.register_params(store);
  feature_mlp_.register_params(store);
  if (config_.ncp) fuse_mlp_.register_params(store);
}

void X3dBlock::init_params(nn::ParamStore& store, std::mt19937_64& rng) const {
  // one sub-stream per MLP, drawn whether or not the MLP is enabled, so the
  // DN/NCP toggles leave every other weight unchanged
  std::mt19937_64 streams[5];
  for (auto& s : streams) s.seed(rng());
  es_mlp_.init_params(store, streams[0]);
  if (config_.denoise) point_mlp_.init_params(store, streams[1]);
  kernel_mlp_.init_params(store, streams[2]);
  feature_mlp_.init_params(store, streams[3]);
  if (config_.ncp) fuse_mlp_.init_params(store, streams[4]);
}

Var X3dBlock::forward(Tape& tape, const Grouping& g, Var features, X3dIntermediates* dump) const {
  if (g.k() != k_) throw ShapeError("x3d block: grouping k differs from the configured k");
  if (tape.rows(features) != g.points()) throw ShapeError("x3d block: one feature row per point");
  if (tape.cols(features) != config_.in_channels()) throw ShapeError("x3d block: feature width");
  const auto& valid = g.nbr.valid_counts;

  Var structure;
  if (config_.implicit_structure) {
    const Var per_slot = es_mlp_.forward(tape, tape.constant(g.offsets.rows));
    structure = nn::segment_max(tape, per_slot, k_, valid);
  } else {
    Matrix descriptors = es::compute_descriptors(config_.es_kind, g.offsets, valid);
    tape.add_flops(es::descriptor_flops(config_.es_kind, g.regions(), k_));
    if (dump) dump->descriptors = descriptors;
    structure = extract_structure_feature(tape, es_mlp_, descriptors);
  }
  if (dump) dump->structure0 = tape.value(structure);

  if (config_.denoise) {
    const DenoiseResult dn = denoise(tape, point_mlp_, structure, g.offsets, valid);
    structure = dn.structure;
    if (dump) dump->scores = tape.value(dn.scores);
  }
  if (dump) dump->structure = tape.value(structure);

  const Var kernels = make_structure_kernel(tape, kernel_mlp_, structure, config_.channels);
  // embed each point once, then gather per slot
  const Var embedded = nn::gather_rows(tape, feature_mlp_.forward(tape, features), g.nbr.neighbors);
  const KernelUpdate up = apply_structure_kernel_embedded(tape, kernels, g.offsets, embedded);

  const Var pooled = config_.aggregation == Aggregation::Max ? nn::segment_max(tape, up.updated, k_, valid)
                                                             : nn::segment_mean(tape, up.updated, k_, valid);
  Var out = pooled;
  Var context;
  if (config_.ncp) {
    context = ncp::overlap_context(tape, up.updated, g.nbr, g.nbr.centers, g.points());
    out = ncp::context_fuse(tape, fuse_mlp_, context, pooled);
  }

  if (dump) {
    dump->kernels = tape.value(kernels);
    dump->position = tape.value(up.position);
    dump->embedded = tape.value(up.embedded);
    dump->updated = tape.value(up.updated);
    dump->pooled = tape.value(pooled);
    if (config_.ncp) dump->context = tape.value(context);
    dump->output = tape.value(out);
  }
  return out;
}

Matrix x3d_block_forward(const X3dBlock& block, const nn::ParamStore& params, const Grouping& grouping,
                         const Matrix& features, X3dIntermediates* dump) {
  Tape tape(&params, false);
  const Var out = block.forward(tape, grouping, tape.input(features), dump);
  return tape.value(out);
}

}  // namespace x3d::layer
