#include "x3d/harness/model.hpp"

#include "x3d/error.hpp"

namespace x3d::harness {

void ModelSpec::validate() const {
  if (struct_dim < 1 || channels < 1 || hidden < 1 || blocks < 1 || k < 1 || centers < 1)
    throw ConfigError("model: all widths and counts must be >= 1");
  if (!is_x3d()) {
    const auto kind = ihsm::parse_block_kind(block);
    (void)kind;
  }
  if (blocks > 1 && k > centers) throw ConfigError("model: k must not exceed centers when stacking blocks");
}

SampleGeometry make_geometry(const Coords& coords, Index centers, Index k) {
  const PointCloud cloud(coords);
  SampleGeometry g;
  const auto picks = farthest_point_sample(cloud, centers, 0);
  // Block 1 only ever reads points inside some neighborhood, so the cloud is
  // compacted to those (ascending original order) and the indices remapped.
  NeighborhoodIndex nbr = knn_query(cloud, picks, k);
  std::vector<Index> remap(static_cast<std::size_t>(coords.rows()), -1);
  for (Index idx : nbr.neighbors) remap[idx] = 0;
  for (Index idx : nbr.centers) remap[idx] = 0;
  for (Index i = 0; i < coords.rows(); ++i)
    if (remap[i] == 0) {
      remap[i] = static_cast<Index>(g.level0_source.size());
      g.level0_source.push_back(i);
    }
  Coords used(static_cast<Index>(g.level0_source.size()), 3);
  for (std::size_t r = 0; r < g.level0_source.size(); ++r) used.row(static_cast<Index>(r)) = coords.row(g.level0_source[r]);
  for (Index& idx : nbr.neighbors) idx = remap[idx];
  for (Index& idx : nbr.centers) idx = remap[idx];
  g.level0 = make_grouping(std::move(used), std::move(nbr));
  Coords sampled(centers, 3);
  for (Index i = 0; i < centers; ++i) sampled.row(i) = coords.row(picks[i]);
  const PointCloud sub(sampled);
  const Index k1 = std::min(k, centers);
  g.level1 = make_grouping(sampled, knn_query(sub, iota_indices(centers), k1));
  return g;
}

layer::X3dConfig x3d_block_config(const ModelSpec& s, Index in_channels) {
  auto c = layer::X3dConfig::standard(in_channels, s.channels, s.struct_dim, s.hidden, s.es_kind, s.k, s.normalize);
  c.implicit_structure = s.implicit_structure;
  if (s.implicit_structure) c.es_mlp = nn::LayerSpec::chain({3, s.hidden, s.struct_dim}, s.normalize);
  c.denoise = s.denoise;
  c.ncp = s.ncp;
  c.aggregation = s.aggregation;
  return c;
}

ihsm::IhsmConfig ihsm_block_config(const ModelSpec& s, Index in_channels) {
  ihsm::IhsmConfig c;
  c.kind = ihsm::parse_block_kind(s.block);
  c.relation = s.relation;
  c.in_channels = in_channels;
  c.channels = s.channels;
  c.hidden = s.hidden;
  c.normalize = s.normalize;
  return c;
}

Classifier::Classifier(ModelSpec spec, Index classes) : spec_(std::move(spec)), classes_(classes) {
  spec_.validate();
  if (classes_ < 2) throw ConfigError("model: need at least two classes");
  for (Index b = 0; b < spec_.blocks; ++b) {
    const Index in = b == 0 ? 3 : spec_.channels;
    const std::string prefix = "block" + std::to_string(b);
    const Index k = b == 0 ? spec_.k : std::min(spec_.k, spec_.centers);
    if (spec_.is_x3d())
      blocks_.emplace_back(std::in_place_type<layer::X3dBlock>, prefix, x3d_block_config(spec_, in), k);
    else
      blocks_.emplace_back(std::in_place_type<ihsm::IhsmBlock>, prefix, ihsm_block_config(spec_, in));
  }
  head_ = nn::Mlp("head", nn::LayerSpec::chain({spec_.channels, classes_}));
}

void Classifier::register_params(nn::ParamStore& store) const {
  for (const auto& b : blocks_) std::visit([&](const auto& blk) { blk.register_params(store); }, b);
  head_.register_params(store);
}

void Classifier::init_params(nn::ParamStore& store, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  for (const auto& b : blocks_) {
    std::mt19937_64 sub(rng());
    std::visit([&](const auto& blk) { blk.init_params(store, sub); }, b);
  }
  std::mt19937_64 head_rng(rng());
  head_.init_params(store, head_rng);
}

nn::ParamStore Classifier::make_params(std::uint64_t seed) const {
  nn::ParamStore store;
  register_params(store);
  init_params(store, seed);
  return store;
}

nn::Var Classifier::forward(nn::Tape& tape, const SampleGeometry& geom, ModelDump* dump) const {
  nn::Var x = tape.constant(Matrix(geom.level0.coords));
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Grouping& g = b == 0 ? geom.level0 : geom.level1;
    if (const auto* xb = std::get_if<layer::X3dBlock>(&blocks_[b])) {
      layer::X3dIntermediates inter;
      x = xb->forward(tape, g, x, dump ? &inter : nullptr);
      if (dump) dump->x3d.push_back(std::move(inter));
    } else {
      const auto& ib = std::get<ihsm::IhsmBlock>(blocks_[b]);
      ihsm::IhsmIntermediates inter;
      x = ib.forward(tape, g, x, dump ? &inter : nullptr);
      if (dump) dump->ihsm.push_back(std::move(inter));
    }
    if (dump) dump->block_outputs.push_back(tape.value(x));
  }
  const Index m = tape.rows(x);
  const std::vector<Index> all{m};
  const nn::Var global = nn::segment_max(tape, x, m, all);
  const nn::Var logits = head_.forward(tape, global);
  if (dump) dump->logits = tape.value(logits);
  return logits;
}

Matrix Classifier::predict(const nn::ParamStore& params, const SampleGeometry& geom, ModelDump* dump) const {
  nn::Tape tape(&params, false);
  return tape.value(forward(tape, geom, dump));
}

}  // namespace x3d::harness
