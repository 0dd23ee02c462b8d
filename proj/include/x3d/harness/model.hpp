#pragma once

// Point-cloud classifier: a stack of local blocks, global max-pool, linear head.
//
// Block 1 aggregates the kNN neighborhoods of `centers` FPS samples (the
// cloud compacted to the points those neighborhoods touch); later blocks
// regroup the sampled points among themselves (every point a center), so all
// block outputs live on the same sampled point set.

#include "x3d/baselines.hpp"
#include "x3d/x3d_layer.hpp"

#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace x3d::harness {

struct ModelSpec {
  std::string block = "x3d";  // x3d or an implicit-structure block kind
  es::Kind es_kind = es::Kind::PH;
  bool implicit_structure = false;
  Index struct_dim = 32;
  Index channels = 64;
  Index hidden = 64;
  Index blocks = 2;
  Index k = 16;
  Index centers = 64;
  bool ncp = true;
  bool denoise = true;
  bool normalize = true;
  layer::Aggregation aggregation = layer::Aggregation::Max;
  ihsm::RelationKind relation = ihsm::RelationKind::PNPP;

  bool is_x3d() const { return block == "x3d"; }
  void validate() const;
};

struct SampleGeometry {
  Grouping level0;  // points inside some FPS-centered neighborhood
  std::vector<Index> level0_source;  // level0 row -> row of the original cloud
  Grouping level1;  // sampled points, all centers
};

SampleGeometry make_geometry(const Coords& coords, Index centers, Index k);

struct ModelDump {
  std::vector<Matrix> block_outputs;  // each M x C over level1 points
  std::vector<layer::X3dIntermediates> x3d;
  std::vector<ihsm::IhsmIntermediates> ihsm;
  Matrix logits;
};

using AnyBlock = std::variant<layer::X3dBlock, ihsm::IhsmBlock>;

/// Configuration of the b-th block (0-based) of a model.
layer::X3dConfig x3d_block_config(const ModelSpec& spec, Index in_channels);
ihsm::IhsmConfig ihsm_block_config(const ModelSpec& spec, Index in_channels);

class Classifier {
 public:
  Classifier(ModelSpec spec, Index classes);

  const ModelSpec& spec() const { return spec_; }
  Index classes() const { return classes_; }
  const std::vector<AnyBlock>& blocks() const { return blocks_; }

  void register_params(nn::ParamStore& store) const;
  void init_params(nn::ParamStore& store, std::uint64_t seed) const;
  nn::ParamStore make_params(std::uint64_t seed) const;

  /// 1 x classes logits. Input features are the raw coordinates.
  nn::Var forward(nn::Tape& tape, const SampleGeometry& geom, ModelDump* dump = nullptr) const;

  Matrix predict(const nn::ParamStore& params, const SampleGeometry& geom, ModelDump* dump = nullptr) const;

 private:
  ModelSpec spec_;
  Index classes_;
  std::vector<AnyBlock> blocks_;
  nn::Mlp head_;
};

}  // namespace x3d::harness
