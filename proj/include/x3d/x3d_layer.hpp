#pragma once

// Explicit-structure block. Per region i:
//   ES_i      explicit descriptor of the center-relative neighbors
//   F_i       = mlp_es(ES_i)
//   s_ij      = softmax_j(mlp_pt(q_ij) . F_i)              (denoise, optional)
//   F_i      += sum_j s_ij mlp_pt(q_ij)
//   W_i       = reshape(mlp_kernel(F_i), C x 3)            one kernel per region
//   u_ij      = W_i (p_i - p_ij) + mlp_feat(f_ij)
//   LS_i      = maxpool_j u_ij
//   out_i     = mlp_fuse([context_i, LS_i])                (NCP, optional)
// where q_ij = p_ij - p_i is the stored offset.

#include "x3d/explicit_structures.hpp"
#include "x3d/mlp.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace x3d::layer {

enum class Aggregation { Max, Mean };

struct X3dConfig {
  es::Kind es_kind = es::Kind::PH;
  /// Replace the explicit descriptor with a learned max-pooled MLP over offsets.
  bool implicit_structure = false;
  bool denoise = true;
  bool ncp = true;
  Aggregation aggregation = Aggregation::Max;
  Index channels = 64;  // C

  nn::LayerSpec es_mlp;       // descriptor (or 3, if implicit) -> D_s
  nn::LayerSpec point_mlp;    // 3 -> D_s
  nn::LayerSpec kernel_mlp;   // D_s -> 3C
  nn::LayerSpec feature_mlp;  // C_in -> C
  nn::LayerSpec fuse_mlp;     // 2C -> C_out

  /// Two-layer MLPs with `hidden` units everywhere.
  static X3dConfig standard(Index in_channels, Index channels, Index struct_dim, Index hidden,
                            es::Kind kind, Index k, bool normalize = false);

  Index in_channels() const { return feature_mlp.in_dim(); }
  Index out_channels() const { return ncp ? fuse_mlp.out_dim() : channels; }
  void validate(Index k) const;
};

/// Everything the block computed for one forward pass, for dumps and probes.
struct X3dIntermediates {
  Matrix descriptors;  // M x D_es (empty when implicit)
  Matrix structure0;   // F before denoising
  Matrix scores;       // (M*k) x 1
  Matrix structure;    // F after denoising
  Matrix kernels;      // M x 3C
  Matrix position;     // (M*k) x C, W_i (p_i - p_ij)
  Matrix embedded;     // (M*k) x C, mlp_feat(f_ij)
  Matrix updated;      // (M*k) x C
  Matrix pooled;       // M x C
  Matrix context;      // M x C (NCP only)
  Matrix output;       // M x C_out
};

// Stage functions. `valid` are per-region valid counts.

nn::Var extract_structure_feature(nn::Tape& tape, const nn::Mlp& es_mlp, const Matrix& descriptors);

struct DenoiseResult {
  nn::Var structure;
  nn::Var scores;
};
DenoiseResult denoise(nn::Tape& tape, const nn::Mlp& point_mlp, nn::Var structure, const Offsets& offsets,
                      std::span<const Index> valid);

nn::Var make_structure_kernel(nn::Tape& tape, const nn::Mlp& kernel_mlp, nn::Var structure, Index channels);

struct KernelUpdate {
  nn::Var position;
  nn::Var embedded;
  nn::Var updated;
};
/// `neighbor_features` holds f_ij, one row per (region, slot).
KernelUpdate apply_structure_kernel(nn::Tape& tape, nn::Var kernels, const Offsets& offsets,
                                    nn::Var neighbor_features, const nn::Mlp& feature_mlp);
/// Same update with mlp_feat(f_ij) already computed (the block embeds each
/// point once and gathers, which is row-for-row the same map).
KernelUpdate apply_structure_kernel_embedded(nn::Tape& tape, nn::Var kernels, const Offsets& offsets,
                                             nn::Var embedded);

class X3dBlock {
 public:
  X3dBlock(std::string prefix, X3dConfig config, Index k);

  const X3dConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  const nn::Mlp& es_mlp() const { return es_mlp_; }
  const nn::Mlp& point_mlp() const { return point_mlp_; }
  const nn::Mlp& kernel_mlp() const { return kernel_mlp_; }
  const nn::Mlp& feature_mlp() const { return feature_mlp_; }
  const nn::Mlp& fuse_mlp() const { return fuse_mlp_; }

  void register_params(nn::ParamStore& store) const;
  void init_params(nn::ParamStore& store, std::mt19937_64& rng) const;

  /// features: N x C_in over grouping.coords. Returns M x C_out.
  nn::Var forward(nn::Tape& tape, const Grouping& grouping, nn::Var features,
                  X3dIntermediates* dump = nullptr) const;

 private:
  std::string prefix_;
  X3dConfig config_;
  Index k_;
  nn::Mlp es_mlp_, point_mlp_, kernel_mlp_, feature_mlp_, fuse_mlp_;
};

/// Convenience: forward with a non-recording tape.
Matrix x3d_block_forward(const X3dBlock& block, const nn::ParamStore& params, const Grouping& grouping,
                         const Matrix& features, X3dIntermediates* dump = nullptr);

}  // namespace x3d::layer
