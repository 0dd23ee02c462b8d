#pragma once

// Implicit-structure baselines: each neighbor gets its own relation vector and
// (for the dynamic-kernel kinds) its own kernel, then regions are max-pooled
// or attention-weighted.

#include "x3d/mlp.hpp"

#include <random>
#include <string>
#include <string_view>

namespace x3d::ihsm {

enum class RelationKind { PNPP, RANDLA, GAM };

std::string_view to_string(RelationKind kind);
RelationKind parse_relation(std::string_view name);
Index relation_dim(RelationKind kind);

/// One row per (region, slot), computed from d = p_i - p_ij:
///   PNPP   d
///   RANDLA (d, p_i, p_ij, |d|^2)
///   GAM    (d_z / |d|^2 * (d_x + d_y) / sqrt(d_x^2 + d_y^2), |d|^2), first term 0 when
///          either denominator vanishes
Matrix relation_vector(RelationKind kind, const Grouping& grouping);

/// Fixed kernel points on a sphere of radius 0.75 * sigma.
struct KernelPointSet {
  Coords points;  // r x 3
  double sigma = 1.0;

  Index size() const { return points.rows(); }
};

KernelPointSet make_kernel_points(Index r, double sigma, std::uint64_t seed);

/// max(0, 1 - d / sigma).
double kernel_influence(double distance, double sigma);

/// (M*k) x r correlation weights between each offset (neighbor - center) and each kernel point.
Matrix kernel_correlation(const KernelPointSet& kps, const Offsets& offsets);

enum class BlockKind { SharedMlp, RsConv, KpConv, VectorAttention, ScalarAttention };

std::string_view to_string(BlockKind kind);
BlockKind parse_block_kind(std::string_view name);

// Embedding stages. Row r of every per-slot input belongs to region r / k.

/// mlp_rel(V) + embedded features.
nn::Var shared_mlp_embed(nn::Tape& tape, const nn::Mlp& rel_mlp, const Matrix& relation, nn::Var nbr_embedded);

/// mlp_out(mlp_kernel(V) * f), with the elementwise kernel returned through `kernels`.
nn::Var rsconv_embed(nn::Tape& tape, const nn::Mlp& kernel_mlp, const nn::Mlp& out_mlp, const Matrix& relation,
                     nn::Var nbr_features, nn::Var* kernels = nullptr);

/// f_ij * sum_k h_k G_k. `weights` is C_in x (r * C_out), block k holding G_k.
nn::Var kpconv_embed(nn::Tape& tape, nn::Var weights, const Matrix& correlation, nn::Var nbr_features);

struct VectorAttentionParts {
  const nn::Mlp* relation;  // f_i - f_ij -> C
  const nn::Mlp* position;  // p_i - p_ij -> C
  const nn::Mlp* value;     // f_ij -> C
};
struct AttentionResult {
  nn::Var output;   // M x C
  nn::Var weights;  // (M*k) x C, or (M*k) x 1 for scalar attention
};
/// logits = relation(f_i - f_ij) + position(p_i - p_ij), softmax over j per
/// channel, out_i = sum_j w_ij * (value(f_ij) + position(p_i - p_ij)).
AttentionResult vector_attention_embed(nn::Tape& tape, const VectorAttentionParts& parts, const Grouping& grouping,
                                       nn::Var features);

/// q = f W_q, k = f W_k, v = f W_v; w_ij = softmax_j(q_i . k_j / sqrt(C)); out_i = sum_j w_ij v_j.
AttentionResult scalar_attention_embed(nn::Tape& tape, const nn::Mlp& query, const nn::Mlp& key,
                                       const nn::Mlp& value, const Grouping& grouping, nn::Var features);

struct IhsmConfig {
  BlockKind kind = BlockKind::SharedMlp;
  RelationKind relation = RelationKind::PNPP;
  Index in_channels = 3;
  Index channels = 64;
  Index hidden = 64;
  bool normalize = false;
  Index kernel_points = 15;
  double kernel_sigma = 0.25;
  std::uint64_t kernel_seed = 7;
};

struct IhsmIntermediates {
  Matrix relation;  // (M*k) x d
  Matrix kernels;   // one row per slot: the per-neighbor kernel (flattened) or attention weights
  Matrix embedded;  // (M*k) x C, pre-aggregation (empty for attention kinds)
  Matrix output;    // M x C
};

class IhsmBlock {
 public:
  IhsmBlock(std::string prefix, IhsmConfig config);

  const IhsmConfig& config() const { return config_; }
  const KernelPointSet& kernel_points() const { return kps_; }
  Index out_channels() const { return config_.channels; }

  void register_params(nn::ParamStore& store) const;
  void init_params(nn::ParamStore& store, std::mt19937_64& rng) const;

  /// features: N x C_in over grouping.coords. Returns M x C.
  nn::Var forward(nn::Tape& tape, const Grouping& grouping, nn::Var features,
                  IhsmIntermediates* dump = nullptr) const;

  std::string kpconv_weight_name() const { return prefix_ + ".kp.weight"; }

 private:
  std::string prefix_;
  IhsmConfig config_;
  KernelPointSet kps_;
  nn::Mlp a_, b_, c_;  // role depends on kind
};

Matrix ihsm_block_forward(const IhsmBlock& block, const nn::ParamStore& params, const Grouping& grouping,
                          const Matrix& features, IhsmIntermediates* dump = nullptr);

}  // namespace x3d::ihsm
