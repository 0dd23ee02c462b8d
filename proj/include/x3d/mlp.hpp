#pragma once

// Dense layers on top of the tape, plus SGD and parameter checkpoints.

#include "x3d/autodiff.hpp"

#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace x3d::nn {

enum class Activation { None, Relu };

struct DenseSpec {
  Index in = 0;
  Index out = 0;
  Activation activation = Activation::None;
  bool normalize = false;  // standardize pre-activations over rows
};

struct LayerSpec {
  std::vector<DenseSpec> layers;

  Index in_dim() const { return layers.empty() ? 0 : layers.front().in; }
  Index out_dim() const { return layers.empty() ? 0 : layers.back().out; }
  /// Throws ShapeError unless consecutive layers chain.
  void validate() const;

  /// in -> hidden... -> out; relu between layers, none on the output.
  static LayerSpec chain(std::vector<Index> widths, bool normalize_hidden = false);
};

/// A named MLP: layer l owns parameters "<prefix>.<l>.weight" (in x out) and
/// "<prefix>.<l>.bias" (1 x out). Rows of the input are samples.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, LayerSpec spec);

  const std::string& prefix() const { return prefix_; }
  const LayerSpec& spec() const { return spec_; }
  Index in_dim() const { return spec_.in_dim(); }
  Index out_dim() const { return spec_.out_dim(); }

  void register_params(ParamStore& store) const;
  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  void init_params(ParamStore& store, std::mt19937_64& rng) const;

  Var forward(Tape& tape, Var x) const;

  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;

 private:
  std::string prefix_;
  LayerSpec spec_;
};

/// Convenience wrapper: run `spec` on x with parameters from `params`.
Matrix mlp_forward(const Mlp& mlp, const ParamStore& params, const Matrix& x);

struct SgdState {
  Vector velocity;
};

/// v <- momentum * v + g; theta <- theta - lr * v.
/// Throws NumericError naming the first non-finite gradient entry.
void sgd_step(ParamStore& params, const Vector& grads, double lr, double momentum, SgdState& state);

// X3CK little-endian checkpoint:
//   char[4] "X3CK" | u32 entry count | per entry: u32 name length, name bytes,
//   u32 rows, u32 cols | u64 value count | f64 values (layout order)
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
void encode_checkpoint(std::ostream& out, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);
ParamStore decode_checkpoint(std::istream& in);

}  // namespace x3d::nn
