#pragma once

// Matrix-valued reverse-mode differentiation.
//
// A Tape records each primitive op with its forward value and a closure that
// propagates the output gradient to its parents. Backward walks the records in
// reverse creation order, which is a valid topological order because every op
// only refers to earlier records.
//
// Each op also adds its forward FLOP count (multiply-accumulate = 2) to the
// tape counter; metrics::flops_estimate models the same rules in closed form.

#include "x3d/core_geometry.hpp"

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace x3d::nn {

struct ParamEntry {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
};

/// Flat parameter vector with a named layout. Each entry is a row-major
/// rows x cols block; entries tile the vector in registration order.
class ParamStore {
 public:
  Index add(std::string name, Index rows, Index cols);
  bool contains(std::string_view name) const;
  const ParamEntry& entry(std::string_view name) const;
  const std::vector<ParamEntry>& layout() const { return layout_; }

  Eigen::Map<Matrix> matrix(std::string_view name);
  Eigen::Map<const Matrix> matrix(std::string_view name) const;

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }
  Index size() const { return values_.size(); }

  /// Throws StateError if the layout does not tile the vector exactly once,
  /// NumericError on non-finite values.
  void validate() const;

 private:
  std::vector<ParamEntry> layout_;
  std::unordered_map<std::string, std::size_t> index_;
  Vector values_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

struct Gradients {
  Vector params;              // aligned with ParamStore::values()
  std::vector<Matrix> inputs; // one per Tape::input, in creation order
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad)>;

  /// `params` may be null when no Tape::param leaf is used. With
  /// `record_backward` false, closures are dropped (inference only).
  explicit Tape(const ParamStore* params = nullptr, bool record_backward = true);

  Var constant(Matrix value);
  Var input(Matrix value);
  Var param(std::string_view name);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const;
  Index rows(Var v) const { return value(v).rows(); }
  Index cols(Var v) const { return value(v).cols(); }

  /// Record an op. `backward` runs only if the result requires a gradient.
  Var push(Matrix value, std::initializer_list<Var> parents, BackwardFn backward, double flops);

  /// Zero-initialized gradient buffer of a parent, for use inside closures.
  Matrix& grad_buffer(Var v);

  /// grad(v) += delta; the first contribution is assigned, skipping the zero fill.
  template <class Expr>
  void accumulate(Var v, const Expr& delta) {
    Node& n = nodes_[v.id];
    if (n.has_grad) {
      n.grad.noalias() += delta;
    } else {
      n.grad.noalias() = delta;
      n.has_grad = true;
    }
  }

  /// Reverse pass from `out` seeded with `out_grad`. A tape runs backward once.
  Gradients backward(Var out, const Matrix& out_grad);

  double flops() const { return flops_; }
  void add_flops(double f) { flops_ += f; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  bool recording() const { return record_; }
  const ParamStore* params() const { return params_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    int param_entry = -1;
    int input_slot = -1;
  };

  const Node& node(Var v) const;

  const ParamStore* params_;
  bool record_;
  bool consumed_ = false;
  double flops_ = 0.0;
  int inputs_ = 0;
  std::vector<Node> nodes_;
};

// Primitive ops. Shapes are checked; mismatches throw ShapeError.

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
/// x + broadcast of a 1 x C row.
Var add_row(Tape& t, Var x, Var row);
Var scale(Tape& t, Var x, double s);
Var relu(Tape& t, Var x);
Var concat_cols(Tape& t, Var a, Var b);
/// Output row r is input row index[r].
Var gather_rows(Tape& t, Var x, std::span<const Index> index);
/// Per-row inner product, r x 1.
Var row_dot(Tape& t, Var a, Var b);
/// Row r of x scaled by s(r, 0).
Var scale_rows(Tape& t, Var x, Var s);
/// Per-column standardization over rows (zero mean, unit variance).
Var standardize(Tape& t, Var x, double eps = 1e-5);

// Segment ops: x has M*k rows grouped by region; only the first valid[i] rows
// of region i participate.

/// Column-wise softmax inside each segment; padded rows get weight 0.
Var segment_softmax(Tape& t, Var x, Index k, std::span<const Index> valid);
/// Column-wise max per segment (M x C). Ties go to the lowest row.
Var segment_max(Tape& t, Var x, Index k, std::span<const Index> valid);
Var segment_sum(Tape& t, Var x, Index k, std::span<const Index> valid);
Var segment_mean(Tape& t, Var x, Index k, std::span<const Index> valid);

/// kernels: M x 3C, row i is region i's C x 3 kernel in row-major order.
/// q: (M*k) x 3. Row r of the result is kernel(r / k) * q.row(r)^T.
Var kernel_apply(Tape& t, Var kernels, const Matrix& q, Index k);
/// The single region whose kernel kernel_apply reads for neighbor row `row`.
inline Index kernel_region_for_row(Index row, Index k) { return row / k; }

using KernelMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
/// Region i's kernel reshaped to C x 3.
KernelMatrix region_kernel(const Matrix& kernels, Index region);

/// x: R x (r*C) blocks, h: R x r weights; out(R, c) = sum_b h(R, b) * x(R, b*C + c).
Var blend_blocks(Tape& t, Var x, const Matrix& h);

Var sum_all(Tape& t, Var x);
/// Sum of weights .* x, for projecting a matrix output to a scalar loss.
Var weighted_sum(Tape& t, Var x, const Matrix& weights);
/// Mean softmax cross-entropy over rows of logits.
Var cross_entropy(Tape& t, Var logits, std::span<const int> labels);

// Standalone helpers.

/// Max-subtracted softmax.
Vector softmax(const Eigen::Ref<const Vector>& x);

struct MaxPoolResult {
  Vector values;
  std::vector<Index> argmax;
};
/// Column-wise max over the first `valid` rows; ties go to the lowest row.
MaxPoolResult maxpool_rows(const Eigen::Ref<const Matrix>& x, Index valid);

}  // namespace x3d::nn
