#include "x3d/autodiff.hpp"

#include "x3d/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace x3d::nn {

// ---------------------------------------------------------------- ParamStore

Index ParamStore::add(std::string name, Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw ShapeError("parameter '" + name + "' needs positive shape");
  if (index_.count(name)) throw StateError("parameter '" + name + "' registered twice");
  const Index offset = values_.size();
  values_.conservativeResize(offset + rows * cols);
  values_.segment(offset, rows * cols).setZero();
  index_.emplace(name, layout_.size());
  layout_.push_back({std::move(name), offset, rows, cols});
  return offset;
}

bool ParamStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

const ParamEntry& ParamStore::entry(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw StateError("unknown parameter '" + std::string(name) + "'");
  return layout_[it->second];
}

Eigen::Map<Matrix> ParamStore::matrix(std::string_view name) {
  const ParamEntry& e = entry(name);
  return {values_.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<const Matrix> ParamStore::matrix(std::string_view name) const {
  const ParamEntry& e = entry(name);
  return {values_.data() + e.offset, e.rows, e.cols};
}

void ParamStore::validate() const {
  Index cursor = 0;
  for (const ParamEntry& e : layout_) {
    if (e.offset != cursor) throw StateError("parameter layout has a gap or overlap at " + e.name);
    cursor += e.size();
  }
  if (cursor != values_.size()) throw StateError("parameter layout does not cover the vector");
  if (!values_.allFinite()) throw NumericError("parameter vector contains non-finite values");
}

// ---------------------------------------------------------------------- Tape

namespace {

// Tapes allocate and free many mid-sized matrices per sample. With glibc's
// default thresholds those go through mmap/munmap and page-fault on every
// touch, which costs more than the arithmetic. Keep them on the heap instead.
void keep_allocations_on_heap() {
#ifdef __GLIBC__
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

Tape::Tape(const ParamStore* params, bool record_backward) : params_(params), record_(record_backward) {
  keep_allocations_on_heap();
  nodes_.reserve(256);
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw StateError("variable not on this tape");
  return nodes_[v.id];
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  n.input_slot = inputs_++;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(std::string_view name) {
  if (!params_) throw StateError("tape has no parameter store");
  const ParamEntry& e = params_->entry(name);
  Node n;
  n.value = params_->matrix(name);
  n.requires_grad = record_;
  n.param_entry = static_cast<int>(&e - params_->layout().data());
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Var Tape::push(Matrix value, std::initializer_list<Var> parents, BackwardFn backward, double flops) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  flops_ += flops;
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (Var p : parents) n.requires_grad = n.requires_grad || node(p).requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Gradients Tape::backward(Var out, const Matrix& out_grad) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  if (!record_) throw StateError("tape was created without backward recording");
  const Node& o = node(out);
  if (out_grad.rows() != o.value.rows() || out_grad.cols() != o.value.cols()) {
    throw ShapeError("backward: seed gradient shape does not match output");
  }
  consumed_ = true;
  grad_buffer(out) += out_grad;
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }

  Gradients g;
  g.params = params_ ? Vector::Zero(params_->size()) : Vector();
  g.inputs.resize(static_cast<std::size_t>(inputs_));
  for (Node& n : nodes_) {
    if (n.input_slot >= 0) {
      g.inputs[n.input_slot] = n.has_grad ? n.grad : Matrix::Zero(n.value.rows(), n.value.cols());
    }
    if (n.param_entry >= 0 && n.has_grad) {
      const ParamEntry& e = params_->layout()[n.param_entry];
      Eigen::Map<Matrix>(g.params.data() + e.offset, e.rows, e.cols) += n.grad;
    }
  }
  return g;
}

// ----------------------------------------------------------------------- ops

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

void require_segments(const Matrix& x, Index k, std::span<const Index> valid, const char* op) {
  if (k < 1 || x.rows() != k * static_cast<Index>(valid.size())) {
    throw ShapeError(std::string(op) + ": rows do not match regions * k");
  }
  for (Index v : valid) {
    if (v < 1 || v > k) throw ShapeError(std::string(op) + ": valid count outside [1, k]");
  }
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) + " * " +
                     std::to_string(B.rows()) + "x" + std::to_string(B.cols()));
  }
  Matrix out = A * B;
  const double flops = 2.0 * A.rows() * A.cols() * B.cols();
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  }, flops);
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  Matrix out = t.value(a) + t.value(b);
  const double flops = static_cast<double>(out.size());
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, g);
  }, flops);
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "sub");
  Matrix out = t.value(a) - t.value(b);
  const double flops = static_cast<double>(out.size());
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.grad_buffer(b) -= g;
  }, flops);
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "mul");
  Matrix out = t.value(a).cwiseProduct(t.value(b));
  const double flops = static_cast<double>(out.size());
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  }, flops);
}

Var add_row(Tape& t, Var x, Var row) {
  const Matrix& X = t.value(x);
  const Matrix& R = t.value(row);
  if (R.rows() != 1 || R.cols() != X.cols()) throw ShapeError("add_row: row must be 1 x cols(x)");
  Matrix out = X.rowwise() + R.row(0);
  const double flops = static_cast<double>(out.size());
  return t.push(std::move(out), {x, row}, [x, row](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(x)) tp.accumulate(x, g);
    if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
  }, flops);
}

Var scale(Tape& t, Var x, double s) {
  Matrix out = t.value(x) * s;
  const double flops = static_cast<double>(out.size());
  return t.push(std::move(out), {x}, [x, s](Tape& tp, const Matrix& g) {
    tp.accumulate(x, g * s);
  }, flops);
}

Var relu(Tape& t, Var x) {
  Matrix out = t.value(x).cwiseMax(0.0);
  const double flops = static_cast<double>(out.size());
  return t.push(std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
    const Matrix& X = tp.value(x);
    tp.accumulate(x, (X.array() > 0.0).select(g, 0.0));
  }, flops);
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.rows() != B.rows()) throw ShapeError("concat_cols: row counts differ");
  Matrix out(A.rows(), A.cols() + B.cols());
  out << A, B;
  const Index ca = A.cols();
  const Index cb = B.cols();
  return t.push(std::move(out), {a, b}, [a, b, ca, cb](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.leftCols(ca));
    if (tp.requires_grad(b)) tp.accumulate(b, g.rightCols(cb));
  }, 0.0);
}

Var gather_rows(Tape& t, Var x, std::span<const Index> index) {
  const Matrix& X = t.value(x);
  Matrix out(static_cast<Index>(index.size()), X.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= X.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(r)) = X.row(index[r]);
  }
  std::vector<Index> idx(index.begin(), index.end());
  return t.push(std::move(out), {x}, [x, idx = std::move(idx)](Tape& tp, const Matrix& g) {
    Matrix& gx = tp.grad_buffer(x);
    for (std::size_t r = 0; r < idx.size(); ++r) gx.row(idx[r]) += g.row(static_cast<Index>(r));
  }, 0.0);
}

Var row_dot(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "row_dot");
  Matrix out = t.value(a).cwiseProduct(t.value(b)).rowwise().sum();
  const double flops = 2.0 * static_cast<double>(t.value(a).size());
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, (tp.value(b).array().colwise() * g.col(0).array()).matrix());
    if (tp.requires_grad(b)) tp.accumulate(b, (tp.value(a).array().colwise() * g.col(0).array()).matrix());
  }, flops);
}

Var scale_rows(Tape& t, Var x, Var s) {
  const Matrix& X = t.value(x);
  const Matrix& S = t.value(s);
  if (S.cols() != 1 || S.rows() != X.rows()) throw ShapeError("scale_rows: scale must be rows(x) x 1");
  Matrix out = X.array().colwise() * S.col(0).array();
  const double flops = static_cast<double>(out.size());
  return t.push(std::move(out), {x, s}, [x, s](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(x)) tp.accumulate(x, (g.array().colwise() * tp.value(s).col(0).array()).matrix());
    if (tp.requires_grad(s)) tp.accumulate(s, g.cwiseProduct(tp.value(x)).rowwise().sum());
  }, flops);
}

namespace {

// Column sums of a row-major matrix, accumulated row by row so the inner loop is contiguous.
Eigen::RowVectorXd column_sums(const Matrix& x) {
  Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(x.cols());
  for (Index r = 0; r < x.rows(); ++r) s += x.row(r);
  return s;
}

}  // namespace

Var standardize(Tape& t, Var x, double eps) {
  const Matrix& X = t.value(x);
  const double n = static_cast<double>(X.rows());
  const Eigen::RowVectorXd mean = column_sums(X) / n;
  Matrix out = X.rowwise() - mean;
  Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(X.cols());
  for (Index r = 0; r < out.rows(); ++r) var += out.row(r).cwiseAbs2();
  const Eigen::RowVectorXd inv_std = ((var.array() / n) + eps).sqrt().inverse().matrix();
  for (Index r = 0; r < out.rows(); ++r) out.row(r).array() *= inv_std.array();
  const double flops = 5.0 * static_cast<double>(X.size());
  Matrix kept = out;
  return t.push(std::move(out), {x}, [x, y = std::move(kept), inv_std, n](Tape& tp, const Matrix& g) {
    // dx = inv_std * (g - mean(g) - y * mean(g .* y))
    Eigen::RowVectorXd gm = Eigen::RowVectorXd::Zero(g.cols()), gym = gm;
    for (Index r = 0; r < g.rows(); ++r) {
      gm += g.row(r);
      gym += g.row(r).cwiseProduct(y.row(r));
    }
    gm /= n;
    gym /= n;
    Matrix dx(g.rows(), g.cols());
    for (Index r = 0; r < g.rows(); ++r)
      dx.row(r).array() = (g.row(r).array() - gm.array() - y.row(r).array() * gym.array()) * inv_std.array();
    tp.accumulate(x, dx);
  }, flops);
}

Var segment_softmax(Tape& t, Var x, Index k, std::span<const Index> valid) {
  const Matrix& X = t.value(x);
  require_segments(X, k, valid, "segment_softmax");
  const Index m = static_cast<Index>(valid.size());
  Matrix out = Matrix::Zero(X.rows(), X.cols());
  for (Index i = 0; i < m; ++i) {
    const Index v = valid[i];
    for (Index c = 0; c < X.cols(); ++c) {
      const auto seg = X.col(c).segment(i * k, v);
      const double mx = seg.maxCoeff();
      double sum = 0.0;
      for (Index j = 0; j < v; ++j) {
        const double e = std::exp(seg[j] - mx);
        out(i * k + j, c) = e;
        sum += e;
      }
      out.col(c).segment(i * k, v) /= sum;
    }
  }
  std::vector<Index> vv(valid.begin(), valid.end());
  const double flops = 4.0 * static_cast<double>(X.size());
  return t.push(Matrix(out), {x}, [x, out, k, vv = std::move(vv)](Tape& tp, const Matrix& g) {
    Matrix& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < vv.size(); ++i) {
      const Index base = static_cast<Index>(i) * k;
      const Index v = vv[i];
      for (Index c = 0; c < out.cols(); ++c) {
        double dot = 0.0;
        for (Index j = 0; j < v; ++j) dot += g(base + j, c) * out(base + j, c);
        for (Index j = 0; j < v; ++j) gx(base + j, c) += out(base + j, c) * (g(base + j, c) - dot);
      }
    }
  }, flops);
}

Var segment_max(Tape& t, Var x, Index k, std::span<const Index> valid) {
  const Matrix& X = t.value(x);
  require_segments(X, k, valid, "segment_max");
  const Index m = static_cast<Index>(valid.size());
  Matrix out(m, X.cols());
  std::vector<Index> arg(static_cast<std::size_t>(m * X.cols()));
  for (Index i = 0; i < m; ++i) {
    for (Index c = 0; c < X.cols(); ++c) {
      Index best = i * k;
      for (Index j = 1; j < valid[i]; ++j) {
        if (X(i * k + j, c) > X(best, c)) best = i * k + j;  // strict: lowest row wins ties
      }
      out(i, c) = X(best, c);
      arg[i * X.cols() + c] = best;
    }
  }
  const double flops = static_cast<double>(X.size());
  return t.push(std::move(out), {x}, [x, arg = std::move(arg)](Tape& tp, const Matrix& g) {
    Matrix& gx = tp.grad_buffer(x);
    const Index cols = g.cols();
    for (Index i = 0; i < g.rows(); ++i)
      for (Index c = 0; c < cols; ++c) gx(arg[i * cols + c], c) += g(i, c);
  }, flops);
}

Var segment_sum(Tape& t, Var x, Index k, std::span<const Index> valid) {
  const Matrix& X = t.value(x);
  require_segments(X, k, valid, "segment_sum");
  const Index m = static_cast<Index>(valid.size());
  Matrix out(m, X.cols());
  for (Index i = 0; i < m; ++i) out.row(i) = X.middleRows(i * k, valid[i]).colwise().sum();
  std::vector<Index> vv(valid.begin(), valid.end());
  const double flops = static_cast<double>(X.size());
  return t.push(std::move(out), {x}, [x, k, vv = std::move(vv)](Tape& tp, const Matrix& g) {
    Matrix& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < vv.size(); ++i)
      gx.middleRows(static_cast<Index>(i) * k, vv[i]).rowwise() += g.row(static_cast<Index>(i));
  }, flops);
}

Var segment_mean(Tape& t, Var x, Index k, std::span<const Index> valid) {
  const Matrix& X = t.value(x);
  require_segments(X, k, valid, "segment_mean");
  const Index m = static_cast<Index>(valid.size());
  Matrix out(m, X.cols());
  for (Index i = 0; i < m; ++i) {
    out.row(i) = X.middleRows(i * k, valid[i]).colwise().sum() / static_cast<double>(valid[i]);
  }
  std::vector<Index> vv(valid.begin(), valid.end());
  const double flops = static_cast<double>(X.size() + out.size());
  return t.push(std::move(out), {x}, [x, k, vv = std::move(vv)](Tape& tp, const Matrix& g) {
    Matrix& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < vv.size(); ++i) {
      gx.middleRows(static_cast<Index>(i) * k, vv[i]).rowwise() +=
          g.row(static_cast<Index>(i)) / static_cast<double>(vv[i]);
    }
  }, flops);
}

KernelMatrix region_kernel(const Matrix& kernels, Index region) {
  const Index c_out = kernels.cols() / 3;
  KernelMatrix out(c_out, 3);
  for (Index c = 0; c < c_out; ++c)
    for (int d = 0; d < 3; ++d) out(c, d) = kernels(region, 3 * c + d);
  return out;
}

Var kernel_apply(Tape& t, Var kernels, const Matrix& q, Index k) {
  const Matrix& K = t.value(kernels);
  if (K.cols() % 3 != 0) throw ShapeError("kernel_apply: kernel width must be 3*C");
  if (q.cols() != 3 || q.rows() != K.rows() * k) throw ShapeError("kernel_apply: q must be (M*k) x 3");
  const Index c_out = K.cols() / 3;
  Matrix out(q.rows(), c_out);
  for (Index r = 0; r < q.rows(); ++r) {
    const Index region = kernel_region_for_row(r, k);
    const double q0 = q(r, 0), q1 = q(r, 1), q2 = q(r, 2);
    for (Index c = 0; c < c_out; ++c) {
      out(r, c) = K(region, 3 * c) * q0 + K(region, 3 * c + 1) * q1 + K(region, 3 * c + 2) * q2;
    }
  }
  const double flops = 6.0 * static_cast<double>(q.rows() * c_out);
  return t.push(std::move(out), {kernels}, [kernels, q, k](Tape& tp, const Matrix& g) {
    Matrix& gk = tp.grad_buffer(kernels);
    const Index c_out = g.cols();
    for (Index r = 0; r < g.rows(); ++r) {
      const Index region = kernel_region_for_row(r, k);
      for (Index c = 0; c < c_out; ++c) {
        const double gv = g(r, c);
        gk(region, 3 * c) += gv * q(r, 0);
        gk(region, 3 * c + 1) += gv * q(r, 1);
        gk(region, 3 * c + 2) += gv * q(r, 2);
      }
    }
  }, flops);
}

Var blend_blocks(Tape& t, Var x, const Matrix& h) {
  const Matrix& X = t.value(x);
  const Index r = h.cols();
  if (h.rows() != X.rows() || r < 1 || X.cols() % r != 0) throw ShapeError("blend_blocks: shape mismatch");
  const Index c = X.cols() / r;
  Matrix out = Matrix::Zero(X.rows(), c);
  for (Index b = 0; b < r; ++b) out += (X.middleCols(b * c, c).array().colwise() * h.col(b).array()).matrix();
  const double flops = 2.0 * static_cast<double>(X.size());
  return t.push(std::move(out), {x}, [x, h, r, c](Tape& tp, const Matrix& g) {
    Matrix& gx = tp.grad_buffer(x);
    for (Index b = 0; b < r; ++b) gx.middleCols(b * c, c) += (g.array().colwise() * h.col(b).array()).matrix();
  }, flops);
}

Var sum_all(Tape& t, Var x) {
  Matrix out(1, 1);
  out(0, 0) = t.value(x).sum();
  const double flops = static_cast<double>(t.value(x).size());
  return t.push(std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
    tp.grad_buffer(x).array() += g(0, 0);
  }, flops);
}

Var weighted_sum(Tape& t, Var x, const Matrix& weights) {
  require_same_shape(t.value(x), weights, "weighted_sum");
  Matrix out(1, 1);
  out(0, 0) = t.value(x).cwiseProduct(weights).sum();
  const double flops = 2.0 * static_cast<double>(weights.size());
  return t.push(std::move(out), {x}, [x, weights](Tape& tp, const Matrix& g) {
    tp.accumulate(x, weights * g(0, 0));
  }, flops);
}

Var cross_entropy(Tape& t, Var logits, std::span<const int> labels) {
  const Matrix& L = t.value(logits);
  if (static_cast<Index>(labels.size()) != L.rows()) throw ShapeError("cross_entropy: one label per row");
  Matrix prob(L.rows(), L.cols());
  double loss = 0.0;
  for (Index r = 0; r < L.rows(); ++r) {
    const int y = labels[r];
    if (y < 0 || y >= L.cols()) throw ShapeError("cross_entropy: label out of range");
    const double mx = L.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (L.row(r).array() - mx).exp().matrix();
    const double z = e.sum();
    prob.row(r) = e / z;
    loss += -(L(r, y) - mx - std::log(z));
  }
  const double n = static_cast<double>(L.rows());
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  std::vector<int> y(labels.begin(), labels.end());
  const double flops = 4.0 * static_cast<double>(L.size());
  return t.push(std::move(out), {logits}, [logits, prob, y = std::move(y), n](Tape& tp, const Matrix& g) {
    Matrix d = prob;
    for (Index r = 0; r < d.rows(); ++r) d(r, y[r]) -= 1.0;
    tp.accumulate(logits, d * (g(0, 0) / n));
  }, flops);
}

Vector softmax(const Eigen::Ref<const Vector>& x) {
  if (x.size() == 0) return Vector();
  const double mx = x.maxCoeff();
  Vector e = (x.array() - mx).exp().matrix();
  return e / e.sum();
}

MaxPoolResult maxpool_rows(const Eigen::Ref<const Matrix>& x, Index valid) {
  if (valid < 1 || valid > x.rows()) throw SizeError("maxpool_rows: valid outside [1, rows]");
  MaxPoolResult out{Vector(x.cols()), std::vector<Index>(static_cast<std::size_t>(x.cols()))};
  for (Index c = 0; c < x.cols(); ++c) {
    Index best = 0;
    for (Index r = 1; r < valid; ++r) {
      if (x(r, c) > x(best, c)) best = r;
    }
    out.values[c] = x(best, c);
    out.argmax[c] = best;
  }
  return out;
}

}  // namespace x3d::nn
