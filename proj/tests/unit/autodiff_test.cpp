#include "../oracles.hpp"

#include "x3d/error.hpp"
#include "x3d/mlp.hpp"

#include <doctest.h>

#include <sstream>

using namespace x3d;
using namespace x3d::nn;

namespace {

Matrix randn(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

/// Gradient w.r.t. a single input matrix of sum(weights .* f(x)).
template <class F>
double input_check(F&& f, const Matrix& x, const Matrix& weights, std::uint64_t seed) {
  Tape t;
  const Var out = weighted_sum(t, f(t, t.input(x)), weights);
  const Matrix g = t.backward(out, Matrix::Ones(1, 1)).inputs[0];
  auto loss = [&](const Vector& v) {
    Tape u(nullptr, false);
    const Matrix xv = Eigen::Map<const Matrix>(v.data(), x.rows(), x.cols());
    return u.value(weighted_sum(u, f(u, u.input(xv)), weights))(0, 0);
  };
  const Vector x0 = Eigen::Map<const Vector>(x.data(), x.size());
  const Vector a = Eigen::Map<const Vector>(g.data(), g.size());
  return oracle::finite_difference(loss, x0, a, std::min<Index>(100, x.size()), seed).max_rel;
}

}  // namespace

TEST_CASE("param store layout") {
  ParamStore p;
  CHECK(p.add("a", 2, 3) == 0);
  CHECK(p.add("b", 1, 4) == 6);
  CHECK(p.size() == 10);
  CHECK(p.contains("b"));
  p.matrix("a")(1, 2) = 5.0;
  CHECK(p.values()[5] == 5.0);
  CHECK_NOTHROW(p.validate());
  CHECK_THROWS(p.add("a", 1, 1));
  CHECK_THROWS(p.entry("zzz"));
  p.values()[0] = std::nan("");
  CHECK_THROWS_AS(p.validate(), NumericError);
}

TEST_CASE("identity and zero-weight mlps") {
  const Mlp id("id", LayerSpec::chain({3, 3}));
  ParamStore p;
  id.register_params(p);
  p.matrix(id.weight_name(0)) = Matrix::Identity(3, 3);
  std::mt19937_64 rng(1);
  const Matrix x = randn(5, 3, rng);
  CHECK(mlp_forward(id, p, x) == x);
  p.matrix(id.weight_name(0)).setZero();
  p.matrix(id.bias_name(0)) << 1, 2, 3;
  const Matrix y = mlp_forward(id, p, x);
  for (Index r = 0; r < 5; ++r) CHECK(y.row(r) == Eigen::RowVector3d(1, 2, 3));
  CHECK_THROWS_AS(mlp_forward(id, p, randn(2, 4, rng)), ShapeError);
}

TEST_CASE("mlp matches a straight-line evaluation") {
  const Mlp net("n", LayerSpec::chain({4, 7, 3}));
  ParamStore p;
  net.register_params(p);
  std::mt19937_64 rng(2);
  net.init_params(p, rng);
  p.matrix(net.bias_name(0)) = randn(1, 7, rng);
  oracle::Dense d{{Matrix(p.matrix(net.weight_name(0))), Matrix(p.matrix(net.weight_name(1)))},
                  {Matrix(p.matrix(net.bias_name(0))), Matrix(p.matrix(net.bias_name(1)))}};
  const Matrix x = randn(9, 4, rng);
  CHECK((mlp_forward(net, p, x) - oracle::dense_forward(d, x)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("init is seeded and bounded") {
  const Mlp net("n", LayerSpec::chain({10, 6}));
  ParamStore a, b;
  net.register_params(a);
  net.register_params(b);
  std::mt19937_64 r1(7), r2(7);
  net.init_params(a, r1);
  net.init_params(b, r2);
  CHECK(a.values() == b.values());
  const double bound = std::sqrt(6.0 / 16.0);
  CHECK(a.matrix(net.weight_name(0)).cwiseAbs().maxCoeff() <= bound);
  CHECK(a.matrix(net.bias_name(0)).isZero(0.0));
}

TEST_CASE("layer spec chaining is validated") {
  LayerSpec s{{{3, 4}, {5, 2}}};
  CHECK_THROWS_AS(s.validate(), ShapeError);
  const auto c = LayerSpec::chain({3, 8, 8, 2}, true);
  CHECK(c.layers.size() == 3);
  CHECK(c.layers[0].activation == Activation::Relu);
  CHECK(c.layers[2].activation == Activation::None);
  CHECK(c.layers[0].normalize);
  CHECK_FALSE(c.layers[2].normalize);
}

TEST_CASE("linear layer gradient closed form") {
  const Mlp lin("l", LayerSpec::chain({3, 2}));
  ParamStore p;
  lin.register_params(p);
  std::mt19937_64 rng(3);
  lin.init_params(p, rng);
  const Matrix x = randn(4, 3, rng);
  Tape t(&p);
  const Var out = sum_all(t, lin.forward(t, t.constant(x)));
  const auto g = t.backward(out, Matrix::Ones(1, 1));
  const auto& e = p.entry(lin.weight_name(0));
  const Matrix dw = Eigen::Map<const Matrix>(g.params.data() + e.offset, 3, 2);
  const Matrix expect = x.transpose() * Matrix::Ones(4, 2);
  CHECK((dw - expect).cwiseAbs().maxCoeff() <= 1e-12);
  const auto& b = p.entry(lin.bias_name(0));
  CHECK(g.params[b.offset] == doctest::Approx(4.0));
}

TEST_CASE("relu blocks gradient at negative pre-activation") {
  Tape t;
  Matrix x(1, 3);
  x << -1.0, 2.0, -0.5;
  const Var y = sum_all(t, relu(t, t.input(x)));
  const Matrix g = t.backward(y, Matrix::Ones(1, 1)).inputs[0];
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 1.0);
  CHECK(g(0, 2) == 0.0);
}

TEST_CASE("a tape runs backward once") {
  Tape t;
  const Var y = sum_all(t, t.input(Matrix::Ones(2, 2)));
  t.backward(y, Matrix::Ones(1, 1));
  CHECK(t.consumed());
  CHECK_THROWS_AS(t.backward(y, Matrix::Ones(1, 1)), StateError);
  CHECK_THROWS_AS(relu(t, y), StateError);
}

TEST_CASE("primitive gradients match finite differences") {
  std::mt19937_64 rng(4);
  const Matrix a = randn(6, 4, rng), b = randn(6, 4, rng), c = randn(4, 5, rng), row = randn(1, 4, rng);
  const std::vector<Index> valid{3, 2};
  const std::vector<Index> idx{5, 0, 0, 3, 2};
  auto w = [&](Index r, Index cc) { return randn(r, cc, rng); };
  CHECK(input_check([&](Tape& t, Var x) { return matmul(t, x, t.constant(c)); }, a, w(6, 5), 1) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return matmul(t, t.constant(c.transpose()), x); }, Matrix(a.transpose()),
                    w(5, 6), 2) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return mul(t, x, t.constant(b)); }, a, w(6, 4), 3) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return sub(t, t.constant(b), x); }, a, w(6, 4), 4) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return add_row(t, t.constant(a), x); }, row, w(6, 4), 5) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return concat_cols(t, x, t.constant(b)); }, a, w(6, 8), 6) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return gather_rows(t, x, idx); }, a, w(5, 4), 7) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return row_dot(t, x, t.constant(b)); }, a, w(6, 1), 8) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return scale_rows(t, t.constant(b), row_dot(t, x, x)); }, a, w(6, 4), 9) <
        1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return standardize(t, x); }, a, w(6, 4), 10) < 1e-5);
  CHECK(input_check([&](Tape& t, Var x) { return segment_softmax(t, x, 3, valid); }, a, w(6, 4), 11) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return segment_max(t, x, 3, valid); }, a, w(2, 4), 12) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return segment_sum(t, x, 3, valid); }, a, w(2, 4), 13) < 1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return segment_mean(t, x, 3, valid); }, a, w(2, 4), 14) < 1e-6);
  const Matrix q = randn(6, 3, rng), h = randn(6, 2, rng);
  CHECK(input_check([&](Tape& t, Var x) { return kernel_apply(t, x, q, 3); }, randn(2, 6, rng), w(6, 2), 15) <
        1e-6);
  CHECK(input_check([&](Tape& t, Var x) { return blend_blocks(t, x, h); }, a, w(6, 2), 16) < 1e-6);
  const std::vector<int> labels{0, 3, 1, 2, 2, 0};
  CHECK(input_check([&](Tape& t, Var x) { return cross_entropy(t, x, labels); }, a, Matrix::Ones(1, 1), 17) < 1e-6);
}

TEST_CASE("padded slots get zero softmax weight and no gradient") {
  std::mt19937_64 rng(5);
  const Matrix x = randn(4, 2, rng);
  const std::vector<Index> valid{1, 2};
  Tape t;
  const Var in = t.input(x);
  const Var s = segment_softmax(t, in, 2, valid);
  const Matrix& v = t.value(s);
  CHECK(v(0, 0) == 1.0);
  CHECK(v(1, 0) == 0.0);
  CHECK(v(2, 1) + v(3, 1) == doctest::Approx(1.0).epsilon(1e-12));
  const Matrix g = t.backward(weighted_sum(t, segment_max(t, in, 2, valid), randn(2, 2, rng)), Matrix::Ones(1, 1))
                       .inputs[0];
  CHECK(g.row(1).isZero(0.0));
}

TEST_CASE("softmax helper") {
  const Vector u = softmax(Vector::Constant(5, 3.0));
  for (Index i = 0; i < 5; ++i) CHECK(u[i] == doctest::Approx(0.2).epsilon(1e-14));
  Vector big = Vector::Zero(4);
  big[2] = 1e4;
  const Vector d = softmax(big);
  CHECK(d[2] == doctest::Approx(1.0));
  CHECK(d[0] <= 1e-300);
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Vector x = randn(9, 1, rng).col(0) * 3.0;
    const Vector s = softmax(x);
    CHECK((s - oracle::softmax_direct(x)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.minCoeff() >= 0.0);
  }
}

TEST_CASE("maxpool helper and tie rule") {
  Matrix x(3, 2);
  x << 1, 5, 4, 5, 4, -1;
  const auto r = maxpool_rows(x, 3);
  CHECK(r.values == Eigen::Vector2d(4, 5));
  CHECK(r.argmax == std::vector<Index>{1, 0});
  CHECK(maxpool_rows(x, 1).values == Eigen::Vector2d(1, 5));
  // the segment op routes the tied gradient to the first row as well
  Tape t;
  const Var in = t.input(x);
  const std::vector<Index> valid{3};
  const Matrix g = t.backward(sum_all(t, segment_max(t, in, 3, valid)), Matrix::Ones(1, 1)).inputs[0];
  CHECK(g(0, 1) == 1.0);
  CHECK(g(1, 1) == 0.0);
  CHECK(g(1, 0) == 1.0);
  CHECK(g(2, 0) == 0.0);
  std::mt19937_64 rng(7);
  const Matrix y = randn(8, 5, rng);
  const auto m = maxpool_rows(y, 6);
  for (Index c = 0; c < 5; ++c) {
    Index arg = 0;
    for (Index rr = 1; rr < 6; ++rr)
      if (y(rr, c) > y(arg, c)) arg = rr;
    CHECK(m.argmax[c] == arg);
    CHECK(m.values[c] == y(arg, c));
  }
}

TEST_CASE("sgd step") {
  ParamStore p;
  p.add("w", 1, 2);
  p.values() << 1.0, -2.0;
  SgdState s;
  sgd_step(p, Vector::Zero(2), 0.1, 0.9, s);
  CHECK(p.values() == Eigen::Vector2d(1.0, -2.0));
  sgd_step(p, Vector::Ones(2), 0.0, 0.9, s);
  CHECK(p.values() == Eigen::Vector2d(1.0, -2.0));
  Vector bad = Vector::Ones(2);
  bad[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(sgd_step(p, bad, 0.1, 0.9, s), NumericError);
  CHECK_THROWS_AS(sgd_step(p, Vector::Ones(3), 0.1, 0.9, s), ShapeError);
}

TEST_CASE("momentum sgd reaches the bottom of a quadratic bowl") {
  // f(w) = 0.5 (w - c)^T A (w - c)
  Eigen::Matrix2d a;
  a << 3.0, 0.5, 0.5, 1.0;
  const Eigen::Vector2d c(0.7, -1.3);
  ParamStore p;
  p.add("w", 1, 2);
  p.values().setZero();
  SgdState s;
  for (int it = 0; it < 500; ++it) sgd_step(p, a * (p.values() - c), 0.1, 0.9, s);
  CHECK((p.values() - c).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("checkpoint round trip") {
  const Mlp net("n", LayerSpec::chain({4, 3, 2}));
  ParamStore p;
  net.register_params(p);
  std::mt19937_64 rng(8);
  net.init_params(p, rng);
  std::stringstream ss;
  encode_checkpoint(ss, p);
  CHECK(ss.str().substr(0, 4) == "X3CK");
  const ParamStore q = decode_checkpoint(ss);
  CHECK(q.values() == p.values());
  REQUIRE(q.layout().size() == p.layout().size());
  for (std::size_t i = 0; i < q.layout().size(); ++i) CHECK(q.layout()[i].name == p.layout()[i].name);
  std::stringstream bad("X3CKjunk");
  CHECK_THROWS(decode_checkpoint(bad));
}

TEST_CASE("flop counter counts a matmul as 2mnk") {
  Tape t;
  const Var y = matmul(t, t.constant(Matrix::Ones(3, 4)), t.constant(Matrix::Ones(4, 5)));
  (void)y;
  CHECK(t.flops() == 2.0 * 3 * 4 * 5);
}
