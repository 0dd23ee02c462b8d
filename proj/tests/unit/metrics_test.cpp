#include "../oracles.hpp"

#include "x3d/error.hpp"
#include "x3d/metrics.hpp"
#include "x3d/probe.hpp"

#include <doctest.h>

#include <numbers>

using namespace x3d;
using namespace x3d::metrics;

namespace {

Coords circle(Index n) {
  Coords c(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    c.row(i) << std::cos(a), std::sin(a), 0.0;
  }
  return c;
}

Grouping full_grouping(Index n, Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PointCloud pc(oracle::random_cloud(n, rng));
  const auto centers = iota_indices(n);
  return make_grouping(pc.coords, knn_query(pc, centers, k));
}

}  // namespace

TEST_CASE("geodesics on a line and a circle") {
  Coords line(5, 3);
  for (Index i = 0; i < 5; ++i) line.row(i) << static_cast<double>(i), 0.0, 0.0;
  const std::vector<Index> src{0};
  const auto r = geodesic_from_sources(line, 1, src);
  for (Index i = 0; i < 5; ++i) CHECK(r.distances(0, i) == doctest::Approx(static_cast<double>(i)));
  CHECK(r.connected());
  const auto c = geodesic_from_sources(circle(100), 2, src);
  CHECK(c.distances(0, 50) == doctest::Approx(100.0 * 2.0 * std::sin(std::numbers::pi / 100.0) / 2.0));
  CHECK(c.distances(0, 25) <= c.distances(0, 50));
}

TEST_CASE("disconnected components are unreachable") {
  Coords c(4, 3);
  c << 0, 0, 0, 0.1, 0, 0, 10, 0, 0, 10.1, 0, 0;
  const std::vector<Index> src{0};
  const auto r = geodesic_from_sources(c, 1, src);
  CHECK(r.components == 2);
  CHECK_FALSE(r.connected());
  CHECK(r.distances(0, 1) == doctest::Approx(0.1));
  CHECK(r.distances(0, 2) == kUnreachable);
}

TEST_CASE("geodesics agree with Floyd-Warshall") {
  std::mt19937_64 rng(5);
  const Coords c = oracle::random_cloud(60, rng);
  const Matrix fw = oracle::floyd_warshall(c, 5);
  const auto d = geodesic_matrix(c, 5);
  for (Index i = 0; i < 60; ++i)
    for (Index j = 0; j < 60; ++j) {
      if (std::isinf(fw(i, j))) CHECK(std::isinf(d.distances(i, j)));
      else CHECK(std::abs(d.distances(i, j) - fw(i, j)) <= 1e-12);
      // symmetry and the Euclidean lower bound
      CHECK(d.distances(i, j) == doctest::Approx(d.distances(j, i)));
      CHECK(d.distances(i, j) >= std::sqrt(oracle::dist2(c, i, j)) - 1e-12);
    }
  CHECK_THROWS_AS(geodesic_matrix(c, 1), ConfigError);
  const std::vector<Index> bad{60};
  CHECK_THROWS_AS(geodesic_from_sources(c, 3, bad), SizeError);
}

TEST_CASE("gap is zero when the embedding is the coordinates") {
  const auto g = full_grouping(40, 6, 1);
  const auto v = gap_metric(g.coords, g.nbr, Matrix(g.coords), GapMode::Euclidean);
  CHECK(v.evaluated == 40);
  CHECK(v.mean <= 1e-12);
  // and under any uniform scaling or rigid motion of the embedding
  std::mt19937_64 rng(2);
  const Eigen::Matrix3d q = oracle::random_rotation(rng);
  const Matrix moved = (Matrix(g.coords) * q.transpose() * 3.5).rowwise() + Eigen::RowVector3d(1, -2, 0.5);
  CHECK(gap_metric(g.coords, g.nbr, moved).mean <= 1e-12);
}

TEST_CASE("gap skips constant embeddings and coincident neighborhoods") {
  const auto g = full_grouping(30, 4, 2);
  const auto v = gap_metric(g.coords, g.nbr, Matrix::Ones(30, 5));
  CHECK(v.evaluated == 0);
  CHECK(v.skipped == 30);
  CHECK(v.mean == 0.0);
  CHECK(std::isnan(v.per_region[0]));
}

TEST_CASE("gap matches the loop evaluation") {
  const auto g = full_grouping(35, 7, 3);
  const Matrix emb = Matrix::Random(35, 6);
  const auto v = gap_metric(g.coords, g.nbr, emb);
  double total = 0.0;
  for (Index i = 0; i < g.regions(); ++i) {
    double na = 0, nb = 0;
    std::vector<double> a, b;
    for (Index j = 0; j < g.nbr.valid(i); ++j) {
      const Index p = g.nbr.neighbor(i, j), c = g.nbr.centers[i];
      a.push_back(std::sqrt(oracle::dist2(g.coords, c, p)));
      b.push_back((emb.row(p) - emb.row(c)).norm());
      na += a.back() * a.back();
      nb += b.back() * b.back();
    }
    double s = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double d = a[j] / std::sqrt(na) - b[j] / std::sqrt(nb);
      s += d * d;
    }
    CHECK(v.per_region[i] == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
    total += std::sqrt(s);
  }
  CHECK(v.mean == doctest::Approx(total / 35.0).epsilon(1e-12));
  const auto geo = gap_metric(g.coords, g.nbr, emb, GapMode::Geodesic);
  CHECK(geo.evaluated == 35);
  CHECK_THROWS_AS(gap_metric(g.coords, g.nbr, Matrix::Zero(3, 2)), ShapeError);
}

TEST_CASE("gap report averages layers") {
  GapReport r;
  r.layers.resize(3);
  r.layers[0].mean = 0.3;
  r.layers[1].mean = 0.6;
  r.layers[2].mean = 0.0;
  CHECK(r.mean_over_layers() == doctest::Approx(0.3));
  CHECK(GapReport{}.mean_over_layers() == 0.0);
  CHECK(parse_gap_mode("geodesic") == GapMode::Geodesic);
  CHECK_THROWS_AS(parse_gap_mode("lp"), ConfigError);
}

TEST_CASE("flop estimates are affine in K and ordered") {
  for (const auto m : {CostMethod::X3d, CostMethod::SharedMlp, CostMethod::RsConv, CostMethod::KpConv,
                       CostMethod::VectorAttention, CostMethod::ScalarAttention}) {
    const double f8 = flops_estimate(m, 512, 32, 8).flops;
    const double f16 = flops_estimate(m, 512, 32, 16).flops;
    const double f24 = flops_estimate(m, 512, 32, 24).flops;
    CHECK(f16 > f8);
    CHECK(f24 - f16 == doctest::Approx(f16 - f8).epsilon(1e-12));
    CHECK(flops_estimate(m, 1024, 32, 8).flops == doctest::Approx(2.0 * f8));
    const auto e = flops_estimate(m, 512, 32, 8);
    CHECK(e.per_point + e.per_region + e.per_neighbor == doctest::Approx(e.flops));
    CHECK(parse_cost_method(to_string(m)) == m);
  }
  // per-neighbor work: one shared kernel per region is cheaper than a kernel per neighbor
  for (const Index k : {16, 32, 64}) {
    const double x = flops_estimate(CostMethod::X3d, 1024, 64, k).per_neighbor;
    CHECK(x < flops_estimate(CostMethod::RsConv, 1024, 64, k).per_neighbor);
    CHECK(x < flops_estimate(CostMethod::VectorAttention, 1024, 64, k).per_neighbor);
  }
  CHECK_THROWS_AS(flops_estimate(CostMethod::X3d, 0, 32, 8), ConfigError);
  CHECK_THROWS_AS(cost_ihsm_config(CostMethod::X3d, 8, {}), ConfigError);
}

TEST_CASE("flop estimates equal the tape counter") {
  const auto g = full_grouping(40, 6, 4);
  const Matrix feats = Matrix::Random(40, 8);
  std::mt19937_64 rng(1);
  for (const auto kind : {es::Kind::PH, es::Kind::PCA, es::Kind::LR})
    for (int flags = 0; flags < 16; ++flags) {
      CostDims d;
      d.hidden = 10;
      d.struct_dim = 7;
      d.es_kind = kind;
      d.denoise = flags & 1;
      d.ncp = flags & 2;
      d.mean_aggregation = flags & 4;
      d.normalize = flags & 8;
      const layer::X3dBlock b("b", cost_x3d_config(8, 6, d), 6);
      nn::ParamStore p;
      b.register_params(p);
      b.init_params(p, rng);
      nn::Tape t(&p, false);
      b.forward(t, g, t.input(feats));
      CAPTURE(flags);
      CHECK(t.flops() == doctest::Approx(flops_estimate(CostMethod::X3d, 40, 8, 6, d).flops).epsilon(1e-12));
    }
  for (const auto m : {CostMethod::SharedMlp, CostMethod::RsConv, CostMethod::KpConv, CostMethod::VectorAttention,
                       CostMethod::ScalarAttention})
    for (const bool norm : {false, true}) {
      CostDims d;
      d.hidden = 10;
      d.normalize = norm;
      d.kernel_points = 5;
      const ihsm::IhsmBlock b("i", cost_ihsm_config(m, 8, d));
      nn::ParamStore p;
      b.register_params(p);
      b.init_params(p, rng);
      nn::Tape t(&p, false);
      b.forward(t, g, t.input(feats));
      CAPTURE(to_string(m));
      CHECK(t.flops() == doctest::Approx(flops_estimate(m, 40, 8, 6, d).flops).epsilon(1e-12));
    }
}

TEST_CASE("probe bins and pair inputs") {
  using namespace x3d::probe;
  CHECK(bin_of(0.0, 0.0, 1.0, 4) == 0);
  CHECK(bin_of(0.26, 0.0, 1.0, 4) == 1);
  CHECK(bin_of(1.0, 0.0, 1.0, 4) == 3);
  CHECK(bin_of(5.0, 1.0, 1.0, 4) == 0);
  NeighborhoodIndex n;
  n.centers = {0, 1};
  n.neighbors = {0, 2, 1, 1};
  n.valid_counts = {2, 1};
  n.k = 2;
  Matrix c(2, 1), p(3, 2);
  c << 10, 20;
  p << 1, 2, 3, 4, 5, 6;
  const Matrix x = pair_inputs(c, p, n);
  REQUIRE(x.rows() == 3);
  CHECK(x.row(1) == Eigen::RowVector3d(10, 5, 6));
  CHECK(x.row(2) == Eigen::RowVector3d(20, 3, 4));
  CHECK(parse_task(to_string(ProbeTask::GeodesicRegression)) == ProbeTask::GeodesicRegression);
}

TEST_CASE("probes learn an informative input and skip constant axes") {
  using namespace x3d::probe;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Index n = 600;
  Matrix x(n, 3), t(n, 3), y(n, 1);
  for (Index i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) x(i, d) = u(rng);
    t.row(i) << x(i, 0), x(i, 1), 0.0;
    y(i, 0) = 0.5 * x(i, 0) - x(i, 2);
  }
  ProbeOptions o;
  o.bins = 4;
  o.seed = 1;
  const auto bins = probe_geometry(x, t, ProbeTask::RelativeCoordinateBins, o);
  CHECK(bins.skipped_axes == std::vector<int>{2});
  CHECK(bins.axis_scores.size() == 2);
  CHECK(bins.score > 0.6);
  CHECK(bins.train_count + bins.test_count == n);
  const auto again = probe_geometry(x, t, ProbeTask::RelativeCoordinateBins, o);
  CHECK(again.score == bins.score);
  const auto reg = probe_geometry(x, y, ProbeTask::GeodesicRegression, o);
  CHECK(reg.score < 0.05);
  // noise input: the regression cannot beat the target variance by much
  Matrix noise(n, 3);
  for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = u(rng);
  const auto blind = probe_geometry(noise, y, ProbeTask::GeodesicRegression, o);
  CHECK(blind.score > reg.score);
}

TEST_CASE("probe on oracle features and on noise") {
  using namespace x3d::probe;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Index n = 1600;
  Matrix t(n, 3);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  ProbeOptions o;
  o.seed = 2;
  // one-hot of the true bin on every axis
  Matrix onehot = Matrix::Zero(n, 24);
  for (Index i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      const double lo = t.col(a).minCoeff(), hi = t.col(a).maxCoeff();
      onehot(i, a * 8 + bin_of(t(i, a), lo, hi, 8)) = 1.0;
    }
  CHECK(probe_geometry(onehot, t, ProbeTask::RelativeCoordinateBins, o).score == 1.0);
  Matrix noise(n, 6);
  for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = u(rng);
  const auto chance = probe_geometry(noise, t, ProbeTask::RelativeCoordinateBins, o);
  // three axes of the test split; 4.5 standard deviations around 1/8
  const double m = 3.0 * static_cast<double>(chance.test_count);
  const double sd = std::sqrt(0.125 * 0.875 / m);
  CHECK(std::abs(chance.score - 0.125) <= 4.5 * sd + 0.02);
}
