#include "../oracles.hpp"

#include "x3d/cloud_io.hpp"
#include "x3d/error.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace x3d;

namespace {

PointCloud line_cloud(std::initializer_list<double> xs) {
  Coords c(static_cast<Index>(xs.size()), 3);
  Index i = 0;
  for (double x : xs) c.row(i++) << x, 0.0, 0.0;
  return PointCloud(c);
}

std::vector<Index> row_of(const NeighborhoodIndex& n, Index r) { return {n.row(r).begin(), n.row(r).end()}; }

}  // namespace

TEST_CASE("fps picks the far endpoint of a line") {
  const auto picks = farthest_point_sample(line_cloud({0, 1, 2, 3}), 2, 0);
  CHECK(picks == std::vector<Index>{0, 3});
}

TEST_CASE("fps with m = N exhausts the cloud") {
  std::mt19937_64 rng(1);
  const PointCloud cloud(oracle::random_cloud(37, rng));
  auto picks = farthest_point_sample(cloud, 37, 5);
  CHECK(picks.front() == 5);
  std::sort(picks.begin(), picks.end());
  CHECK(picks == iota_indices(37));
}

TEST_CASE("fps matches the brute-force scan") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 5; ++t) {
    const Coords c = oracle::random_cloud(100, rng);
    CHECK(farthest_point_sample(PointCloud(c), 10, t) == oracle::fps(c, 10, t));
  }
}

TEST_CASE("fps rejects m > N and bad start") {
  const auto cloud = line_cloud({0, 1, 2});
  CHECK_THROWS_AS(farthest_point_sample(cloud, 4, 0), SizeError);
  CHECK_THROWS_AS(farthest_point_sample(cloud, 2, 3), SizeError);
}

TEST_CASE("knn returns self first on a line") {
  const auto cloud = line_cloud({0, 1, 2, 10});
  const std::vector<Index> c{1};
  const auto n = knn_query(cloud, c, 2);
  // 0 and 2 tie at distance 1, the smaller index wins
  CHECK(row_of(n, 0) == std::vector<Index>{1, 0});
  CHECK(n.valid(0) == 2);
}

TEST_CASE("knn on a 3x3 grid gives self plus axis neighbors") {
  Coords c(9, 3);
  for (Index i = 0; i < 9; ++i) c.row(i) << static_cast<double>(i % 3), static_cast<double>(i / 3), 0.0;
  const std::vector<Index> center{4};
  const auto n = knn_query(PointCloud(c), center, 5);
  CHECK(row_of(n, 0) == std::vector<Index>{4, 1, 3, 5, 7});
}

TEST_CASE("knn matches the exhaustive sort") {
  std::mt19937_64 rng(3);
  const Coords c = oracle::random_cloud(200, rng);
  const auto all = iota_indices(200);
  const auto n = knn_query(PointCloud(c), all, 16);
  for (Index i = 0; i < 200; ++i) CHECK(row_of(n, i) == oracle::knn(c, i, 16));
  CHECK_THROWS_AS(knn_query(PointCloud(c), all, 201), SizeError);
}

TEST_CASE("knn rows are invariant to storage order") {
  std::mt19937_64 rng(4);
  const Coords c = oracle::random_cloud(150, rng);
  std::vector<Index> perm = iota_indices(150);
  std::shuffle(perm.begin(), perm.end(), rng);
  Coords shuffled(150, 3);
  for (Index i = 0; i < 150; ++i) shuffled.row(i) = c.row(perm[i]);  // new i holds old perm[i]
  const auto a = knn_query(PointCloud(c), iota_indices(150), 12);
  const auto b = knn_query(PointCloud(shuffled), iota_indices(150), 12);
  for (Index i = 0; i < 150; ++i) {
    std::set<Index> sa, sb;
    for (Index j : a.row(perm[i])) sa.insert(j);
    for (Index j : b.row(i)) sb.insert(perm[j]);
    CHECK(sa == sb);
  }
}

TEST_CASE("ball query of an isolated point is itself") {
  const auto cloud = line_cloud({0, 5, 10});
  const std::vector<Index> c{1};
  const auto n = ball_query(cloud, c, 1e-6, 4);
  CHECK(n.valid(0) == 1);
  CHECK(row_of(n, 0) == std::vector<Index>{1, 1, 1, 1});
}

TEST_CASE("ball query on an 8-gon catches the two adjacent samples") {
  Coords c(8, 3);
  for (Index i = 0; i < 8; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / 8.0;
    c.row(i) << std::cos(a), std::sin(a), 0.0;
  }
  const std::vector<Index> center{0};
  const auto n = ball_query(PointCloud(c), center, 0.8, 8);
  CHECK(n.valid(0) == 3);
  CHECK(std::set<Index>(n.row(0).begin(), n.row(0).begin() + 3) == std::set<Index>{0, 1, 7});
  // padding repeats the first valid neighbor
  for (Index j = 3; j < 8; ++j) CHECK(n.neighbor(0, j) == n.neighbor(0, 0));
}

TEST_CASE("ball query matches the brute-force filter and sits inside the radius-filtered knn") {
  std::mt19937_64 rng(5);
  const Coords c = oracle::random_cloud(300, rng);
  const auto all = iota_indices(300);
  const auto n = ball_query(PointCloud(c), all, 0.35, 24);
  const auto full = knn_query(PointCloud(c), all, 300);
  for (Index i = 0; i < 300; ++i) {
    const auto ref = oracle::ball(c, i, 0.35, 24);
    REQUIRE(n.valid(i) == static_cast<Index>(ref.size()));
    CHECK(std::vector<Index>(n.row(i).begin(), n.row(i).begin() + n.valid(i)) == ref);
    std::set<Index> within;
    for (Index j : full.row(i))
      if (oracle::dist2(c, i, j) <= 0.35 * 0.35) within.insert(j);
    for (Index j = 0; j < n.valid(i); ++j) CHECK(within.count(n.neighbor(i, j)) == 1);
  }
}

TEST_CASE("relative offsets are neighbor minus center") {
  std::mt19937_64 rng(6);
  const Coords c = oracle::random_cloud(64, rng);
  const auto centers = farthest_point_sample(PointCloud(c), 8, 0);
  const auto n = knn_query(PointCloud(c), centers, 6);
  const auto off = relative_offsets(PointCloud(c), n);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 6; ++j)
      for (int d = 0; d < 3; ++d) CHECK(off.at(i, j)[d] == c(n.neighbor(i, j), d) - c(centers[i], d));
  for (Index i = 0; i < 8; ++i) CHECK(off.at(i, 0).isZero(0.0));  // self sits first

  // center at the origin: offsets are the raw neighbor coordinates
  Coords o = c;
  o.row(0).setZero();
  const std::vector<Index> zero{0};
  const auto n0 = knn_query(PointCloud(o), zero, 5);
  const auto off0 = relative_offsets(PointCloud(o), n0);
  for (Index j = 0; j < 5; ++j) CHECK(off0.at(0, j) == Vec3(o.row(n0.neighbor(0, j)).transpose()));
}

TEST_CASE("relative offsets are translation invariant") {
  std::mt19937_64 rng(7);
  const Coords c = oracle::random_cloud(80, rng);
  const auto n = knn_query(PointCloud(c), iota_indices(80), 8);
  Coords moved = c;
  moved.rowwise() += Eigen::RowVector3d(3.25, -1.5, 0.125);
  const auto a = relative_offsets(PointCloud(c), n), b = relative_offsets(PointCloud(moved), n);
  CHECK((a.rows - b.rows).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("neighborhood validation") {
  NeighborhoodIndex n{{0}, {0, 3}, {2}, 2};
  CHECK_THROWS(n.validate(3));
  n.neighbors = {0, 1};
  CHECK_NOTHROW(n.validate(3));
  n.valid_counts = {0};
  CHECK_THROWS(n.validate(3));
}

TEST_CASE("point cloud validation") {
  PointCloud p(Coords::Zero(2, 3));
  CHECK_NOTHROW(p.validate());
  p.features = Matrix::Zero(3, 1);
  CHECK_THROWS(p.validate());
  p.features.reset();
  p.coords(0, 0) = std::nan("");
  CHECK_THROWS_AS(p.validate(), NumericError);
  CHECK_THROWS(PointCloud().validate());
}

TEST_CASE("x3pc round trip") {
  std::mt19937_64 rng(8);
  PointCloud p(oracle::random_cloud(20, rng));
  p.features = Matrix::Random(20, 2);
  p.labels = std::vector<int>(20, 3);
  std::stringstream ss;
  io::encode_x3pc(ss, p);
  const auto q = io::decode_x3pc(ss);
  CHECK(q.coords == p.coords);
  CHECK(*q.features == *p.features);
  CHECK(*q.labels == *p.labels);
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(io::decode_x3pc(bad), FormatError);
}

TEST_CASE("ascii ply with scalar properties") {
  std::stringstream ss(
      "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
      "property float intensity\nend_header\n0 0 0 0.5\n1 2 3 0.25\n");
  const auto p = io::parse_ply(ss);
  REQUIRE(p.size() == 2);
  CHECK(p.coords(1, 2) == 3.0);
  REQUIRE(p.features);
  CHECK((*p.features)(1, 0) == 0.25);
}
