#include "x3d/harness/shapes.hpp"

#include "x3d/error.hpp"

#include <Eigen/Geometry>

#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace x3d::harness {

std::string_view to_string(ShapeClass shape) {
  switch (shape) {
    case ShapeClass::Sphere: return "sphere";
    case ShapeClass::Plane: return "plane";
    case ShapeClass::Line: return "line";
    case ShapeClass::Cube: return "cube";
    case ShapeClass::Torus: return "torus";
    case ShapeClass::Cylinder: return "cylinder";
  }
  return "?";
}

ShapeClass parse_shape(std::string_view name) {
  if (name == "sphere") return ShapeClass::Sphere;
  if (name == "plane" || name == "plane-patch") return ShapeClass::Plane;
  if (name == "line" || name == "line-segment") return ShapeClass::Line;
  if (name == "cube" || name == "cube-surface") return ShapeClass::Cube;
  if (name == "torus") return ShapeClass::Torus;
  if (name == "cylinder") return ShapeClass::Cylinder;
  throw ConfigError("unknown shape class '" + std::string(name) + "'");
}

std::string_view to_string(RotationMode mode) {
  switch (mode) {
    case RotationMode::None: return "none";
    case RotationMode::Yaw: return "yaw";
    case RotationMode::Full: return "full";
  }
  return "?";
}

RotationMode parse_rotation(std::string_view name) {
  if (name == "none") return RotationMode::None;
  if (name == "yaw" || name == "z") return RotationMode::Yaw;
  if (name == "full" || name == "so3") return RotationMode::Full;
  throw ConfigError("unknown rotation mode '" + std::string(name) + "'");
}

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTorusMajor = 1.0, kTorusMinor = 0.35;
constexpr double kCylRadius = 0.5, kCylHalfHeight = 1.0;

void sample_point(ShapeClass shape, std::mt19937_64& rng, Vec3& p, Vec3& n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), u01(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  switch (shape) {
    case ShapeClass::Sphere: {
      Vec3 v(g(rng), g(rng), g(rng));
      while (v.norm() == 0.0) v = Vec3(g(rng), g(rng), g(rng));
      p = v.normalized();
      n = p;
      return;
    }
    case ShapeClass::Plane:
      p = Vec3(u(rng), u(rng), 0.0);
      n = Vec3::UnitZ();
      return;
    case ShapeClass::Line:
      p = Vec3(u(rng), 0.0, 0.0);
      n = Vec3::Zero();
      return;
    case ShapeClass::Cube: {
      const int face = std::uniform_int_distribution<int>(0, 5)(rng);
      const int axis = face / 2;
      const double side = face % 2 == 0 ? -1.0 : 1.0;
      p = Vec3(u(rng), u(rng), u(rng));
      p[axis] = side;
      n = Vec3::Zero();
      n[axis] = side;
      return;
    }
    case ShapeClass::Torus: {
      const double theta = 2.0 * kPi * u01(rng);
      double phi;
      // area element is proportional to R + r cos(phi)
      do {
        phi = 2.0 * kPi * u01(rng);
      } while (u01(rng) * (kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(phi));
      const double ring = kTorusMajor + kTorusMinor * std::cos(phi);
      p = Vec3(ring * std::cos(theta), ring * std::sin(theta), kTorusMinor * std::sin(phi));
      n = Vec3(std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta), std::sin(phi));
      return;
    }
    case ShapeClass::Cylinder: {
      const double lateral = 2.0 * kPi * kCylRadius * 2.0 * kCylHalfHeight;
      const double caps = 2.0 * kPi * kCylRadius * kCylRadius;
      const double theta = 2.0 * kPi * u01(rng);
      if (u01(rng) * (lateral + caps) < lateral) {
        p = Vec3(kCylRadius * std::cos(theta), kCylRadius * std::sin(theta), kCylHalfHeight * u(rng));
        n = Vec3(std::cos(theta), std::sin(theta), 0.0);
      } else {
        const double r = kCylRadius * std::sqrt(u01(rng));
        const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
        p = Vec3(r * std::cos(theta), r * std::sin(theta), side * kCylHalfHeight);
        n = Vec3(0.0, 0.0, side);
      }
      return;
    }
  }
}

Eigen::Matrix3d random_rotation(RotationMode mode, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (mode == RotationMode::None) return Eigen::Matrix3d::Identity();
  if (mode == RotationMode::Yaw) return axis_rotation(2, 360.0 * u01(rng));
  // uniform unit quaternion
  const double a = u01(rng), b = u01(rng), c = u01(rng);
  const Eigen::Quaterniond q(std::sqrt(a) * std::cos(2 * kPi * c), std::sqrt(1 - a) * std::sin(2 * kPi * b),
                             std::sqrt(1 - a) * std::cos(2 * kPi * b), std::sqrt(a) * std::sin(2 * kPi * c));
  return q.normalized().toRotationMatrix();
}

}  // namespace

Sample sample_shape(ShapeClass shape, Index points, double noise, RotationMode rotation, std::mt19937_64& rng) {
  if (points < 1) throw ConfigError("sample_shape: points must be >= 1");
  if (noise < 0.0) throw ConfigError("sample_shape: noise must be >= 0");
  Sample s;
  Coords xyz(points, 3);
  s.normals.resize(points, 3);
  std::normal_distribution<double> jitter(0.0, noise > 0.0 ? noise : 1.0);
  for (Index i = 0; i < points; ++i) {
    Vec3 p, n;
    sample_point(shape, rng, p, n);
    if (noise > 0.0) p += Vec3(jitter(rng), jitter(rng), jitter(rng));
    xyz.row(i) = p.transpose();
    s.normals.row(i) = n.transpose();
  }
  const double radius = xyz.rowwise().norm().maxCoeff();
  if (radius > 0.0) xyz /= radius;
  const Eigen::Matrix3d rot = random_rotation(rotation, rng);
  s.cloud = PointCloud(Coords(xyz * rot.transpose()));
  s.normals = s.normals * rot.transpose();
  return s;
}

Dataset gen_shapes(const DatasetSpec& spec, Index count, std::uint64_t seed) {
  if (spec.classes.size() < 2) throw ConfigError("gen_shapes: need at least two classes");
  if (count < 1) throw ConfigError("gen_shapes: count must be >= 1");
  std::vector<ShapeClass> shapes;
  for (const auto& name : spec.classes) shapes.push_back(parse_shape(name));
  Dataset ds;
  ds.class_names = spec.classes;
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    const int label = static_cast<int>(i % static_cast<Index>(shapes.size()));
    Sample s = sample_shape(shapes[label], spec.points, spec.noise, spec.rotation, rng);
    s.label = label;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset gen_train_split(const DatasetSpec& spec) { return gen_shapes(spec, spec.train_count, spec.seed); }

Dataset gen_test_split(const DatasetSpec& spec) {
  return gen_shapes(spec, spec.test_count, spec.seed ^ 0x5DEECE66Dull);
}

Transform Transform::parse(std::string_view text) {
  auto number = [&](std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError("transform: bad number in '" + std::string(text) + "'");
    return v;
  };
  Transform t;
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ConfigError("transform: expected kind:args in '" + std::string(text) + "'");
  const std::string_view kind = text.substr(0, colon), rest = text.substr(colon + 1);
  if (kind == "rotate") {
    const auto c2 = rest.find(':');
    if (c2 != 1 || (rest[0] != 'x' && rest[0] != 'y' && rest[0] != 'z'))
      throw ConfigError("transform: rotate needs axis x|y|z, e.g. rotate:z:30");
    t.kind = Kind::Rotate;
    t.axis = rest[0] - 'x';
    t.value = number(rest.substr(2));
  } else if (kind == "scale") {
    t.kind = Kind::Scale;
    t.value = number(rest);
    if (!(t.value > 0.0)) throw ConfigError("transform: scale must be > 0");
  } else if (kind == "jitter") {
    t.kind = Kind::Jitter;
    t.value = number(rest);
    if (t.value < 0.0) throw ConfigError("transform: jitter sigma must be >= 0");
  } else {
    throw ConfigError("transform: unknown kind '" + std::string(kind) + "'");
  }
  return t;
}

std::string Transform::name() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Rotate: os << "rotate:" << static_cast<char>('x' + axis) << ':' << value; break;
    case Kind::Scale: os << "scale:" << value; break;
    case Kind::Jitter: os << "jitter:" << value; break;
  }
  return os.str();
}

Eigen::Matrix3d axis_rotation(int axis, double degrees) {
  if (axis < 0 || axis > 2) throw ConfigError("axis_rotation: axis must be 0, 1 or 2");
  double c, s;
  const double turns = degrees / 90.0;
  if (turns == std::round(turns)) {
    // exact quarter turns
    const long q = ((static_cast<long>(std::round(turns)) % 4) + 4) % 4;
    const double cs[4] = {1, 0, -1, 0}, sn[4] = {0, 1, 0, -1};
    c = cs[q];
    s = sn[q];
  } else {
    const double rad = degrees * kPi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }
  const int a = (axis + 1) % 3, b = (axis + 2) % 3;
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  r(a, a) = c;
  r(a, b) = -s;
  r(b, a) = s;
  r(b, b) = c;
  return r;
}

PointCloud augment(const PointCloud& cloud, const Transform& t, std::uint64_t seed) {
  PointCloud out = cloud;
  switch (t.kind) {
    case Transform::Kind::Rotate: out.coords = cloud.coords * axis_rotation(t.axis, t.value).transpose(); break;
    case Transform::Kind::Scale: out.coords = cloud.coords * t.value; break;
    case Transform::Kind::Jitter: {
      if (t.value == 0.0) break;
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> g(0.0, t.value);
      for (Index i = 0; i < out.coords.rows(); ++i)
        for (int d = 0; d < 3; ++d) out.coords(i, d) += g(rng);
      break;
    }
  }
  return out;
}

Sample augment(const Sample& sample, const Transform& t, std::uint64_t seed) {
  Sample out = sample;
  out.cloud = augment(sample.cloud, t, seed);
  if (t.kind == Transform::Kind::Rotate) out.normals = sample.normals * axis_rotation(t.axis, t.value).transpose();
  return out;
}

}  // namespace x3d::harness
