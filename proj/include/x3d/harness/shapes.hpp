#pragma once

// Synthetic labeled shapes sampled uniformly over their surfaces.

#include "x3d/core_geometry.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace x3d::harness {

enum class ShapeClass { Sphere, Plane, Line, Cube, Torus, Cylinder };

std::string_view to_string(ShapeClass shape);
ShapeClass parse_shape(std::string_view name);

enum class RotationMode { None, Yaw, Full };

std::string_view to_string(RotationMode mode);
RotationMode parse_rotation(std::string_view name);

struct DatasetSpec {
  std::vector<std::string> classes{"sphere", "plane", "cube", "torus", "cylinder"};
  Index points = 1024;
  double noise = 0.0;
  Index train_count = 400;
  Index test_count = 100;
  std::uint64_t seed = 1;
  RotationMode rotation = RotationMode::Yaw;
};

struct Sample {
  PointCloud cloud;
  Coords normals;  // unit outward normals; zero for the line class
  int label = 0;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Sample> samples;

  Index size() const { return static_cast<Index>(samples.size()); }
};

/// Canonical shape centered at the origin, jittered, scaled to max radius 1,
/// then rotated about z (Yaw) or uniformly (Full).
Sample sample_shape(ShapeClass shape, Index points, double noise, RotationMode rotation, std::mt19937_64& rng);

/// Balanced dataset: sample i has label i mod classes and its own seeded stream.
Dataset gen_shapes(const DatasetSpec& spec, Index count, std::uint64_t seed);

/// Train split uses spec.seed, test split a derived seed.
Dataset gen_train_split(const DatasetSpec& spec);
Dataset gen_test_split(const DatasetSpec& spec);

struct Transform {
  enum class Kind { Rotate, Scale, Jitter };
  Kind kind = Kind::Rotate;
  int axis = 2;        // rotate only: 0, 1, 2 for x, y, z
  double value = 0.0;  // degrees, factor, or sigma

  /// "rotate:z:30", "scale:0.9", "jitter:0.01"
  static Transform parse(std::string_view text);
  std::string name() const;
};

Eigen::Matrix3d axis_rotation(int axis, double degrees);

/// Rotations and scales are exact linear maps of coords (normals follow rotations);
/// jitter draws from `seed`.
PointCloud augment(const PointCloud& cloud, const Transform& transform, std::uint64_t seed = 0);
Sample augment(const Sample& sample, const Transform& transform, std::uint64_t seed = 0);

}  // namespace x3d::harness
