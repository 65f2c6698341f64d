#pragma once

#include "mtopo/mesh.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace mtopo {

enum class ShapeClass { Cube = 0, Cylinder = 1, Sphere = 2 };
inline constexpr int kNumShapeClasses = 3;

std::string_view class_name(ShapeClass c);
ShapeClass parse_class(std::string_view name);
bool is_curved(ShapeClass c);

struct PrimitiveSpec {
  ShapeClass shape = ShapeClass::Cube;
  Vec3 scale = Vec3::Ones();
  int curvature_segments = 16;  // ignored for Cube
};

/// Closed, outward-wound primitive centered at the origin, then scaled per
/// axis. Cube: unit side. Cylinder: radius 0.5, height 1 along z, 4n faces.
/// Sphere: UV sphere with n segments and n/2 rings; its vertices sit on a
/// radius chosen so the polyhedron has the volume of the radius-0.5 ball, which
/// keeps different tessellations within the curvature tolerance of each other.
Mesh gen_primitive(const PrimitiveSpec& spec);

enum class Axis { X = 0, Y = 1, Z = 2 };

/// Splits every triangle straddling the plane perpendicular to `axis` at
/// fraction `t` of the bounding box. Edge intersections are shared between
/// neighbouring faces so the result stays manifold.
/// Throws PlaneThroughVertex if any vertex lies within 1e-9 of the plane.
Mesh loop_cut(const Mesh& mesh, Axis axis, double t);

/// Seeded random-order half-edge collapses, each accepted only when the
/// neighbourhoods of both endpoints are coplanar (within 1e-9) and the
/// re-triangulated fan keeps its orientation. The surface never moves.
/// Stops at ceil(target_ratio * |F|) faces or when no legal collapse remains.
Mesh decimate_planar(const Mesh& mesh, double target_ratio, std::uint64_t seed);

struct VariantParams {
  int max_loop_cuts = 8;
  double cut_margin = 1e-3;  // reject planes this close (in bbox fraction) to a vertex
  double min_decimation_ratio = 0.3;
  double max_decimation_ratio = 0.9;
  bool vary_curvature = true;
  int cylinder_min_segments = 14;
  int cylinder_max_segments = 24;
  int sphere_min_segments = 12;
  int sphere_max_segments = 20;
  double curvature_tolerance = 0.02;
  int max_retries = 16;
};

/// Complex topology variant: optional curvature re-tessellation, k loop cuts
/// with k in [1, max_loop_cuts], then planar decimation at a random ratio.
/// The result passes shape_check against gen_primitive(spec).
Mesh gen_variant(const PrimitiveSpec& spec, std::uint64_t seed, const VariantParams& params = {});

struct ShapeCheckResult {
  bool pass;
  double volume_deviation;  // relative
  double area_deviation;    // relative
  double tolerance;
};

inline constexpr double kPlanarShapeTolerance = 1e-9;

/// Cube: relative volume and area deviation <= 1e-9. Curved classes:
/// <= curvature_tolerance. Throws OpenMesh for open input.
ShapeCheckResult shape_check(const Mesh& simple, const Mesh& variant, ShapeClass shape,
                             double curvature_tolerance = 0.02);

}  // namespace mtopo
