#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mtopo {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

/// Indexed triangle mesh. Faces wind counter-clockwise seen from outside.
///
/// A Mesh is a plain value and may hold invalid data; validate() reports
/// which invariants fail. Loaders and generators only ever return meshes
/// with an empty validation report.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_faces() const { return faces.size(); }

  friend bool operator==(const Mesh& a, const Mesh& b) {
    return a.vertices == b.vertices && a.faces == b.faces;
  }
};

inline constexpr double kDegenerateArea = 1e-12;

enum class ViolationKind {
  IndexOutOfRange,
  RepeatedIndex,
  DegenerateFace,
  InconsistentOrientation,
  InwardOrientation,
};

struct Violation {
  ViolationKind kind;
  std::size_t face;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

ValidationReport validate(const Mesh& mesh);
bool has_violation(const ValidationReport& report, ViolationKind kind);

/// True when every undirected edge is shared by exactly two faces.
bool is_closed(const Mesh& mesh);

struct AxisBox {
  Vec3 min;
  Vec3 max;
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
};

AxisBox bounding_box(const Mesh& mesh);

struct NormalizedMesh {
  Mesh mesh;
  double scale;   // original max axis extent
  Vec3 center;    // original bounding-box center
};

/// Centers at the bounding-box center and divides by the max axis extent.
/// Reconstruct the input with `center + scale * v`.
NormalizedMesh normalize_scale(const Mesh& mesh);

double face_area(const Mesh& mesh, std::size_t f);
Vec3 face_normal(const Mesh& mesh, std::size_t f);
double surface_area(const Mesh& mesh);

/// Signed volume via the divergence theorem; positive for outward winding.
/// Throws OpenMesh when the mesh is not closed.
double volume(const Mesh& mesh);

inline constexpr int kFaceFeatureDim = 16;

/// Per-face descriptor: 3 vertex positions, unit normal, area and interior
/// angles, in that order.
struct FaceFeature {
  std::array<double, 9> vertex_coords;
  std::array<double, 3> unit_normal;
  double area;
  std::array<double, 3> interior_angles;

  std::array<double, kFaceFeatureDim> flatten() const;
};

/// Features of the scale-normalized mesh, one per face.
std::vector<FaceFeature> face_features(const Mesh& mesh);

/// Features of a mesh already in its normalized frame (no re-normalization).
std::vector<FaceFeature> face_features_raw(const Mesh& mesh);

/// Faces sharing an edge, sorted ascending per face.
struct FaceAdjacency {
  std::vector<std::vector<std::uint32_t>> neighbors;

  std::size_t size() const { return neighbors.size(); }
};

FaceAdjacency face_adjacency(const Mesh& mesh);

Mesh transformed(const Mesh& mesh, const Eigen::Matrix3d& linear,
                 const Vec3& offset = Vec3::Zero());

/// Relabels faces: output face i is input face perm[i].
Mesh permute_faces(const Mesh& mesh, const std::vector<std::size_t>& perm);

/// Unsigned distance from a point to the closest triangle of the mesh.
double point_mesh_distance(const Vec3& p, const Mesh& mesh);

}  // namespace mtopo
