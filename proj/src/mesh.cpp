#include "mtopo/mesh.hpp"

#include "mtopo/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

namespace mtopo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "parse";
    case ErrorCode::NonTriangular: return "non-triangular";
    case ErrorCode::IndexOutOfRange: return "index out of range";
    case ErrorCode::InvalidMesh: return "invalid mesh";
    case ErrorCode::DegenerateFace: return "degenerate face";
    case ErrorCode::OpenMesh: return "open mesh";
    case ErrorCode::Io: return "io";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::PlaneThroughVertex: return "plane through vertex";
    case ErrorCode::DegenerateSplit: return "degenerate split";
    case ErrorCode::ShapeCheckFailed: return "shape check failed";
    case ErrorCode::SamplingExhausted: return "sampling exhausted";
    case ErrorCode::ShapeMismatch: return "shape mismatch";
    case ErrorCode::EmptyInput: return "empty input";
    case ErrorCode::Config: return "config";
    case ErrorCode::ArchitectureMismatch: return "architecture mismatch";
    case ErrorCode::Numeric: return "numeric";
  }
  return "unknown";
}

namespace {

using EdgeKey = std::pair<std::uint32_t, std::uint32_t>;

EdgeKey undirected(std::uint32_t a, std::uint32_t b) {
  return a < b ? EdgeKey{a, b} : EdgeKey{b, a};
}

bool indices_ok(const Mesh& mesh) {
  const auto n = mesh.vertices.size();
  for (const auto& f : mesh.faces) {
    if (f[0] >= n || f[1] >= n || f[2] >= n) return false;
  }
  return true;
}

double signed_volume_unchecked(const Mesh& mesh) {
  double v = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    v += a.dot(b.cross(c));
  }
  return v / 6.0;
}

double angle_between(const Vec3& u, const Vec3& v) {
  return std::atan2(u.cross(v).norm(), u.dot(v));
}

}  // namespace

ValidationReport validate(const Mesh& mesh) {
  ValidationReport report;
  const auto n = mesh.vertices.size();
  bool index_error = false;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    if (f[0] >= n || f[1] >= n || f[2] >= n) {
      report.push_back({ViolationKind::IndexOutOfRange, i,
                        "face " + std::to_string(i) + " references a missing vertex"});
      index_error = true;
      continue;
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      report.push_back({ViolationKind::RepeatedIndex, i,
                        "face " + std::to_string(i) + " repeats a vertex"});
      continue;
    }
    if (!(face_area(mesh, i) > kDegenerateArea)) {
      report.push_back({ViolationKind::DegenerateFace, i,
                        "face " + std::to_string(i) + " has near-zero area"});
    }
  }
  if (index_error) return report;

  // Each directed edge may appear at most once in a consistently oriented mesh.
  std::map<EdgeKey, std::size_t> directed;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    for (int k = 0; k < 3; ++k) {
      const EdgeKey e{f[k], f[(k + 1) % 3]};
      auto [it, inserted] = directed.emplace(e, i);
      if (!inserted) {
        report.push_back({ViolationKind::InconsistentOrientation, i,
                          "face " + std::to_string(i) + " traverses edge (" +
                              std::to_string(e.first) + "," + std::to_string(e.second) +
                              ") in the same direction as face " +
                              std::to_string(it->second)});
      }
    }
  }
  const bool oriented = !has_violation(report, ViolationKind::InconsistentOrientation);
  if (oriented && !mesh.faces.empty() && is_closed(mesh) &&
      signed_volume_unchecked(mesh) < 0.0) {
    report.push_back({ViolationKind::InwardOrientation, 0,
                      "closed mesh has negative signed volume (inward winding)"});
  }
  return report;
}

bool has_violation(const ValidationReport& report, ViolationKind kind) {
  return std::any_of(report.begin(), report.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

bool is_closed(const Mesh& mesh) {
  if (!indices_ok(mesh)) return false;
  std::map<EdgeKey, int> count;
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) ++count[undirected(f[k], f[(k + 1) % 3])];
  }
  return std::all_of(count.begin(), count.end(),
                     [](const auto& kv) { return kv.second == 2; });
}

AxisBox bounding_box(const Mesh& mesh) {
  AxisBox box{Vec3::Constant(std::numeric_limits<double>::infinity()),
              Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& v : mesh.vertices) {
    box.min = box.min.cwiseMin(v);
    box.max = box.max.cwiseMax(v);
  }
  return box;
}

NormalizedMesh normalize_scale(const Mesh& mesh) {
  if (mesh.vertices.empty()) fail(ErrorCode::DegenerateFace, "normalize_scale: empty mesh");
  const AxisBox box = bounding_box(mesh);
  const double scale = box.extent().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    fail(ErrorCode::DegenerateFace, "normalize_scale: zero-extent mesh");
  }
  NormalizedMesh out{mesh, scale, box.center()};
  for (auto& v : out.mesh.vertices) v = (v - out.center) / scale;
  return out;
}

double face_area(const Mesh& mesh, std::size_t f) {
  const auto& t = mesh.faces[f];
  const Vec3& a = mesh.vertices[t[0]];
  return 0.5 * (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).norm();
}

Vec3 face_normal(const Mesh& mesh, std::size_t f) {
  const auto& t = mesh.faces[f];
  const Vec3& a = mesh.vertices[t[0]];
  return (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).normalized();
}

double surface_area(const Mesh& mesh) {
  double s = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) s += face_area(mesh, i);
  return s;
}

double volume(const Mesh& mesh) {
  if (!is_closed(mesh)) fail(ErrorCode::OpenMesh, "volume: mesh is not closed");
  return signed_volume_unchecked(mesh);
}

std::array<double, kFaceFeatureDim> FaceFeature::flatten() const {
  std::array<double, kFaceFeatureDim> out{};
  std::copy(vertex_coords.begin(), vertex_coords.end(), out.begin());
  std::copy(unit_normal.begin(), unit_normal.end(), out.begin() + 9);
  out[12] = area;
  std::copy(interior_angles.begin(), interior_angles.end(), out.begin() + 13);
  return out;
}

std::vector<FaceFeature> face_features_raw(const Mesh& mesh) {
  std::vector<FaceFeature> out;
  out.reserve(mesh.faces.size());
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& t = mesh.faces[i];
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    const Vec3 cr = (b - a).cross(c - a);
    const double area = 0.5 * cr.norm();
    if (!(area > kDegenerateArea)) {
      fail(ErrorCode::DegenerateFace, "face_features: face " + std::to_string(i) +
                                          " is degenerate");
    }
    const Vec3 n = cr / cr.norm();
    FaceFeature ff{};
    for (int k = 0; k < 3; ++k) {
      ff.vertex_coords[k] = a[k];
      ff.vertex_coords[3 + k] = b[k];
      ff.vertex_coords[6 + k] = c[k];
      ff.unit_normal[k] = n[k];
    }
    ff.area = area;
    ff.interior_angles = {angle_between(b - a, c - a), angle_between(c - b, a - b),
                          angle_between(a - c, b - c)};
    out.push_back(ff);
  }
  return out;
}

std::vector<FaceFeature> face_features(const Mesh& mesh) {
  return face_features_raw(normalize_scale(mesh).mesh);
}

FaceAdjacency face_adjacency(const Mesh& mesh) {
  std::map<EdgeKey, std::vector<std::uint32_t>> edge_faces;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    for (int k = 0; k < 3; ++k) {
      edge_faces[undirected(f[k], f[(k + 1) % 3])].push_back(static_cast<std::uint32_t>(i));
    }
  }
  FaceAdjacency adj;
  adj.neighbors.resize(mesh.faces.size());
  for (const auto& [edge, faces] : edge_faces) {
    for (auto a : faces) {
      for (auto b : faces) {
        if (a != b) adj.neighbors[a].push_back(b);
      }
    }
  }
  for (auto& n : adj.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

Mesh transformed(const Mesh& mesh, const Eigen::Matrix3d& linear, const Vec3& offset) {
  Mesh out = mesh;
  for (auto& v : out.vertices) v = linear * v + offset;
  if (linear.determinant() < 0.0) {
    for (auto& f : out.faces) std::swap(f[1], f[2]);
  }
  return out;
}

Mesh permute_faces(const Mesh& mesh, const std::vector<std::size_t>& perm) {
  if (perm.size() != mesh.faces.size()) {
    fail(ErrorCode::ShapeMismatch, "permute_faces: permutation size mismatch");
  }
  Mesh out;
  out.vertices = mesh.vertices;
  out.faces.reserve(perm.size());
  for (auto p : perm) out.faces.push_back(mesh.faces.at(p));
  return out;
}

namespace {

// Closest point on triangle (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

double point_mesh_distance(const Vec3& p, const Mesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : mesh.faces) {
    const Vec3 q = closest_on_triangle(p, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                       mesh.vertices[f[2]]);
    best = std::min(best, (p - q).norm());
  }
  return best;
}

}  // namespace mtopo
