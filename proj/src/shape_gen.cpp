#include "mtopo/shape_gen.hpp"

#include "mtopo/error.hpp"
#include "mtopo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace mtopo {

std::string_view class_name(ShapeClass c) {
  switch (c) {
    case ShapeClass::Cube: return "cube";
    case ShapeClass::Cylinder: return "cylinder";
    case ShapeClass::Sphere: return "sphere";
  }
  return "unknown";
}

ShapeClass parse_class(std::string_view name) {
  if (name == "cube") return ShapeClass::Cube;
  if (name == "cylinder") return ShapeClass::Cylinder;
  if (name == "sphere") return ShapeClass::Sphere;
  fail(ErrorCode::InvalidArgument, "unknown shape class '" + std::string(name) + "'");
}

bool is_curved(ShapeClass c) { return c != ShapeClass::Cube; }

namespace {

constexpr double kPi = std::numbers::pi;

void add_quad(Mesh& m, std::uint32_t a, std::uint32_t b, std::uint32_t c, std::uint32_t d) {
  m.faces.push_back({a, b, c});
  m.faces.push_back({a, c, d});
}

Mesh unit_cube() {
  Mesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) - 0.5, ((i >> 1) & 1) - 0.5, ((i >> 2) & 1) - 0.5);
  }
  add_quad(m, 0, 2, 3, 1);  // -z
  add_quad(m, 4, 5, 7, 6);  // +z
  add_quad(m, 0, 1, 5, 4);  // -y
  add_quad(m, 2, 6, 7, 3);  // +y
  add_quad(m, 0, 4, 6, 2);  // -x
  add_quad(m, 1, 3, 7, 5);  // +x
  return m;
}

Mesh unit_cylinder(int n) {
  Mesh m;
  const auto un = static_cast<std::uint32_t>(n);
  for (int ring = 0; ring < 2; ++ring) {
    const double z = ring == 0 ? -0.5 : 0.5;
    for (int i = 0; i < n; ++i) {
      const double phi = 2.0 * kPi * i / n;
      m.vertices.emplace_back(0.5 * std::cos(phi), 0.5 * std::sin(phi), z);
    }
  }
  m.vertices.emplace_back(0.0, 0.0, -0.5);
  m.vertices.emplace_back(0.0, 0.0, 0.5);
  const std::uint32_t cb = 2 * un, ct = 2 * un + 1;
  for (std::uint32_t i = 0; i < un; ++i) {
    const std::uint32_t j = (i + 1) % un;
    add_quad(m, i, j, un + j, un + i);
    m.faces.push_back({cb, j, i});
    m.faces.push_back({ct, un + i, un + j});
  }
  return m;
}

Mesh uv_sphere(int segments, double radius) {
  const int rings = std::max(2, segments / 2);
  const auto n = static_cast<std::uint32_t>(segments);
  Mesh m;
  m.vertices.emplace_back(0.0, 0.0, radius);
  for (int i = 1; i < rings; ++i) {
    const double theta = kPi * i / rings;
    for (int j = 0; j < segments; ++j) {
      const double phi = 2.0 * kPi * j / segments;
      m.vertices.emplace_back(radius * std::sin(theta) * std::cos(phi),
                              radius * std::sin(theta) * std::sin(phi),
                              radius * std::cos(theta));
    }
  }
  m.vertices.emplace_back(0.0, 0.0, -radius);
  const auto ring_start = [n](int i) { return 1 + static_cast<std::uint32_t>(i - 1) * n; };
  const auto bottom = static_cast<std::uint32_t>(m.vertices.size() - 1);
  for (std::uint32_t j = 0; j < n; ++j) {
    const std::uint32_t k = (j + 1) % n;
    m.faces.push_back({0, ring_start(1) + j, ring_start(1) + k});
    for (int i = 1; i + 1 < rings; ++i) {
      add_quad(m, ring_start(i) + j, ring_start(i + 1) + j, ring_start(i + 1) + k,
               ring_start(i) + k);
    }
    m.faces.push_back({bottom, ring_start(rings - 1) + k, ring_start(rings - 1) + j});
  }
  return m;
}

}  // namespace

Mesh gen_primitive(const PrimitiveSpec& spec) {
  if (!(spec.scale.array() > 0.0).all()) {
    fail(ErrorCode::InvalidArgument, "gen_primitive: scale must be positive");
  }
  Mesh m;
  switch (spec.shape) {
    case ShapeClass::Cube:
      m = unit_cube();
      break;
    case ShapeClass::Cylinder:
      if (spec.curvature_segments < 8) {
        fail(ErrorCode::InvalidArgument, "gen_primitive: need at least 8 curvature segments");
      }
      m = unit_cylinder(spec.curvature_segments);
      break;
    case ShapeClass::Sphere: {
      if (spec.curvature_segments < 8) {
        fail(ErrorCode::InvalidArgument, "gen_primitive: need at least 8 curvature segments");
      }
      const double ball = 4.0 / 3.0 * kPi * 0.125;
      const double poly = volume(uv_sphere(spec.curvature_segments, 0.5));
      m = uv_sphere(spec.curvature_segments, 0.5 * std::cbrt(ball / poly));
      break;
    }
  }
  for (auto& v : m.vertices) v = v.cwiseProduct(spec.scale);
  return m;
}

// ---------------------------------------------------------------------------
// loop cut

Mesh loop_cut(const Mesh& mesh, Axis axis, double t) {
  if (!(t > 0.0 && t < 1.0)) fail(ErrorCode::InvalidArgument, "loop_cut: t must be in (0,1)");
  const int ax = static_cast<int>(axis);
  const AxisBox box = bounding_box(mesh);
  const double plane = box.min[ax] + t * (box.max[ax] - box.min[ax]);
  for (const auto& v : mesh.vertices) {
    if (std::abs(v[ax] - plane) <= 1e-9) {
      fail(ErrorCode::PlaneThroughVertex, "loop_cut: plane passes through a vertex");
    }
  }

  Mesh out;
  out.vertices = mesh.vertices;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> cut_points;
  const auto edge_point = [&](std::uint32_t a, std::uint32_t b) {
    const auto key = a < b ? std::pair{a, b} : std::pair{b, a};
    auto it = cut_points.find(key);
    if (it != cut_points.end()) return it->second;
    const Vec3& p = mesh.vertices[key.first];
    const Vec3& q = mesh.vertices[key.second];
    const double s = (plane - p[ax]) / (q[ax] - p[ax]);
    Vec3 x = p + s * (q - p);
    x[ax] = plane;
    const auto idx = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.push_back(x);
    cut_points.emplace(key, idx);
    return idx;
  };

  for (const auto& f : mesh.faces) {
    bool above[3];
    for (int k = 0; k < 3; ++k) above[k] = mesh.vertices[f[k]][ax] > plane;
    if (above[0] == above[1] && above[1] == above[2]) {
      out.faces.push_back(f);
      continue;
    }
    // Rotate so the vertex alone on its side comes first; winding is kept.
    int lone = 0;
    if (above[1] != above[0] && above[1] != above[2]) lone = 1;
    if (above[2] != above[0] && above[2] != above[1]) lone = 2;
    const std::uint32_t a = f[lone], b = f[(lone + 1) % 3], c = f[(lone + 2) % 3];
    const std::uint32_t pab = edge_point(a, b);
    const std::uint32_t pac = edge_point(a, c);
    out.faces.push_back({a, pab, pac});
    const double d1 = (out.vertices[pab] - out.vertices[c]).squaredNorm();
    const double d2 = (out.vertices[b] - out.vertices[pac]).squaredNorm();
    if (d1 <= d2) {
      out.faces.push_back({pab, b, c});
      out.faces.push_back({pab, c, pac});
    } else {
      out.faces.push_back({pab, b, pac});
      out.faces.push_back({b, c, pac});
    }
  }
  for (std::size_t i = 0; i < out.faces.size(); ++i) {
    if (!(face_area(out, i) > kDegenerateArea)) {
      fail(ErrorCode::DegenerateSplit, "loop_cut: split produced a degenerate triangle");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// planar decimation

namespace {

constexpr double kCoplanarTol = 1e-9;
constexpr double kMinCollapsedArea = 1e-10;

class Decimator {
 public:
  explicit Decimator(const Mesh& mesh) : verts_(mesh.vertices), faces_(mesh.faces) {
    alive_.assign(faces_.size(), true);
    incident_.resize(verts_.size());
    for (std::size_t i = 0; i < faces_.size(); ++i) {
      for (auto v : faces_[i]) incident_[v].push_back(i);
    }
    alive_count_ = faces_.size();
  }

  std::size_t alive_count() const { return alive_count_; }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges() const {
    std::set<std::pair<std::uint32_t, std::uint32_t>> e;
    for (std::size_t i = 0; i < faces_.size(); ++i) {
      if (!alive_[i]) continue;
      const auto& f = faces_[i];
      for (int k = 0; k < 3; ++k) {
        const auto a = f[k], b = f[(k + 1) % 3];
        e.emplace(std::min(a, b), std::max(a, b));
      }
    }
    return {e.begin(), e.end()};
  }

  /// Collapses `from` into `to` if legal.
  bool try_collapse(std::uint32_t from, std::uint32_t to) {
    if (!planar_star(from) || !planar_star(to)) return false;

    const auto ring_from = one_ring(from);
    const auto ring_to = one_ring(to);
    if (!ring_from.count(to)) return false;
    std::vector<std::uint32_t> shared;
    std::set_intersection(ring_from.begin(), ring_from.end(), ring_to.begin(), ring_to.end(),
                          std::back_inserter(shared));
    // Link condition for a closed 2-manifold edge.
    if (shared.size() != 2) return false;

    std::vector<std::size_t> removed, moved;
    for (auto fi : incident_[from]) {
      if (!alive_[fi]) continue;
      const auto& f = faces_[fi];
      if (f[0] == to || f[1] == to || f[2] == to) {
        removed.push_back(fi);
      } else {
        moved.push_back(fi);
      }
    }
    if (removed.size() != 2) return false;

    for (auto fi : moved) {
      Face g = faces_[fi];
      for (auto& v : g) {
        if (v == from) v = to;
      }
      const Vec3 n_old = normal_of(faces_[fi]);
      const Vec3 cr = cross_of(g);
      if (!(0.5 * cr.norm() > kMinCollapsedArea)) return false;
      if (cr.dot(n_old) <= 0.0) return false;
    }

    for (auto fi : removed) {
      alive_[fi] = false;
      --alive_count_;
    }
    for (auto fi : moved) {
      for (auto& v : faces_[fi]) {
        if (v == from) v = to;
      }
      incident_[to].push_back(fi);
    }
    incident_[from].clear();
    prune(to);
    for (auto s : shared) prune(s);
    return true;
  }

  Mesh result() const {
    std::vector<std::int64_t> remap(verts_.size(), -1);
    Mesh out;
    for (std::size_t i = 0; i < faces_.size(); ++i) {
      if (!alive_[i]) continue;
      for (auto v : faces_[i]) remap[v] = 0;
    }
    for (std::size_t v = 0; v < verts_.size(); ++v) {
      if (remap[v] == 0) {
        remap[v] = static_cast<std::int64_t>(out.vertices.size());
        out.vertices.push_back(verts_[v]);
      }
    }
    for (std::size_t i = 0; i < faces_.size(); ++i) {
      if (!alive_[i]) continue;
      const auto& f = faces_[i];
      out.faces.push_back({static_cast<std::uint32_t>(remap[f[0]]),
                           static_cast<std::uint32_t>(remap[f[1]]),
                           static_cast<std::uint32_t>(remap[f[2]])});
    }
    return out;
  }

 private:
  Vec3 cross_of(const Face& f) const {
    return (verts_[f[1]] - verts_[f[0]]).cross(verts_[f[2]] - verts_[f[0]]);
  }
  Vec3 normal_of(const Face& f) const { return cross_of(f).normalized(); }

  std::set<std::uint32_t> one_ring(std::uint32_t v) const {
    std::set<std::uint32_t> ring;
    for (auto fi : incident_[v]) {
      if (!alive_[fi]) continue;
      for (auto u : faces_[fi]) {
        if (u != v) ring.insert(u);
      }
    }
    return ring;
  }

  bool planar_star(std::uint32_t v) const {
    std::size_t best = faces_.size();
    double best_area = -1.0;
    for (auto fi : incident_[v]) {
      if (!alive_[fi]) continue;
      const double a = cross_of(faces_[fi]).norm();
      if (a > best_area) {
        best_area = a;
        best = fi;
      }
    }
    if (best == faces_.size()) return false;
    const Vec3 n = normal_of(faces_[best]);
    const Vec3& o = verts_[v];
    for (auto fi : incident_[v]) {
      if (!alive_[fi]) continue;
      for (auto u : faces_[fi]) {
        if (std::abs(n.dot(verts_[u] - o)) > kCoplanarTol) return false;
      }
      if (normal_of(faces_[fi]).dot(n) <= 0.0) return false;
    }
    return true;
  }

  void prune(std::uint32_t v) {
    auto& inc = incident_[v];
    std::vector<std::size_t> kept;
    for (auto fi : inc) {
      if (alive_[fi] && std::find(kept.begin(), kept.end(), fi) == kept.end()) kept.push_back(fi);
    }
    inc = std::move(kept);
  }

  std::vector<Vec3> verts_;
  std::vector<Face> faces_;
  std::vector<bool> alive_;
  std::vector<std::vector<std::size_t>> incident_;
  std::size_t alive_count_ = 0;
};

}  // namespace

Mesh decimate_planar(const Mesh& mesh, double target_ratio, std::uint64_t seed) {
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "decimate_planar: ratio must be in (0,1]");
  }
  const auto target =
      static_cast<std::size_t>(std::ceil(target_ratio * static_cast<double>(mesh.num_faces())));
  Decimator dec(mesh);
  Rng rng(seed);
  bool progress = true;
  while (progress && dec.alive_count() > target) {
    progress = false;
    auto edges = dec.edges();
    shuffle(edges, rng);
    for (auto [a, b] : edges) {
      if (dec.alive_count() <= target) break;
      if (rng() & 1) std::swap(a, b);
      if (dec.try_collapse(a, b) || dec.try_collapse(b, a)) progress = true;
    }
  }
  return dec.result();
}

// ---------------------------------------------------------------------------
// variants

ShapeCheckResult shape_check(const Mesh& simple, const Mesh& variant, ShapeClass shape,
                             double curvature_tolerance) {
  const double vs = volume(simple), vv = volume(variant);
  const double as = surface_area(simple), av = surface_area(variant);
  ShapeCheckResult r{};
  r.volume_deviation = std::abs(vv - vs) / std::abs(vs);
  r.area_deviation = std::abs(av - as) / as;
  r.tolerance = is_curved(shape) ? curvature_tolerance : kPlanarShapeTolerance;
  r.pass = r.volume_deviation <= r.tolerance && r.area_deviation <= r.tolerance;
  return r;
}

namespace {

bool near_vertex(const Mesh& mesh, int ax, double t, double margin) {
  const AxisBox box = bounding_box(mesh);
  const double extent = box.max[ax] - box.min[ax];
  const double plane = box.min[ax] + t * extent;
  return std::any_of(mesh.vertices.begin(), mesh.vertices.end(), [&](const Vec3& v) {
    return std::abs(v[ax] - plane) <= margin * extent;
  });
}

}  // namespace

Mesh gen_variant(const PrimitiveSpec& spec, std::uint64_t seed, const VariantParams& params) {
  if (params.max_loop_cuts < 1) fail(ErrorCode::InvalidArgument, "gen_variant: max_loop_cuts < 1");
  const Mesh simple = gen_primitive(spec);
  Rng rng(seed);
  ShapeCheckResult last{};
  for (int attempt = 0; attempt < params.max_retries; ++attempt) {
    PrimitiveSpec s = spec;
    if (params.vary_curvature && spec.shape == ShapeClass::Cylinder) {
      s.curvature_segments = static_cast<int>(
          uniform_int(rng, params.cylinder_min_segments, params.cylinder_max_segments));
    } else if (params.vary_curvature && spec.shape == ShapeClass::Sphere) {
      s.curvature_segments = static_cast<int>(
          uniform_int(rng, params.sphere_min_segments, params.sphere_max_segments));
    }
    Mesh m = gen_primitive(s);

    const auto cuts = uniform_int(rng, 1, params.max_loop_cuts);
    for (std::int64_t c = 0; c < cuts; ++c) {
      for (int tries = 0; tries < 100; ++tries) {
        const int ax = static_cast<int>(uniform_int(rng, 0, 2));
        const double t = uniform(rng, 0.05, 0.95);
        if (near_vertex(m, ax, t, params.cut_margin)) continue;
        try {
          m = loop_cut(m, static_cast<Axis>(ax), t);
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DegenerateSplit && e.code() != ErrorCode::PlaneThroughVertex) {
            throw;
          }
        }
      }
    }
    const double ratio = uniform(rng, params.min_decimation_ratio, params.max_decimation_ratio);
    m = decimate_planar(m, ratio, rng());

    last = shape_check(simple, m, spec.shape, params.curvature_tolerance);
    if (last.pass && validate(m).empty()) return m;
  }
  fail(ErrorCode::ShapeCheckFailed,
       "gen_variant: no variant within tolerance after " + std::to_string(params.max_retries) +
           " attempts (volume deviation " + std::to_string(last.volume_deviation) + ")");
}

}  // namespace mtopo
