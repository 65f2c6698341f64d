#include "mtopo/radar.hpp"

#include "mtopo/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mtopo {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// (exp(i t) - 1) / (i t), evaluated without cancellation.
cd phi1(double t) {
  if (t == 0.0) return {1.0, 0.0};
  const double s = std::sin(0.5 * t);
  return {std::sin(t) / t, 2.0 * s * s / t};
}

// Integral of exp(a u + b v) over the unit right simplex for small |a|, |b|:
// sum_k h_k(a, b) / (k + 2)!, h_k the complete homogeneous polynomial.
cd simplex_series(cd a, cd b) {
  cd h = 1.0;       // h_0
  cd bpow = 1.0;    // b^k
  double fact = 2.0;  // (k + 2)!
  cd sum = h / fact;
  for (int k = 1; k <= 24; ++k) {
    bpow *= b;
    h = a * h + bpow;
    fact *= static_cast<double>(k + 2);
    sum += h / fact;
  }
  return sum;
}

}  // namespace

void check_wave_config(const WaveConfig& cfg) {
  if (!(cfg.wavelength > 0.0) || !std::isfinite(cfg.wavelength)) {
    fail(ErrorCode::InvalidArgument, "wave config: wavelength must be positive");
  }
  if (cfg.n_angles < 8) fail(ErrorCode::InvalidArgument, "wave config: n_angles must be >= 8");
}

double azimuth(const WaveConfig& cfg, int k) { return 2.0 * kPi * k / cfg.n_angles; }

std::complex<double> triangle_po_integral(const Vec3& a, const Vec3& b, const Vec3& c,
                                          const Vec3& q) {
  const double area = 0.5 * (b - a).cross(c - a).norm();
  if (!(area > kDegenerateArea)) fail(ErrorCode::DegenerateFace, "triangle_po_integral: degenerate");
  const double al[3] = {q.dot(a), q.dot(b), q.dot(c)};

  // The integral is 2A exp(i al_p) g(i(al_j - al_p), i(al_k - al_p)) for any
  // pivot p. Pick the pivot whose opposite difference is largest so the
  // divided difference below is well conditioned.
  const double d[3] = {std::abs(al[2] - al[1]), std::abs(al[2] - al[0]), std::abs(al[1] - al[0])};
  const int p = static_cast<int>(std::max_element(d, d + 3) - d);
  const double x = al[(p + 1) % 3] - al[p];
  const double y = al[(p + 2) % 3] - al[p];
  const cd base = std::polar(2.0 * area, al[p]);
  if (d[p] < 1.0) {
    return base * simplex_series(cd(0.0, x), cd(0.0, y));
  }
  return base * (phi1(x) - phi1(y)) / cd(0.0, x - y);
}

Response simulate_facets(const Mesh& mesh, const WaveConfig& cfg) {
  check_wave_config(cfg);
  const double k0 = 2.0 * kPi / cfg.wavelength;
  std::vector<Vec3> normals(mesh.num_faces());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) normals[f] = face_normal(mesh, f);

  Response out(static_cast<std::size_t>(cfg.n_angles));
  for (int k = 0; k < cfg.n_angles; ++k) {
    const double th = azimuth(cfg, k);
    const Vec3 u(std::cos(th), std::sin(th), 0.0);
    const Vec3 q = 2.0 * k0 * u;
    cd field = 0.0;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
      const double lit = normals[f].dot(u);
      if (lit <= 0.0) continue;
      const auto& t = mesh.faces[f];
      field += lit * triangle_po_integral(mesh.vertices[t[0]], mesh.vertices[t[1]],
                                          mesh.vertices[t[2]], q);
    }
    out[static_cast<std::size_t>(k)] =
        4.0 * kPi * std::norm(field) / (cfg.wavelength * cfg.wavelength);
  }
  return out;
}

Response simulate(const Mesh& mesh, const WaveConfig& cfg) {
  check_wave_config(cfg);
  if (!is_closed(mesh)) fail(ErrorCode::OpenMesh, "simulate: mesh is not closed");
  return simulate_facets(mesh, cfg);
}

void write_response_csv(const std::filesystem::path& path, const Response& r,
                        const WaveConfig& cfg) {
  if (static_cast<int>(r.size()) != cfg.n_angles) {
    fail(ErrorCode::ShapeMismatch, "write_response_csv: length does not match n_angles");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "angle_rad,value\n";
  char buf[96];
  for (std::size_t k = 0; k < r.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", azimuth(cfg, static_cast<int>(k)), r[k]);
    out << buf;
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

Response read_response_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "angle_rad,value") {
    fail(ErrorCode::Parse, path.string() + ": missing header");
  }
  Response r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail(ErrorCode::Parse, path.string() + ": malformed row");
    char* end = nullptr;
    const std::string val = line.substr(comma + 1);
    const double v = std::strtod(val.c_str(), &end);
    if (end == val.c_str()) fail(ErrorCode::Parse, path.string() + ": bad value");
    r.push_back(v);
  }
  return r;
}

}  // namespace mtopo
