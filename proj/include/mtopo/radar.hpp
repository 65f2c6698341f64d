#pragma once

#include "mtopo/mesh.hpp"

#include <complex>
#include <filesystem>
#include <vector>

namespace mtopo {

/// Monostatic plane-wave illumination in the xy-plane.
struct WaveConfig {
  double wavelength = 0.35;
  int n_angles = 64;  // uniform azimuths over [0, 2*pi)
};

/// Linear scattered power per azimuth bin.
using Response = std::vector<double>;

void check_wave_config(const WaveConfig& cfg);

/// Azimuth of bin k: 2*pi*k/n.
double azimuth(const WaveConfig& cfg, int k);

/// Closed-form integral of exp(i q.r) over the triangle abc. Additive under
/// any subdivision of the triangle. Throws DegenerateFace for zero area.
std::complex<double> triangle_po_integral(const Vec3& a, const Vec3& b, const Vec3& c,
                                          const Vec3& q);

/// Physical-optics facet sum: for the radar direction u_k = (cos t_k, sin t_k, 0)
/// the field is the sum over faces with n.u_k > 0 of (n.u_k) * I(face, 2 k0 u_k),
/// k0 = 2 pi / wavelength. The stored value is 4 pi |F|^2 / wavelength^2, i.e.
/// the PO radar cross section. Faces are summed in index order.
/// Throws OpenMesh for open meshes and InvalidArgument for a bad config.
Response simulate(const Mesh& mesh, const WaveConfig& cfg);

/// simulate() without the closedness requirement (flat plates, test fixtures).
Response simulate_facets(const Mesh& mesh, const WaveConfig& cfg);

/// CSV with header `angle_rad,value`, 17 significant digits.
void write_response_csv(const std::filesystem::path& path, const Response& r,
                        const WaveConfig& cfg);
Response read_response_csv(const std::filesystem::path& path);

}  // namespace mtopo
