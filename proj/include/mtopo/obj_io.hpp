#pragma once

#include "mtopo/mesh.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace mtopo {

// Wavefront OBJ subset: `v x y z` and `f i j k` (1-based) lines, `#` comments
// and blank lines. Anything else is a parse error.

/// Parses OBJ text. Throws Parse, NonTriangular, IndexOutOfRange or
/// InvalidMesh (any other invariant violation).
Mesh parse_obj(std::istream& in);
Mesh load_mesh(const std::filesystem::path& path);

/// Vertices are written with 17 significant digits so a reload is bit-exact.
void write_obj(std::ostream& out, const Mesh& mesh);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);

std::string to_obj_string(const Mesh& mesh);

}  // namespace mtopo
