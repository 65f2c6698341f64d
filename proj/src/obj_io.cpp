#include "mtopo/obj_io.hpp"

#include "mtopo/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace mtopo {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view tok, std::size_t line_no) {
  // strtod rather than from_chars: libstdc++ 11 lacks floating from_chars.
  std::string s(tok);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty()) {
    fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

long long parse_index(std::string_view tok, std::size_t line_no) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": bad face index '" +
                               std::string(tok) + "'");
  }
  return v;
}

}  // namespace

Mesh parse_obj(std::istream& in) {
  Mesh mesh;
  std::vector<std::array<long long, 3>> raw_faces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0].front() == '#') continue;
    if (toks[0] == "v") {
      if (toks.size() != 4) {
        fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": vertex needs 3 coordinates");
      }
      mesh.vertices.emplace_back(parse_double(toks[1], line_no), parse_double(toks[2], line_no),
                                 parse_double(toks[3], line_no));
    } else if (toks[0] == "f") {
      if (toks.size() != 4) {
        fail(ErrorCode::NonTriangular,
             "line " + std::to_string(line_no) + ": non-triangular face");
      }
      raw_faces.push_back({parse_index(toks[1], line_no), parse_index(toks[2], line_no),
                           parse_index(toks[3], line_no)});
    } else {
      fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": unsupported record '" +
                                 std::string(toks[0]) + "'");
    }
  }
  const auto n = static_cast<long long>(mesh.vertices.size());
  for (const auto& rf : raw_faces) {
    Face f{};
    for (int k = 0; k < 3; ++k) {
      if (rf[k] < 1 || rf[k] > n) {
        fail(ErrorCode::IndexOutOfRange, "face index " + std::to_string(rf[k]) +
                                             " out of range (" + std::to_string(n) +
                                             " vertices)");
      }
      f[k] = static_cast<std::uint32_t>(rf[k] - 1);
    }
    mesh.faces.push_back(f);
  }
  const auto report = validate(mesh);
  if (!report.empty()) fail(ErrorCode::InvalidMesh, report.front().message);
  return mesh;
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return parse_obj(in);
}

void write_obj(std::ostream& out, const Mesh& mesh) {
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

std::string to_obj_string(const Mesh& mesh) {
  std::ostringstream os;
  write_obj(os, mesh);
  return os.str();
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  write_obj(out, mesh);
  out.flush();
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace mtopo
