#pragma once

#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pqnet/common.hpp"

namespace pqnet {

/// Indexed triangle mesh.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const noexcept { return triangles.empty(); }

  double triangle_area(std::size_t t) const {
    const auto& f = triangles[t];
    return 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
  }

  /// Signed enclosed volume (positive for outward-facing closed meshes).
  double signed_volume() const {
    double v = 0.0;
    for (const auto& f : triangles)
      v += vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]])) / 6.0;
    return v;
  }

  /// V - E + F, counting each undirected edge once.
  long euler_characteristic() const {
    std::set<std::pair<int, int>> edges;
    for (const auto& f : triangles)
      for (int i = 0; i < 3; ++i) {
        int a = f[i], b = f[(i + 1) % 3];
        if (a > b) std::swap(a, b);
        edges.emplace(a, b);
      }
    return static_cast<long>(vertices.size()) - static_cast<long>(edges.size()) +
           static_cast<long>(triangles.size());
  }

  /// True when every undirected edge is shared by exactly two triangles.
  bool is_closed_manifold() const {
    std::map<std::pair<int, int>, int> uses;
    for (const auto& f : triangles)
      for (int i = 0; i < 3; ++i) {
        int a = f[i], b = f[(i + 1) % 3];
        if (a > b) std::swap(a, b);
        ++uses[{a, b}];
      }
    for (const auto& [e, c] : uses)
      if (c != 2) return false;
    return !uses.empty();
  }
};

/// Reads vertices (`v`) and faces (`f`) from an ASCII OBJ file. Faces with more
/// than three corners are fan-triangulated; texture/normal indices are ignored.
inline Mesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open OBJ file: " + path);
  Mesh m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z()))
        throw InvalidInput(path + ":" + std::to_string(lineno) + ": malformed vertex");
      m.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i < 0 ? static_cast<int>(m.vertices.size()) + i : i - 1);
      }
      if (idx.size() < 3)
        throw InvalidInput(path + ":" + std::to_string(lineno) + ": face with < 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k)
        m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  for (const auto& f : m.triangles)
    for (int i : f)
      if (i < 0 || i >= static_cast<int>(m.vertices.size()))
        throw InvalidInput(path + ": face index out of range");
  return m;
}

/// Writes meshes as one OBJ file with a `g <name>` group per entry.
inline void write_obj(const std::string& path,
                      const std::vector<std::pair<std::string, const Mesh*>>& groups) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write OBJ file: " + path);
  out.precision(7);
  std::size_t base = 1;
  for (const auto& [name, mesh] : groups) {
    out << "g " << name << "\n";
    for (const auto& v : mesh->vertices) out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (const auto& f : mesh->triangles)
      out << "f " << f[0] + base << " " << f[1] + base << " " << f[2] + base << "\n";
    base += mesh->vertices.size();
  }
}

inline void write_obj(const std::string& path, const Mesh& mesh) {
  write_obj(path, {{"mesh", &mesh}});
}

}  // namespace pqnet
