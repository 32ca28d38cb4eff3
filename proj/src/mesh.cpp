// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/mesh.hpp"

#include "covren/errors.hpp"
#include "covren/fitting.hpp"
#include "marching_cubes_tables.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>

namespace covren {

namespace {

// Corner offsets (x, y, z) in table order.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

constexpr double kMinTriangleArea = 1e-12;

}  // namespace

TriangleMesh marching_cubes_field(const VoxelGrid& grid, std::span<const double> values,
                                  double iso) {
  const GridDims& d = grid.dims;
  if (d.depth < 2 || d.height < 2 || d.width < 2) {
    throw ContractError("marching cubes needs a grid of at least 2 per axis");
  }
  if (values.size() != d.count()) {
    throw ContractError("marching cubes field size does not match the grid");
  }

  TriangleMesh mesh;
  // Grid edge -> vertex. Key = grid point index * 3 + axis of the edge leaving it.
  std::unordered_map<std::size_t, int> edge_vertex;

  auto vertex_on_edge = [&](int x, int y, int z, int edge) {
    const int* a = kCorner[kEdgeCorners[edge][0]];
    const int* b = kCorner[kEdgeCorners[edge][1]];
    int ax = x + a[0], ay = y + a[1], az = z + a[2];
    int bx = x + b[0], by = y + b[1], bz = z + b[2];
    // Canonical direction: from the lower grid point.
    if (bx + by + bz < ax + ay + az) {
      std::swap(ax, bx);
      std::swap(ay, by);
      std::swap(az, bz);
    }
    const int axis = bx != ax ? 0 : (by != ay ? 1 : 2);
    const std::size_t key = d.index(az, ay, ax) * 3 + static_cast<std::size_t>(axis);
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) {
      return it->second;
    }
    const double va = values[d.index(az, ay, ax)];
    const double vb = values[d.index(bz, by, bx)];
    double mu = 0.5;
    if (vb != va) {
      mu = std::clamp((iso - va) / (vb - va), 0.0, 1.0);
    }
    const Vec3 pa = grid.voxel_center(az, ay, ax);
    const Vec3 pb = grid.voxel_center(bz, by, bx);
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(pa + mu * (pb - pa));
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int z = 0; z + 1 < d.depth; ++z) {
    for (int y = 0; y + 1 < d.height; ++y) {
      for (int x = 0; x + 1 < d.width; ++x) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const double v = values[d.index(z + kCorner[c][2], y + kCorner[c][1], x + kCorner[c][0])];
          if (v < iso) cube |= 1 << c;
        }
        if (detail::kEdgeTable[cube] == 0) continue;
        const int* tri = detail::kTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          // With corners below iso flagged, table winding faces the lower values.
          const int i0 = vertex_on_edge(x, y, z, tri[t]);
          const int i1 = vertex_on_edge(x, y, z, tri[t + 1]);
          const int i2 = vertex_on_edge(x, y, z, tri[t + 2]);
          if (i0 == i1 || i1 == i2 || i0 == i2) continue;
          const Vec3& p0 = mesh.vertices[static_cast<std::size_t>(i0)];
          const Vec3& p1 = mesh.vertices[static_cast<std::size_t>(i1)];
          const Vec3& p2 = mesh.vertices[static_cast<std::size_t>(i2)];
          if (0.5 * (p1 - p0).cross(p2 - p0).norm() <= kMinTriangleArea) continue;
          mesh.triangles.push_back({i0, i1, i2});
        }
      }
    }
  }
  return mesh;
}

TriangleMesh marching_cubes(const ObjectVolume& volume, double iso) {
  if (!(iso > 0.0 && iso < 1.0)) {
    throw ContractError("occupancy iso level must lie in (0, 1)");
  }
  std::vector<double> field(volume.voxel_count());
  for (std::size_t i = 0; i < field.size(); ++i) field[i] = sigmoid(volume.occupancy_logit[i]);
  return marching_cubes_field(volume.grid, field, iso);
}

TriangleMesh marching_cubes_density(const ObjectVolume& volume, double density_threshold) {
  if (!(density_threshold > 0.0)) {
    throw ContractError("density threshold must be > 0");
  }
  std::vector<double> field(volume.density.begin(), volume.density.end());
  return marching_cubes_field(volume.grid, field, density_threshold);
}

bool is_watertight(const TriangleMesh& mesh) {
  if (mesh.empty()) return false;
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = t[static_cast<std::size_t>(e)];
      int b = t[static_cast<std::size_t>((e + 1) % 3)];
      if (a > b) std::swap(a, b);
      ++edge_count[{a, b}];
    }
  }
  for (const auto& [edge, count] : edge_count) {
    if (count != 2) return false;
  }
  return true;
}

MeshVolume mesh_volume(const TriangleMesh& mesh) {
  MeshVolume out;
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
    out.volume += a.dot(b.cross(c)) / 6.0;
  }
  out.reliable = is_watertight(mesh);
  return out;
}

double mesh_area(const TriangleMesh& mesh) {
  double area = 0.0;
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
    area += 0.5 * (b - a).cross(c - a).norm();
  }
  return area;
}

AxisAlignedBox mesh_aabb(const TriangleMesh& mesh) {
  if (mesh.vertices.empty() || mesh.triangles.empty()) {
    throw ContractError("mesh_aabb of an empty mesh");
  }
  AxisAlignedBox box{mesh.vertices.front(), mesh.vertices.front()};
  for (const auto& t : mesh.triangles) {
    for (int i : t) {
      const Vec3& p = mesh.vertices[static_cast<std::size_t>(i)];
      box.min_corner = box.min_corner.cwiseMin(p);
      box.max_corner = box.max_corner.cwiseMax(p);
    }
  }
  return box;
}

void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (f == nullptr) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  for (const Vec3& v : mesh.vertices) {
    std::fprintf(f, "v %.6f %.6f %.6f\n", v.x(), v.y(), v.z());
  }
  for (const auto& t : mesh.triangles) {
    std::fprintf(f, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
  }
  const bool failed = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || failed) {
    throw IoError("failed writing " + path.string());
  }
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z())) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      }
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::array<int, 3> tri{};
      for (int& idx : tri) {
        std::string token;
        if (!(ss >> token)) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad face");
        }
        idx = std::stoi(token.substr(0, token.find('/'))) - 1;
        if (idx < 0) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) +
                            ": negative face index");
        }
      }
      mesh.triangles.push_back(tri);
    }
  }
  for (const auto& t : mesh.triangles) {
    for (int i : t) {
      if (static_cast<std::size_t>(i) >= mesh.vertices.size()) {
        throw FormatError(path.string() + ": face index out of range");
      }
    }
  }
  return mesh;
}

}  // namespace covren
