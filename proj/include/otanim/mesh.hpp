#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "otanim/sparse.hpp"

namespace otanim {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Triangle mesh: positions plus counter-clockwise index triples. Immutable
// after construction; construction validates index ranges and face sanity.
class TriangleMesh {
 public:
  using Face = std::array<int, 3>;

  TriangleMesh() = default;
  TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces);

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t face_count() const { return faces_.size(); }
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  const Vec3& vertex(std::size_t i) const { return vertices_[i]; }
  const Face& face(std::size_t i) const { return faces_[i]; }

  // Nonfatal issues found at construction (e.g. inconsistently oriented
  // neighbor faces). Hard violations throw instead.
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Unique undirected edges, ordered (min, max) lexicographically.
  std::vector<std::array<int, 2>> edges() const;
  bool is_connected() const;
  double mean_edge_length() const;
  Vec3 centroid() const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<std::string> warnings_;
};

TriangleMesh load_obj(const std::filesystem::path& path);
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

struct VertexMask {
  std::string label;         // lip | face | head
  std::vector<int> indices;  // sorted, unique, in range
};

VertexMask make_mask(std::string label, std::vector<int> indices, std::size_t vertex_count);
VertexMask load_mask(const std::filesystem::path& path, std::size_t vertex_count);
void save_mask(const VertexMask& mask, const std::filesystem::path& path);

// Binary symmetric adjacency from face edges; zero diagonal.
SparseMatrix adjacency(const TriangleMesh& mesh);
// L = D - W. Rows sum to zero.
SparseMatrix combinatorial_laplacian(const SparseMatrix& adjacency);
SparseMatrix combinatorial_laplacian(const TriangleMesh& mesh);
// L' = I - D^{-1/2} W D^{-1/2}. Throws on isolated vertices.
SparseMatrix normalized_laplacian(const SparseMatrix& adjacency);
SparseMatrix normalized_laplacian(const TriangleMesh& mesh);

struct FaceGeometry {
  std::vector<double> areas;
  std::vector<Vec3> barycenters;
  std::vector<Vec3> normals;          // unit, or zero for degenerate faces
  std::vector<std::uint8_t> degenerate;  // area below 1e-12
};

FaceGeometry face_geometry(const TriangleMesh& mesh);

// Icosahedron subdivided `subdiv` times and projected to a sphere.
// Vertex counts: 12, 42, 162, 642, ...
TriangleMesh make_icosphere(int subdiv, double radius = 1.0);

}  // namespace otanim
