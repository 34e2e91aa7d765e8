#include "otanim/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace otanim {

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  const int n = static_cast<int>(vertices_.size());
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const Face& face = faces_[f];
    for (const int v : face) {
      if (v < 0 || v >= n) {
        throw std::invalid_argument("mesh: face " + std::to_string(f) + " references vertex " +
                                    std::to_string(v) + " outside [0, " + std::to_string(n) + ")");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw std::invalid_argument("mesh: face " + std::to_string(f) + " repeats a vertex");
    }
  }
  // Orientation: a directed edge appearing twice means two neighbor faces
  // disagree on winding. Reported, not fatal.
  std::set<std::pair<int, int>> directed;
  bool flagged = false;
  for (const Face& face : faces_) {
    for (int k = 0; k < 3; ++k) {
      const auto e = std::make_pair(face[k], face[(k + 1) % 3]);
      if (!directed.insert(e).second && !flagged) {
        warnings_.push_back("inconsistent face orientation around edge " +
                            std::to_string(e.first) + "-" + std::to_string(e.second));
        flagged = true;
      }
    }
  }
}

std::vector<std::array<int, 2>> TriangleMesh::edges() const {
  std::set<std::array<int, 2>> unique;
  for (const Face& f : faces_) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      unique.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return {unique.begin(), unique.end()};
}

bool TriangleMesh::is_connected() const {
  if (vertices_.empty()) return true;
  std::vector<std::vector<int>> nbrs(vertices_.size());
  for (const Face& f : faces_) {
    for (int k = 0; k < 3; ++k) {
      nbrs[static_cast<std::size_t>(f[k])].push_back(f[(k + 1) % 3]);
      nbrs[static_cast<std::size_t>(f[(k + 1) % 3])].push_back(f[k]);
    }
  }
  std::vector<char> seen(vertices_.size(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (const int w : nbrs[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = 1;
        ++count;
        stack.push_back(w);
      }
    }
  }
  return count == vertices_.size();
}

double TriangleMesh::mean_edge_length() const {
  const auto es = edges();
  if (es.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : es) {
    total += (vertices_[static_cast<std::size_t>(e[0])] - vertices_[static_cast<std::size_t>(e[1])]).norm();
  }
  return total / static_cast<double>(es.size());
}

Vec3 TriangleMesh::centroid() const {
  Vec3 c;
  for (const Vec3& v : vertices_) c += v;
  return vertices_.empty() ? c : c / static_cast<double>(vertices_.size());
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("obj: cannot open " + path.string());
  std::vector<Vec3> vertices;
  std::vector<TriangleMesh::Face> faces;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    const auto fail = [&](const std::string& why) {
      throw std::runtime_error("obj: " + path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x >> v.y >> v.z)) fail("malformed vertex line");
      vertices.push_back(v);
    } else if (tag == "f") {
      long a, b, c;
      if (!(ls >> a >> b >> c)) fail("malformed face line (plain triangles only)");
      long extra;
      if (ls >> extra) fail("non-triangular face");
      for (const long i : {a, b, c}) {
        if (i < 1 || i > static_cast<long>(vertices.size())) {
          fail("face index " + std::to_string(i) + " out of range (indices are 1-based)");
        }
      }
      faces.push_back({static_cast<int>(a - 1), static_cast<int>(b - 1), static_cast<int>(c - 1)});
    } else if (tag == "vn" || tag == "vt" || tag == "g" || tag == "o" || tag == "s" ||
               tag == "mtllib" || tag == "usemtl" || tag == "l") {
      continue;  // tolerated but unused
    } else {
      fail("unrecognized line '" + tag + "'");
    }
  }
  return TriangleMesh(std::move(vertices), std::move(faces));
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("obj: cannot open " + path.string() + " for writing");
  char buf[128];
  for (const Vec3& v : mesh.vertices()) {
    std::snprintf(buf, sizeof buf, "v %.12g %.12g %.12g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& f : mesh.faces()) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
  if (!out) throw std::runtime_error("obj: write failed for " + path.string());
}

VertexMask make_mask(std::string label, std::vector<int> indices, std::size_t vertex_count) {
  if (indices.empty()) throw std::invalid_argument("mask '" + label + "': empty index set");
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  if (indices.front() < 0 || indices.back() >= static_cast<int>(vertex_count)) {
    throw std::invalid_argument("mask '" + label + "': index out of range");
  }
  return {std::move(label), std::move(indices)};
}

VertexMask load_mask(const std::filesystem::path& path, std::size_t vertex_count) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("mask: cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string hash, word, label;
  if (!(hs >> hash >> word >> label) || hash != "#" || word != "mask") {
    throw std::runtime_error("mask: " + path.string() + ": expected '# mask <label>' header");
  }
  std::vector<int> indices;
  int idx;
  while (in >> idx) indices.push_back(idx);
  return make_mask(label, std::move(indices), vertex_count);
}

void save_mask(const VertexMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("mask: cannot open " + path.string() + " for writing");
  out << "# mask " << mask.label << '\n';
  for (const int i : mask.indices) out << i << '\n';
}

SparseMatrix adjacency(const TriangleMesh& mesh) {
  const std::size_t n = mesh.vertex_count();
  std::set<std::pair<int, int>> seen;
  std::vector<SparseMatrix::Triplet> trips;
  for (const auto& f : mesh.faces()) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      if (seen.insert({std::min(a, b), std::max(a, b)}).second) {
        trips.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b), 1.0});
        trips.push_back({static_cast<std::size_t>(b), static_cast<std::size_t>(a), 1.0});
      }
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(trips));
}

SparseMatrix combinatorial_laplacian(const SparseMatrix& w) {
  const std::size_t n = w.rows();
  std::vector<SparseMatrix::Triplet> trips;
  for (std::size_t r = 0; r < n; ++r) {
    double degree = 0.0;
    const auto idx = w.row_indices(r);
    const auto val = w.row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      degree += val[k];
      trips.push_back({r, idx[k], -val[k]});
    }
    trips.push_back({r, r, degree});
  }
  return SparseMatrix::from_triplets(n, n, std::move(trips));
}

SparseMatrix combinatorial_laplacian(const TriangleMesh& mesh) {
  return combinatorial_laplacian(adjacency(mesh));
}

SparseMatrix normalized_laplacian(const SparseMatrix& w) {
  const std::size_t n = w.rows();
  std::vector<double> inv_sqrt_degree(n);
  for (std::size_t r = 0; r < n; ++r) {
    double degree = 0.0;
    for (const double v : w.row_values(r)) degree += v;
    if (degree <= 0.0) {
      throw std::invalid_argument("normalized_laplacian: isolated vertex " + std::to_string(r));
    }
    inv_sqrt_degree[r] = 1.0 / std::sqrt(degree);
  }
  std::vector<SparseMatrix::Triplet> trips;
  for (std::size_t r = 0; r < n; ++r) {
    const auto idx = w.row_indices(r);
    const auto val = w.row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      trips.push_back({r, idx[k], -val[k] * inv_sqrt_degree[r] * inv_sqrt_degree[idx[k]]});
    }
    trips.push_back({r, r, 1.0});
  }
  return SparseMatrix::from_triplets(n, n, std::move(trips));
}

SparseMatrix normalized_laplacian(const TriangleMesh& mesh) {
  return normalized_laplacian(adjacency(mesh));
}

FaceGeometry face_geometry(const TriangleMesh& mesh) {
  FaceGeometry g;
  const std::size_t m = mesh.face_count();
  g.areas.resize(m);
  g.barycenters.resize(m);
  g.normals.resize(m);
  g.degenerate.resize(m);
  for (std::size_t f = 0; f < m; ++f) {
    const auto& face = mesh.face(f);
    const Vec3& a = mesh.vertex(static_cast<std::size_t>(face[0]));
    const Vec3& b = mesh.vertex(static_cast<std::size_t>(face[1]));
    const Vec3& c = mesh.vertex(static_cast<std::size_t>(face[2]));
    const Vec3 cross = (b - a).cross(c - a);
    const double cn = cross.norm();
    g.areas[f] = 0.5 * cn;
    g.barycenters[f] = (a + b + c) / 3.0;
    if (g.areas[f] < 1e-12) {
      g.normals[f] = {0.0, 0.0, 0.0};
      g.degenerate[f] = 1;
    } else {
      g.normals[f] = cross / cn;
      g.degenerate[f] = 0;
    }
  }
  return g;
}

TriangleMesh make_icosphere(int subdiv, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t},   {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1},   {-t, 0, -1}, {-t, 0, 1}};
  std::vector<TriangleMesh::Face> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},   {9, 8, 1}};
  for (Vec3& v : verts) v = v / v.norm();

  for (int s = 0; s < subdiv; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    const auto mid = [&](int a, int b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 m = (verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)]) * 0.5;
      m = m / m.norm();
      verts.push_back(m);
      const int id = static_cast<int>(verts.size() - 1);
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<TriangleMesh::Face> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  for (Vec3& v : verts) v = v * radius;
  return TriangleMesh(std::move(verts), std::move(faces));
}

}  // namespace otanim
