#include "otanim/resample.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>

#include "otanim/parallel.hpp"

namespace otanim {

namespace {

// Squared point-to-plane error form: q(p) = p'Ap + 2b'p + c.
struct Quadric {
  double a00 = 0, a01 = 0, a02 = 0, a11 = 0, a12 = 0, a22 = 0;
  double b0 = 0, b1 = 0, b2 = 0;
  double c = 0;

  void add_plane(const Vec3& n, double d) {
    a00 += n.x * n.x;
    a01 += n.x * n.y;
    a02 += n.x * n.z;
    a11 += n.y * n.y;
    a12 += n.y * n.z;
    a22 += n.z * n.z;
    b0 += d * n.x;
    b1 += d * n.y;
    b2 += d * n.z;
    c += d * d;
  }

  Quadric& operator+=(const Quadric& o) {
    a00 += o.a00;
    a01 += o.a01;
    a02 += o.a02;
    a11 += o.a11;
    a12 += o.a12;
    a22 += o.a22;
    b0 += o.b0;
    b1 += o.b1;
    b2 += o.b2;
    c += o.c;
    return *this;
  }

  double eval(const Vec3& p) const {
    const double ax = a00 * p.x + a01 * p.y + a02 * p.z;
    const double ay = a01 * p.x + a11 * p.y + a12 * p.z;
    const double az = a02 * p.x + a12 * p.y + a22 * p.z;
    return p.x * ax + p.y * ay + p.z * az + 2.0 * (b0 * p.x + b1 * p.y + b2 * p.z) + c;
  }
};

struct HeapEntry {
  double cost;
  int u, v;        // u < v
  int target;      // endpoint the edge collapses into
  std::uint32_t version_u, version_v;
};

struct HeapOrder {
  // min-heap on (cost, u, v); index ties keep pops deterministic
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    if (a.cost != b.cost) return a.cost > b.cost;
    if (a.u != b.u) return a.u > b.u;
    return a.v > b.v;
  }
};

struct Collapser {
  const TriangleMesh& input;
  std::vector<Vec3> pos;
  std::vector<Quadric> quadrics;
  std::vector<std::set<int>> nbrs;       // alive neighbor vertices
  std::vector<std::set<int>> vfaces;     // alive incident face ids
  std::vector<TriangleMesh::Face> faces;
  std::vector<char> face_alive;
  std::vector<char> alive;
  std::vector<std::uint32_t> version;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapOrder> heap;
  std::size_t n_alive;

  explicit Collapser(const TriangleMesh& mesh)
      : input(mesh),
        pos(mesh.vertices()),
        quadrics(mesh.vertex_count()),
        nbrs(mesh.vertex_count()),
        vfaces(mesh.vertex_count()),
        faces(mesh.faces()),
        face_alive(mesh.face_count(), 1),
        alive(mesh.vertex_count(), 1),
        version(mesh.vertex_count(), 0),
        n_alive(mesh.vertex_count()) {
    for (std::size_t f = 0; f < faces.size(); ++f) {
      const auto& face = faces[f];
      const Vec3& a = pos[static_cast<std::size_t>(face[0])];
      const Vec3& b = pos[static_cast<std::size_t>(face[1])];
      const Vec3& c = pos[static_cast<std::size_t>(face[2])];
      const Vec3 cross = (b - a).cross(c - a);
      const double cn = cross.norm();
      for (int k = 0; k < 3; ++k) {
        vfaces[static_cast<std::size_t>(face[k])].insert(static_cast<int>(f));
        nbrs[static_cast<std::size_t>(face[k])].insert(face[(k + 1) % 3]);
        nbrs[static_cast<std::size_t>(face[(k + 1) % 3])].insert(face[k]);
      }
      if (cn < 1e-300) continue;  // degenerate input face contributes no plane
      const Vec3 n = cross / cn;
      const double d = -n.dot(a);
      for (int k = 0; k < 3; ++k) quadrics[static_cast<std::size_t>(face[k])].add_plane(n, d);
    }
    add_boundary_quadrics();
    for (const auto& e : mesh.edges()) push_edge(e[0], e[1]);
  }

  void add_boundary_quadrics() {
    std::map<std::pair<int, int>, std::vector<int>> edge_faces;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      for (int k = 0; k < 3; ++k) {
        const int a = faces[f][k], b = faces[f][(k + 1) % 3];
        edge_faces[{std::min(a, b), std::max(a, b)}].push_back(static_cast<int>(f));
      }
    }
    for (const auto& [edge, fs] : edge_faces) {
      if (fs.size() != 1) continue;
      const auto& face = faces[static_cast<std::size_t>(fs[0])];
      const Vec3& a = pos[static_cast<std::size_t>(face[0])];
      const Vec3& b = pos[static_cast<std::size_t>(face[1])];
      const Vec3& c = pos[static_cast<std::size_t>(face[2])];
      const Vec3 fn = (b - a).cross(c - a);
      const Vec3& p = pos[static_cast<std::size_t>(edge.first)];
      const Vec3& q = pos[static_cast<std::size_t>(edge.second)];
      Vec3 cn = (q - p).cross(fn);
      const double len = cn.norm();
      if (len < 1e-300) continue;
      cn = cn / len;
      Quadric bq;
      bq.add_plane(cn, -cn.dot(p));
      quadrics[static_cast<std::size_t>(edge.first)] += bq;
      quadrics[static_cast<std::size_t>(edge.second)] += bq;
    }
  }

  void push_edge(int a, int b) {
    const int u = std::min(a, b), v = std::max(a, b);
    Quadric q = quadrics[static_cast<std::size_t>(u)];
    q += quadrics[static_cast<std::size_t>(v)];
    const double cost_u = q.eval(pos[static_cast<std::size_t>(u)]);
    const double cost_v = q.eval(pos[static_cast<std::size_t>(v)]);
    // keep the cheaper endpoint; exact tie keeps the smaller index
    const int target = cost_v < cost_u ? v : u;
    heap.push({std::min(cost_u, cost_v), u, v, target,
               version[static_cast<std::size_t>(u)], version[static_cast<std::size_t>(v)]});
  }

  bool link_condition_ok(int u, int v) const {
    // common neighbors must be exactly the third vertices of the edge's faces
    std::set<int> opposite;
    for (const int f : vfaces[static_cast<std::size_t>(u)]) {
      if (!face_alive[static_cast<std::size_t>(f)]) continue;
      const auto& face = faces[static_cast<std::size_t>(f)];
      if (std::count(face.begin(), face.end(), v) == 0) continue;
      for (const int w : face) {
        if (w != u && w != v) opposite.insert(w);
      }
    }
    std::size_t common = 0;
    const auto& nu = nbrs[static_cast<std::size_t>(u)];
    const auto& nv = nbrs[static_cast<std::size_t>(v)];
    for (const int w : nu) {
      if (nv.count(w)) {
        if (!opposite.count(w)) return false;
        ++common;
      }
    }
    return common == opposite.size();
  }

  bool flips_normal(int src, int dst) const {
    const Vec3& new_pos = pos[static_cast<std::size_t>(dst)];
    for (const int f : vfaces[static_cast<std::size_t>(src)]) {
      if (!face_alive[static_cast<std::size_t>(f)]) continue;
      const auto& face = faces[static_cast<std::size_t>(f)];
      if (std::count(face.begin(), face.end(), dst)) continue;  // vanishes with the edge
      Vec3 before[3], after[3];
      for (int k = 0; k < 3; ++k) {
        before[k] = pos[static_cast<std::size_t>(face[k])];
        after[k] = face[k] == src ? new_pos : before[k];
      }
      const Vec3 n0 = (before[1] - before[0]).cross(before[2] - before[0]);
      const Vec3 n1 = (after[1] - after[0]).cross(after[2] - after[0]);
      if (n0.dot(n1) < 0.0) return true;
    }
    return false;
  }

  void collapse(int src, int dst) {
    // faces on the collapsing edge disappear
    std::vector<int> dead;
    for (const int f : vfaces[static_cast<std::size_t>(src)]) {
      if (!face_alive[static_cast<std::size_t>(f)]) continue;
      const auto& face = faces[static_cast<std::size_t>(f)];
      if (std::count(face.begin(), face.end(), dst)) dead.push_back(f);
    }
    for (const int f : dead) {
      face_alive[static_cast<std::size_t>(f)] = 0;
      for (const int w : faces[static_cast<std::size_t>(f)]) {
        vfaces[static_cast<std::size_t>(w)].erase(f);
      }
    }
    // surviving faces of src now reference dst
    for (const int f : vfaces[static_cast<std::size_t>(src)]) {
      if (!face_alive[static_cast<std::size_t>(f)]) continue;
      for (int& w : faces[static_cast<std::size_t>(f)]) {
        if (w == src) w = dst;
      }
      vfaces[static_cast<std::size_t>(dst)].insert(f);
    }
    vfaces[static_cast<std::size_t>(src)].clear();

    for (const int w : nbrs[static_cast<std::size_t>(src)]) {
      nbrs[static_cast<std::size_t>(w)].erase(src);
      if (w != dst) {
        nbrs[static_cast<std::size_t>(w)].insert(dst);
        nbrs[static_cast<std::size_t>(dst)].insert(w);
      }
    }
    nbrs[static_cast<std::size_t>(src)].clear();

    quadrics[static_cast<std::size_t>(dst)] += quadrics[static_cast<std::size_t>(src)];
    alive[static_cast<std::size_t>(src)] = 0;
    --n_alive;
    ++version[static_cast<std::size_t>(src)];
    ++version[static_cast<std::size_t>(dst)];
    for (const int w : nbrs[static_cast<std::size_t>(dst)]) push_edge(dst, w);
  }

  void run(std::size_t target_n) {
    while (n_alive > target_n) {
      if (heap.empty()) throw DecimationStuck(n_alive, target_n);
      const HeapEntry e = heap.top();
      heap.pop();
      const auto su = static_cast<std::size_t>(e.u);
      const auto sv = static_cast<std::size_t>(e.v);
      if (!alive[su] || !alive[sv]) continue;
      if (version[su] != e.version_u || version[sv] != e.version_v) continue;
      if (!nbrs[su].count(e.v)) continue;
      if (!link_condition_ok(e.u, e.v)) continue;
      const int src = e.target == e.u ? e.v : e.u;
      if (flips_normal(src, e.target)) continue;
      collapse(src, e.target);
    }
  }
};

}  // namespace

DecimateResult qem_decimate(const TriangleMesh& mesh, std::size_t target_n) {
  if (target_n < 4 || target_n >= mesh.vertex_count()) {
    throw std::invalid_argument("qem_decimate: target must be in [4, N), got " +
                                std::to_string(target_n));
  }
  if (!mesh.is_connected()) throw std::invalid_argument("qem_decimate: mesh must be connected");

  Collapser state(mesh);
  state.run(target_n);

  std::vector<int> kept;
  std::vector<int> remap(mesh.vertex_count(), -1);
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    if (state.alive[i]) {
      remap[i] = static_cast<int>(kept.size());
      kept.push_back(static_cast<int>(i));
    }
  }

  std::vector<Vec3> coarse_verts(kept.size());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    coarse_verts[r] = mesh.vertex(static_cast<std::size_t>(kept[r]));
  }
  std::vector<TriangleMesh::Face> coarse_faces;
  std::set<std::array<int, 3>> dedupe;
  for (std::size_t f = 0; f < state.faces.size(); ++f) {
    if (!state.face_alive[f]) continue;
    TriangleMesh::Face face{remap[static_cast<std::size_t>(state.faces[f][0])],
                            remap[static_cast<std::size_t>(state.faces[f][1])],
                            remap[static_cast<std::size_t>(state.faces[f][2])]};
    std::array<int, 3> key = {face[0], face[1], face[2]};
    std::sort(key.begin(), key.end());
    if (dedupe.insert(key).second) coarse_faces.push_back(face);
  }

  std::vector<SparseMatrix::Triplet> trips;
  trips.reserve(kept.size());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    trips.push_back({r, static_cast<std::size_t>(kept[r]), 1.0});
  }
  SparseMatrix selection =
      SparseMatrix::from_triplets(kept.size(), mesh.vertex_count(), std::move(trips));

  return {TriangleMesh(std::move(coarse_verts), std::move(coarse_faces)), std::move(selection),
          std::move(kept)};
}

namespace {

// Barycentric coordinates of the point of the triangle closest to p.
std::array<double, 3> closest_point_barycentric(const Vec3& p, const Vec3& a, const Vec3& b,
                                                const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {1.0, 0.0, 0.0};
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {0.0, 1.0, 0.0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {1.0 - v, v, 0.0};
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {0.0, 0.0, 1.0};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {1.0 - w, 0.0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0.0, 1.0 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return {1.0 - v - w, v, w};
}

}  // namespace

SparseMatrix barycentric_upsample(std::span<const Vec3> fine_points, const TriangleMesh& coarse,
                                  unsigned threads) {
  const FaceGeometry geom = face_geometry(coarse);
  std::vector<std::size_t> usable;
  for (std::size_t f = 0; f < coarse.face_count(); ++f) {
    if (!geom.degenerate[f]) usable.push_back(f);
  }
  if (usable.empty()) {
    throw std::invalid_argument("barycentric_upsample: coarse mesh has no usable faces");
  }

  struct Row {
    std::array<int, 3> cols;
    std::array<double, 3> w;
  };
  std::vector<Row> rows(fine_points.size());
  parallel_for(fine_points.size(), threads, [&](std::size_t q) {
    const Vec3& p = fine_points[q];
    double best = std::numeric_limits<double>::infinity();
    Row row{};
    for (const std::size_t f : usable) {
      const auto& face = coarse.face(f);
      const Vec3& a = coarse.vertex(static_cast<std::size_t>(face[0]));
      const Vec3& b = coarse.vertex(static_cast<std::size_t>(face[1]));
      const Vec3& c = coarse.vertex(static_cast<std::size_t>(face[2]));
      const auto w = closest_point_barycentric(p, a, b, c);
      const Vec3 closest = a * w[0] + b * w[1] + c * w[2];
      const double d2 = (p - closest).dot(p - closest);
      if (d2 < best) {
        best = d2;
        row = {{face[0], face[1], face[2]}, w};
      }
    }
    rows[q] = row;
  });

  std::vector<SparseMatrix::Triplet> trips;
  trips.reserve(fine_points.size() * 3);
  for (std::size_t q = 0; q < rows.size(); ++q) {
    for (int k = 0; k < 3; ++k) {
      trips.push_back({q, static_cast<std::size_t>(rows[q].cols[k]), rows[q].w[k]});
    }
  }
  return SparseMatrix::from_triplets(fine_points.size(), coarse.vertex_count(), std::move(trips));
}

SparseMatrix barycentric_upsample(const TriangleMesh& fine, const TriangleMesh& coarse,
                                  unsigned threads) {
  return barycentric_upsample(std::span<const Vec3>(fine.vertices()), coarse, threads);
}

namespace {

constexpr std::uint64_t kLambdaSeed = 0x1a3bda5eedULL;

double level_lambda_max(const SparseMatrix& laplacian) {
  const PowerIterationResult r = power_iteration(laplacian, 100, kLambdaSeed);
  // unconverged estimates fall back to the spectral bound of L'
  if (r.residual > 1e-6 * std::max(1.0, std::fabs(r.eigenvalue))) return 2.0;
  return r.eigenvalue;
}

}  // namespace

Hierarchy build_hierarchy(const TriangleMesh& mesh, std::size_t levels, unsigned threads) {
  if (levels < 1) throw std::invalid_argument("build_hierarchy: levels must be >= 1");
  std::vector<std::size_t> sizes{mesh.vertex_count()};
  for (std::size_t k = 0; k < levels; ++k) {
    sizes.push_back((sizes.back() + 3) / 4);
    if (sizes.back() < 4) {
      throw std::invalid_argument("build_hierarchy: level " + std::to_string(k + 1) +
                                  " would have " + std::to_string(sizes.back()) +
                                  " vertices; at least 4 required");
    }
  }

  Hierarchy h;
  h.base = mesh;
  h.laplacians.push_back(normalized_laplacian(mesh));
  h.lambda_max.push_back(level_lambda_max(h.laplacians.back()));

  const TriangleMesh* current = &h.base;
  for (std::size_t k = 0; k < levels; ++k) {
    DecimateResult d = qem_decimate(*current, sizes[k + 1]);
    SparseMatrix up = barycentric_upsample(*current, d.coarse, threads);
    h.laplacians.push_back(normalized_laplacian(d.coarse));
    h.lambda_max.push_back(level_lambda_max(h.laplacians.back()));
    h.levels.push_back(
        {std::move(d.coarse), std::move(d.selection), std::move(up), std::move(d.kept)});
    current = &h.levels.back().mesh;
  }
  return h;
}

}  // namespace otanim
