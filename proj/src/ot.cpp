#include "otanim/ot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "otanim/rng.hpp"

namespace otanim {

void DiscreteMeasure::validate() const {
  if (dim == 0) throw std::invalid_argument("measure: dimension must be >= 1");
  if (supports.size() != weights.size() * dim) {
    throw std::invalid_argument("measure: supports/weights size mismatch");
  }
  double total = 0.0;
  for (const double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("measure: negative or NaN weight");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("measure: weights sum to " + std::to_string(total));
  }
  for (const double s : supports) {
    if (!std::isfinite(s)) throw std::invalid_argument("measure: non-finite support");
  }
}

DiscreteMeasure make_measure(std::size_t dim, std::vector<double> supports,
                             std::vector<double> weights) {
  DiscreteMeasure m{dim, std::move(supports), std::move(weights)};
  m.validate();
  return m;
}

VarifoldScaling varifold_scaling(const TriangleMesh& mesh) {
  VarifoldScaling s;
  s.center = mesh.centroid();
  const double mel = mesh.mean_edge_length();
  s.scale = mel > 0.0 ? mel : 1.0;
  return s;
}

namespace {

struct VarifoldAtoms {
  std::vector<std::size_t> face_index;
  std::vector<double> supports;  // n x 6
  std::vector<double> weights;
  // geometry cached for the backward chain, in scaled coordinates
  std::vector<Vec3> edge1, edge2, normal;
  std::vector<double> cross_norm;
};

// Shared by both measure routes so a prediction equal to its target yields
// bit-identical atoms (scaling is applied to vertices before any geometry).
VarifoldAtoms build_varifold_atoms(const double* positions, std::size_t vertex_count,
                                   const std::vector<TriangleMesh::Face>& faces,
                                   double normal_scale, const VarifoldScaling& scaling,
                                   const char* who) {
  (void)vertex_count;
  VarifoldAtoms atoms;
  const auto vertex = [&](int i) {
    const double* p = positions + static_cast<std::size_t>(i) * 3;
    return Vec3{(p[0] - scaling.center.x) / scaling.scale,
                (p[1] - scaling.center.y) / scaling.scale,
                (p[2] - scaling.center.z) / scaling.scale};
  };
  double total_area = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 a = vertex(faces[f][0]);
    const Vec3 b = vertex(faces[f][1]);
    const Vec3 c = vertex(faces[f][2]);
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 cross = e1.cross(e2);
    const double cn = cross.norm();
    const double area = 0.5 * cn;
    if (area < 1e-12) continue;
    const Vec3 n = cross / cn;
    const Vec3 bary = (a + b + c) / 3.0;
    atoms.face_index.push_back(f);
    atoms.supports.insert(atoms.supports.end(), {bary.x, bary.y, bary.z, normal_scale * n.x,
                                                 normal_scale * n.y, normal_scale * n.z});
    atoms.weights.push_back(area);
    atoms.edge1.push_back(e1);
    atoms.edge2.push_back(e2);
    atoms.normal.push_back(n);
    atoms.cross_norm.push_back(cn);
    total_area += area;
  }
  if (atoms.weights.empty()) {
    throw std::invalid_argument(std::string(who) + ": every face is degenerate");
  }
  for (double& w : atoms.weights) w /= total_area;
  return atoms;
}

std::vector<double> flatten_vertices(const TriangleMesh& mesh) {
  std::vector<double> p(mesh.vertex_count() * 3);
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    p[i * 3] = mesh.vertex(i).x;
    p[i * 3 + 1] = mesh.vertex(i).y;
    p[i * 3 + 2] = mesh.vertex(i).z;
  }
  return p;
}

}  // namespace

DiscreteMeasure mesh_to_varifold(const TriangleMesh& mesh, double normal_scale,
                                 const VarifoldScaling* scaling) {
  const VarifoldScaling frame = scaling != nullptr ? *scaling : VarifoldScaling{{0, 0, 0}, 1.0};
  const std::vector<double> positions = flatten_vertices(mesh);
  VarifoldAtoms atoms = build_varifold_atoms(positions.data(), mesh.vertex_count(), mesh.faces(),
                                             normal_scale, frame, "mesh_to_varifold");
  DiscreteMeasure m;
  m.dim = 6;
  m.supports = std::move(atoms.supports);
  m.weights = std::move(atoms.weights);
  return m;
}

namespace {

std::vector<std::size_t> sort_order(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;  // tie by original index
  });
  return order;
}

void check_mass(std::span<const double> w, const char* side) {
  double total = 0.0;
  for (const double x : w) total += x;
  if (std::fabs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string("wasserstein_1d: ") + side + " weights sum to " +
                                std::to_string(total));
  }
}

}  // namespace

double wasserstein_1d(std::span<const double> xs, std::span<const double> xw,
                      std::span<const double> ys, std::span<const double> yw, double p,
                      std::span<double> grad_x, std::span<double> grad_y) {
  if (p < 1.0) throw std::invalid_argument("wasserstein_1d: p must be >= 1");
  if (xs.size() != xw.size() || ys.size() != yw.size()) {
    throw std::invalid_argument("wasserstein_1d: support/weight length mismatch");
  }
  if (xs.empty() || ys.empty()) throw std::invalid_argument("wasserstein_1d: empty measure");
  check_mass(xw, "first");
  check_mass(yw, "second");
  if (!grad_x.empty() && grad_x.size() != xs.size()) {
    throw std::invalid_argument("wasserstein_1d: grad_x size mismatch");
  }
  if (!grad_y.empty() && grad_y.size() != ys.size()) {
    throw std::invalid_argument("wasserstein_1d: grad_y size mismatch");
  }

  const auto ox = sort_order(xs);
  const auto oy = sort_order(ys);
  const bool p2 = p == 2.0;

  std::size_t i = 0, j = 0;
  double ra = xw[ox[0]];
  double rb = yw[oy[0]];
  double cost = 0.0;
  while (i < ox.size() && j < oy.size()) {
    const double m = std::min(ra, rb);
    if (m > 0.0) {
      const double d = xs[ox[i]] - ys[oy[j]];
      double dcost_dd;
      if (p2) {
        cost += m * d * d;
        dcost_dd = 2.0 * m * d;
      } else {
        const double ad = std::fabs(d);
        cost += m * std::pow(ad, p);
        dcost_dd = ad == 0.0 ? 0.0 : m * p * std::pow(ad, p - 1.0) * (d > 0.0 ? 1.0 : -1.0);
      }
      if (!grad_x.empty()) grad_x[ox[i]] += dcost_dd;
      if (!grad_y.empty()) grad_y[oy[j]] -= dcost_dd;
    }
    ra -= m;
    rb -= m;
    if (ra <= 0.0) {
      ++i;
      if (i < ox.size()) ra = xw[ox[i]];
    }
    if (rb <= 0.0) {
      ++j;
      if (j < oy.size()) rb = yw[oy[j]];
    }
  }
  return cost;
}

double wasserstein_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p) {
  if (mu.dim != 1 || nu.dim != 1) {
    throw std::invalid_argument("wasserstein_1d: measures must be one-dimensional");
  }
  return wasserstein_1d(mu.supports, mu.weights, nu.supports, nu.weights, p);
}

ProjectionSet sample_projections(std::size_t dim, std::size_t count, std::uint64_t seed) {
  if (dim == 0 || count == 0) throw std::invalid_argument("sample_projections: empty request");
  Rng rng = Rng(seed).child("projections");
  ProjectionSet ps;
  ps.dim = dim;
  ps.count = count;
  ps.seed = seed;
  ps.directions.resize(dim * count);
  for (std::size_t l = 0; l < count; ++l) {
    double* dir = ps.directions.data() + l * dim;
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        dir[k] = rng.normal();
        norm += dir[k] * dir[k];
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (std::size_t k = 0; k < dim; ++k) dir[k] /= norm;
  }
  return ps;
}

namespace {

std::vector<double> project_measure(const DiscreteMeasure& m, std::span<const double> dir) {
  std::vector<double> out(m.count());
  for (std::size_t i = 0; i < m.count(); ++i) {
    const double* s = m.supports.data() + i * m.dim;
    double acc = 0.0;
    for (std::size_t k = 0; k < m.dim; ++k) acc += s[k] * dir[k];
    out[i] = acc;
  }
  return out;
}

}  // namespace

SwdEstimate sliced_wasserstein(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p,
                               const ProjectionSet& projections) {
  mu.validate();
  nu.validate();
  if (mu.dim != nu.dim || mu.dim != projections.dim) {
    throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
  }
  SwdEstimate est;
  est.per_projection.resize(projections.count);
  for (std::size_t l = 0; l < projections.count; ++l) {
    const auto dir = projections.direction(l);
    const auto px = project_measure(mu, dir);
    const auto py = project_measure(nu, dir);
    est.per_projection[l] = wasserstein_1d(px, mu.weights, py, nu.weights, p);
  }
  double mean = 0.0;
  for (const double v : est.per_projection) mean += v;
  mean /= static_cast<double>(projections.count);
  est.value = mean;
  if (projections.count > 1) {
    double var = 0.0;
    for (const double v : est.per_projection) var += (v - mean) * (v - mean);
    var /= static_cast<double>(projections.count - 1);
    est.std_error = std::sqrt(var / static_cast<double>(projections.count));
  }
  return est;
}

double exact_wasserstein_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p) {
  const std::size_t n = mu.count();
  if (n != nu.count()) throw std::invalid_argument("oracle: support counts differ");
  if (n > 8) throw std::invalid_argument("oracle: at most 8 supports");
  if (mu.dim != nu.dim) throw std::invalid_argument("oracle: dimension mismatch");
  const double uniform = 1.0 / static_cast<double>(n);
  for (const double w : mu.weights) {
    if (std::fabs(w - uniform) > 1e-9) throw std::invalid_argument("oracle: weights must be 1/n");
  }
  for (const double w : nu.weights) {
    if (std::fabs(w - uniform) > 1e-9) throw std::invalid_argument("oracle: weights must be 1/n");
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* a = mu.supports.data() + i * mu.dim;
      const double* b = nu.supports.data() + perm[i] * nu.dim;
      double d2 = 0.0;
      for (std::size_t k = 0; k < mu.dim; ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
      cost += p == 2.0 ? d2 : std::pow(std::sqrt(d2), p);
    }
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best * uniform;
}

std::vector<double> swd_pred_weights(const Tensor& positions,
                                     const std::vector<TriangleMesh::Face>& faces,
                                     const VarifoldScaling& scaling) {
  return build_varifold_atoms(positions.data(), positions.dim(0), faces, 1.0, scaling,
                              "swd_pred_weights")
      .weights;
}

Var swd_loss_op(Var predicted_positions, const std::vector<TriangleMesh::Face>& faces,
                const DiscreteMeasure& target_varifold, const VarifoldScaling& scaling,
                double normal_scale, const ProjectionSet& projections, double p,
                const std::vector<double>* weight_override) {
  const Tensor& pos = predicted_positions.value();
  if (pos.rank() != 2 || pos.dim(1) != 3) {
    throw std::invalid_argument("swd_loss: positions must be (N x 3)");
  }
  if (target_varifold.dim != 6 || projections.dim != 6) {
    throw std::invalid_argument("swd_loss: varifold atoms live in R^6");
  }
  for (const auto& f : faces) {
    for (const int v : f) {
      if (v < 0 || static_cast<std::size_t>(v) >= pos.dim(0)) {
        throw std::invalid_argument("swd_loss: face index outside predicted positions");
      }
    }
  }

  VarifoldAtoms atoms =
      build_varifold_atoms(pos.data(), pos.dim(0), faces, normal_scale, scaling, "swd_loss");
  if (weight_override != nullptr) {
    if (weight_override->size() != atoms.weights.size()) {
      throw std::invalid_argument("swd_loss: weight override does not match atom count");
    }
    atoms.weights = *weight_override;
  }
  const std::size_t n = atoms.weights.size();
  const double inv_l = 1.0 / static_cast<double>(projections.count);

  // d(loss)/d(projected coordinate), folded into d/d(barycenter), d/d(normal)
  std::vector<Vec3> grad_bary(n), grad_normal(n);
  std::vector<double> proj_pred(n), grad_proj(n);
  std::vector<double> proj_target(target_varifold.count());
  double loss = 0.0;
  for (std::size_t l = 0; l < projections.count; ++l) {
    const auto dir = projections.direction(l);
    for (std::size_t i = 0; i < n; ++i) {
      const double* s = atoms.supports.data() + i * 6;
      proj_pred[i] = s[0] * dir[0] + s[1] * dir[1] + s[2] * dir[2] + s[3] * dir[3] +
                     s[4] * dir[4] + s[5] * dir[5];
    }
    for (std::size_t i = 0; i < target_varifold.count(); ++i) {
      const double* s = target_varifold.supports.data() + i * 6;
      proj_target[i] = s[0] * dir[0] + s[1] * dir[1] + s[2] * dir[2] + s[3] * dir[3] +
                       s[4] * dir[4] + s[5] * dir[5];
    }
    std::fill(grad_proj.begin(), grad_proj.end(), 0.0);
    loss += inv_l * wasserstein_1d(proj_pred, atoms.weights, proj_target, target_varifold.weights,
                                   p, grad_proj);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = inv_l * grad_proj[i];
      if (g == 0.0) continue;
      grad_bary[i] += Vec3{dir[0], dir[1], dir[2]} * g;
      grad_normal[i] += Vec3{dir[3], dir[4], dir[5]} * (g * normal_scale);
    }
  }

  // chain through barycenters and unit normals down to vertex positions
  Tensor grad_pos({pos.dim(0), 3});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& face = faces[atoms.face_index[i]];
    const Vec3 gb = grad_bary[i] / 3.0;
    // n = cross / |cross|  =>  dL/dcross = (I - n n^T) / |cross| * dL/dn
    const Vec3& un = atoms.normal[i];
    const Vec3& gn = grad_normal[i];
    const Vec3 gc = (gn - un * un.dot(gn)) / atoms.cross_norm[i];
    const Vec3 ge1 = atoms.edge2[i].cross(gc);
    const Vec3 ge2 = gc.cross(atoms.edge1[i]);
    const Vec3 ga = gb - ge1 - ge2;
    const Vec3 gbv = gb + ge1;
    const Vec3 gcv = gb + ge2;
    const auto accum = [&](int v, const Vec3& g) {
      double* row = grad_pos.data() + static_cast<std::size_t>(v) * 3;
      row[0] += g.x;
      row[1] += g.y;
      row[2] += g.z;
    };
    accum(face[0], ga);
    accum(face[1], gbv);
    accum(face[2], gcv);
  }
  // undo the constant (center, scale) frame
  for (std::size_t i = 0; i < grad_pos.size(); ++i) grad_pos[i] /= scaling.scale;
  grad_pos.check_finite("swd_loss gradient");

  Tensor out = Tensor::scalar(loss);
  out.check_finite("swd_loss");
  const int pid = predicted_positions.id;
  auto grad_holder = std::make_shared<Tensor>(std::move(grad_pos));
  return predicted_positions.tape->record(
      std::move(out), {pid}, [pid, grad_holder](Tape& t, int self) {
        const double g = t.grad(self)[0];
        Tensor& dst = t.grad(pid);
        const Tensor& src = *grad_holder;
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += g * src[i];
      });
}

Var swd_loss_op(Var predicted_positions, const TriangleMesh& target_mesh, double normal_scale,
                const ProjectionSet& projections, double p,
                const std::vector<double>* weight_override) {
  if (predicted_positions.value().dim(0) != target_mesh.vertex_count()) {
    throw std::invalid_argument("swd_loss: topology mismatch, predicted has " +
                                std::to_string(predicted_positions.value().dim(0)) +
                                " vertices, target has " +
                                std::to_string(target_mesh.vertex_count()));
  }
  const VarifoldScaling scaling = varifold_scaling(target_mesh);
  const DiscreteMeasure target = mesh_to_varifold(target_mesh, normal_scale, &scaling);
  return swd_loss_op(predicted_positions, target_mesh.faces(), target, scaling, normal_scale,
                     projections, p, weight_override);
}

}  // namespace otanim
