#include "otanim/checks.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "otanim/linalg.hpp"
#include "otanim/ot.hpp"
#include "otanim/resample.hpp"
#include "otanim/spectral.hpp"
#include "otanim/train.hpp"

namespace otanim {

namespace {

constexpr std::uint64_t kCheckSeed = 0x0c0ffee5;

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

std::string format_err(double worst, double bound) {
  std::ostringstream os;
  os << "worst " << worst << " (bound " << bound << ")";
  return os.str();
}

}  // namespace

TriangleMesh make_grid_mesh(std::size_t rows, std::size_t cols, double bump, std::uint64_t seed) {
  Rng rng = Rng(seed).child("grid");
  const double fx = rng.uniform(1.0, 3.0);
  const double fy = rng.uniform(1.0, 3.0);
  const double px = rng.uniform(0.0, 6.28);
  const double py = rng.uniform(0.0, 6.28);
  std::vector<Vec3> verts;
  verts.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = static_cast<double>(c) / static_cast<double>(cols - 1);
      const double y = static_cast<double>(r) / static_cast<double>(rows - 1);
      verts.push_back({x, y, bump * std::sin(fx * x * 6.28 + px) * std::cos(fy * y * 6.28 + py)});
    }
  }
  std::vector<TriangleMesh::Face> faces;
  const auto idx = [cols](std::size_t r, std::size_t c) {
    return static_cast<int>(r * cols + c);
  };
  for (std::size_t r = 0; r + 1 < rows; ++r) {
    for (std::size_t c = 0; c + 1 < cols; ++c) {
      faces.push_back({idx(r, c), idx(r, c + 1), idx(r + 1, c + 1)});
      faces.push_back({idx(r, c), idx(r + 1, c + 1), idx(r + 1, c)});
    }
  }
  return TriangleMesh(std::move(verts), std::move(faces));
}

TriangleMesh make_test_mesh(std::size_t n, std::uint64_t seed) {
  if (n < 8) throw std::invalid_argument("make_test_mesh: need n >= 8");
  std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::size_t rows = n / cols;
  while (rows < 2) {
    --cols;
    rows = n / cols;
  }
  const std::size_t extras = n - rows * cols;
  TriangleMesh grid = make_grid_mesh(rows, cols, 0.08, seed);
  std::vector<Vec3> verts = grid.vertices();
  std::vector<TriangleMesh::Face> faces = grid.faces();
  // fan of extra vertices along the top boundary row, one per edge
  const double dy = 1.0 / static_cast<double>(rows - 1);
  for (std::size_t e = 0; e < extras; ++e) {
    const int a = static_cast<int>((rows - 1) * cols + e);
    const int b = a + 1;
    const Vec3 mid = (verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)]) * 0.5;
    verts.push_back({mid.x, mid.y + 0.6 * dy, mid.z + 0.02});
    faces.push_back({a, b, static_cast<int>(verts.size() - 1)});
  }
  return TriangleMesh(std::move(verts), std::move(faces));
}

TriangleMesh make_noisy_sphere(int subdiv, double noise, std::uint64_t seed) {
  TriangleMesh sphere = make_icosphere(subdiv);
  Rng rng = Rng(seed).child("sphere-noise");
  std::vector<Vec3> verts = sphere.vertices();
  for (Vec3& v : verts) {
    const double r = 1.0 + noise * rng.uniform(-1.0, 1.0);
    v = v * r;
  }
  return TriangleMesh(std::move(verts), sphere.faces());
}

SparseMatrix random_connected_adjacency(std::size_t n, double extra_edge_prob, Rng& rng) {
  std::vector<SparseMatrix::Triplet> trips;
  const auto add_edge = [&](std::size_t a, std::size_t b) {
    trips.push_back({a, b, 1.0});
    trips.push_back({b, a, 1.0});
  };
  for (std::size_t v = 1; v < n; ++v) add_edge(v, rng.index(v));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (rng.uniform() < extra_edge_prob) add_edge(a, b);
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(trips));
}

DiscreteMeasure random_measure(std::size_t n, std::size_t dim, Rng& rng) {
  std::vector<double> supports(n * dim);
  for (double& s : supports) s = rng.uniform(-1.0, 1.0);
  std::vector<double> weights(n);
  double total = 0.0;
  for (double& w : weights) {
    w = rng.uniform(0.05, 1.0);
    total += w;
  }
  for (double& w : weights) w /= total;
  // renormalize the largest weight so the sum is exact
  double drift = 1.0;
  for (std::size_t i = 1; i < n; ++i) drift -= weights[i];
  weights[0] = drift;
  return make_measure(dim, std::move(supports), std::move(weights));
}

Hierarchy flat_hierarchy(const TriangleMesh& mesh) {
  Hierarchy h;
  h.base = mesh;
  h.laplacians.push_back(normalized_laplacian(mesh));
  const PowerIterationResult pr = power_iteration(h.laplacians.back(), 100, kCheckSeed);
  h.lambda_max.push_back(pr.residual <= 1e-6 * std::max(1.0, std::fabs(pr.eigenvalue))
                             ? pr.eigenvalue
                             : 2.0);
  return h;
}

ModelConfig toy_model_config() {
  ModelConfig cfg;
  cfg.mesh_channels = 4;
  cfg.latent_width = 8;
  cfg.audio_channels = 8;
  cfg.audio_feature_dim = 3;
  cfg.conv_kernel = 3;
  cfg.cheb_order = 3;
  cfg.pca_components = 2;
  return cfg;
}

CheckResult check_spectral_oracle() {
  Rng rng = Rng(kCheckSeed).child("spectral");
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4 + rng.index(7);  // up to 10 vertices
    const SparseMatrix w = random_connected_adjacency(n, 0.35, rng);
    const SparseMatrix lap = normalized_laplacian(w);

    const EighResult lap_eig = jacobi_eigh(lap.to_dense());
    const double lambda_max = lap_eig.eigenvalues.back();
    const SparseMatrix scaled = scale_laplacian(lap, lambda_max);

    const std::size_t order = 1 + rng.index(6);
    const std::size_t fin = 1 + rng.index(3);
    const std::size_t fout = 1 + rng.index(3);
    const ChebConvLayer layer(order, fin, fout);
    Tensor theta = random_tensor(layer.theta_shape(), rng);
    Tensor bias = random_tensor(layer.bias_shape(), rng);
    Tensor x = random_tensor({n, fin}, rng);

    Tape tape;
    const Tensor y = cheb_conv(scaled, tape.constant(x), tape.constant(theta),
                               tape.constant(bias), layer)
                         .value();

    // dense route: filter each channel pair through the eigenbasis of L~
    const EighResult eig = jacobi_eigh(scaled.to_dense());
    Tensor y_dense({n, fout});
    for (std::size_t j = 0; j < fout; ++j) {
      for (std::size_t r = 0; r < n; ++r) y_dense.at(r, j) = bias[j];
    }
    for (std::size_t i = 0; i < fin; ++i) {
      for (std::size_t j = 0; j < fout; ++j) {
        std::vector<double> filtered(n, 0.0);
        for (std::size_t e = 0; e < n; ++e) {
          double g = 0.0;
          for (std::size_t k = 0; k < order; ++k) {
            g += theta[(k * fin + i) * fout + j] * cheb_poly_scalar(k, eig.eigenvalues[e]);
          }
          double proj = 0.0;
          for (std::size_t r = 0; r < n; ++r) proj += eig.eigenvectors.at(r, e) * x.at(r, i);
          for (std::size_t r = 0; r < n; ++r) filtered[r] += g * proj * eig.eigenvectors.at(r, e);
        }
        for (std::size_t r = 0; r < n; ++r) y_dense.at(r, j) += filtered[r];
      }
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
      worst = std::max(worst, std::fabs(y[i] - y_dense[i]));
    }
  }
  return {"spectral-oracle", worst < 1e-8, format_err(worst, 1e-8)};
}

CheckResult check_ot_oracle() {
  Rng rng = Rng(kCheckSeed).child("ot-oracle");
  double worst_1d = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(6);  // up to 7 supports
    std::vector<double> xs(n), ys(n), w(n, 1.0 / static_cast<double>(n));
    for (double& v : xs) v = rng.uniform(-1.0, 1.0);
    for (double& v : ys) v = rng.uniform(-1.0, 1.0);
    const double p = trial % 3 == 0 ? 1.0 : 2.0;
    const double closed = wasserstein_1d(xs, w, ys, w, p);
    const double oracle =
        exact_wasserstein_oracle(make_measure(1, xs, w), make_measure(1, ys, w), p);
    worst_1d = std::max(worst_1d, std::fabs(closed - oracle));
  }

  double worst_slice = -1.0;  // most positive violation of term <= oracle
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(5);  // up to 6 supports
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    std::vector<double> xs(n * 6), ys(n * 6);
    for (double& v : xs) v = rng.uniform(-1.0, 1.0);
    for (double& v : ys) v = rng.uniform(-1.0, 1.0);
    const DiscreteMeasure mu = make_measure(6, xs, w);
    const DiscreteMeasure nu = make_measure(6, ys, w);
    const double oracle = exact_wasserstein_oracle(mu, nu, 2.0);
    const ProjectionSet proj = sample_projections(6, 10, kCheckSeed + static_cast<std::uint64_t>(trial));
    const SwdEstimate est = sliced_wasserstein(mu, nu, 2.0, proj);
    for (const double term : est.per_projection) {
      worst_slice = std::max(worst_slice, term - oracle);
    }
  }

  const bool pass = worst_1d < 1e-10 && worst_slice <= 1e-12;
  std::ostringstream os;
  os << "1d vs enumeration " << worst_1d << " (bound 1e-10); max slice excess " << worst_slice
     << " (bound 1e-12)";
  return {"ot-oracle", pass, os.str()};
}

CheckResult check_metric_axioms() {
  Rng rng = Rng(kCheckSeed).child("metric");
  const ProjectionSet proj = sample_projections(6, 32, kCheckSeed);
  double worst_triangle = 0.0;
  bool symmetric = true;
  bool identity = true;
  for (int trial = 0; trial < 200; ++trial) {
    const DiscreteMeasure a = random_measure(2 + rng.index(7), 6, rng);
    const DiscreteMeasure b = random_measure(2 + rng.index(7), 6, rng);
    const DiscreteMeasure c = random_measure(2 + rng.index(7), 6, rng);
    const double ab = sliced_wasserstein(a, b, 2.0, proj).value;
    const double ba = sliced_wasserstein(b, a, 2.0, proj).value;
    if (ab != ba) symmetric = false;
    if (sliced_wasserstein(a, a, 2.0, proj).value != 0.0) identity = false;
    const double ac = sliced_wasserstein(a, c, 2.0, proj).value;
    const double cb = sliced_wasserstein(c, b, 2.0, proj).value;
    worst_triangle =
        std::max(worst_triangle, std::sqrt(ab) - (std::sqrt(ac) + std::sqrt(cb)));
  }
  const bool pass = symmetric && identity && worst_triangle <= 1e-9;
  std::ostringstream os;
  os << (symmetric ? "symmetric" : "NOT symmetric") << "; "
     << (identity ? "self-distance 0" : "self-distance NOT 0") << "; worst triangle slack "
     << worst_triangle << " (bound 1e-9)";
  return {"metric-axioms", pass, os.str()};
}

namespace {

using BuildFn = std::function<Var(Tape&, std::vector<Var>&)>;

// Analytic gradient from one tape pass vs central differences on input `wrt`.
double fd_vs_tape(const std::vector<Tensor>& inputs, std::size_t wrt, const BuildFn& build,
                  double eps = 1e-5) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.leaf(inputs[i], i == wrt));
  Var out = build(tape, vars);
  tape.backward(out);
  const Tensor analytic = tape.gradient(vars[wrt]);
  const auto f = [&](const Tensor& probe) {
    Tape t;
    std::vector<Var> vs;
    vs.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      vs.push_back(t.leaf(i == wrt ? probe : inputs[i], false));
    }
    return build(t, vs).value()[0];
  };
  return finite_diff_check(f, inputs[wrt], analytic, eps);
}

}  // namespace

CheckResult check_gradient_suite() {
  Rng rng = Rng(kCheckSeed).child("gradients");
  double worst = 0.0;
  std::string worst_name = "none";
  const auto track = [&](const char* name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };

  {
    const Tensor a = random_tensor({4, 5}, rng);
    const Tensor b = random_tensor({5, 2}, rng);
    const BuildFn build = [](Tape&, std::vector<Var>& v) { return sum(matmul(v[0], v[1])); };
    track("matmul/a", fd_vs_tape({a, b}, 0, build));
    track("matmul/b", fd_vs_tape({a, b}, 1, build));
  }
  {
    const SparseMatrix s = random_connected_adjacency(6, 0.3, rng);
    const Tensor x = random_tensor({6, 3}, rng);
    track("sparse_matmul", fd_vs_tape({x}, 0, [&](Tape&, std::vector<Var>& v) {
            return sum(sparse_matmul(s, v[0]));
          }));
  }
  {
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({3, 4}, rng);
    track("add", fd_vs_tape({a, b}, 0,
                            [](Tape&, std::vector<Var>& v) { return sum(add(v[0], v[1])); }));
    track("sub", fd_vs_tape({a, b}, 1,
                            [](Tape&, std::vector<Var>& v) { return sum(sub(v[0], v[1])); }));
    track("mul", fd_vs_tape({a, b}, 0,
                            [](Tape&, std::vector<Var>& v) { return sum(mul(v[0], v[1])); }));
    track("scale", fd_vs_tape({a}, 0,
                              [](Tape&, std::vector<Var>& v) { return sum(scale(v[0], -1.7)); }));
    track("square",
          fd_vs_tape({a}, 0, [](Tape&, std::vector<Var>& v) { return sum(square(v[0])); }));
    track("mean", fd_vs_tape({a}, 0, [](Tape&, std::vector<Var>& v) { return mean(v[0]); }));
    track("transpose", fd_vs_tape({a, b}, 0, [](Tape&, std::vector<Var>& v) {
            return sum(mul(transpose(v[0]), transpose(v[1])));
          }));
  }
  {
    // relu probed away from the kink
    Tensor a = random_tensor({4, 4}, rng);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::fabs(a[i]) < 0.05) a[i] += a[i] >= 0.0 ? 0.1 : -0.1;
    }
    track("relu", fd_vs_tape({a}, 0, [](Tape&, std::vector<Var>& v) { return sum(relu(v[0])); }));
  }
  {
    const Tensor a = random_tensor({10}, rng, 0.2, 2.0);
    track("sqrt",
          fd_vs_tape({a}, 0, [](Tape&, std::vector<Var>& v) { return sum(sqrt_elem(v[0])); }));
  }
  {
    const Tensor a = random_tensor({3}, rng);
    const Tensor b = random_tensor({4}, rng);
    track("concat", fd_vs_tape({a, b}, 1, [](Tape&, std::vector<Var>& v) {
            return sum(square(concat0(v[0], v[1])));
          }));
  }
  {
    const Tensor a = random_tensor({5, 3}, rng);
    track("slice", fd_vs_tape({a}, 0, [](Tape&, std::vector<Var>& v) {
            return sum(square(slice_rows(v[0], 1, 4)));
          }));
    track("reshape", fd_vs_tape({a}, 0, [](Tape&, std::vector<Var>& v) {
            return sum(square(reshape(v[0], {3, 5})));
          }));
    const Tensor m = random_tensor({4, 3}, rng);
    const Tensor vrow = random_tensor({3}, rng);
    track("add_rowvec", fd_vs_tape({m, vrow}, 1, [](Tape&, std::vector<Var>& v) {
            return sum(square(add_rowvec(v[0], v[1])));
          }));
  }
  {
    const Tensor x = random_tensor({6, 2}, rng);
    const Tensor w = random_tensor({3, 2, 4}, rng);
    const Tensor b = random_tensor({4}, rng);
    const BuildFn build = [](Tape&, std::vector<Var>& v) {
      return sum(square(conv1d_same(v[0], v[1], v[2])));
    };
    track("conv1d/x", fd_vs_tape({x, w, b}, 0, build));
    track("conv1d/w", fd_vs_tape({x, w, b}, 1, build));
    track("conv1d/b", fd_vs_tape({x, w, b}, 2, build));
    track("time_resample", fd_vs_tape({x}, 0, [](Tape&, std::vector<Var>& v) {
            return sum(square(time_resample(v[0], 9)));
          }));
  }
  {
    Tensor a = random_tensor({5, 3}, rng);
    track("rows_norm_sum",
          fd_vs_tape({a}, 0, [](Tape&, std::vector<Var>& v) { return rows_norm_sum(v[0]); }));
  }
  {
    // composite mean(relu(A x)^2)
    const Tensor a = random_tensor({6, 4}, rng);
    const Tensor x = random_tensor({4, 2}, rng);
    track("composite", fd_vs_tape({a, x}, 1, [](Tape&, std::vector<Var>& v) {
            return mean(square(relu(matmul(v[0], v[1]))));
          }));
  }
  {
    const SparseMatrix w = random_connected_adjacency(8, 0.3, rng);
    const SparseMatrix lap = normalized_laplacian(w);
    const SparseMatrix scaled = scale_laplacian(lap, jacobi_eigh(lap.to_dense()).eigenvalues.back());
    const ChebConvLayer layer(4, 2, 3);
    const Tensor x = random_tensor({8, 2}, rng);
    Rng init = rng.child("cheb-init");
    ChebConvLayer layer_copy = layer;
    const Tensor theta = layer_copy.init_theta(init);
    const Tensor bias = random_tensor(layer.bias_shape(), rng);
    const BuildFn build = [&](Tape&, std::vector<Var>& v) {
      return sum(square(cheb_conv(scaled, v[0], v[1], v[2], layer)));
    };
    track("cheb_conv/x", fd_vs_tape({x, theta, bias}, 0, build));
    track("cheb_conv/theta", fd_vs_tape({x, theta, bias}, 1, build));
    track("cheb_conv/bias", fd_vs_tape({x, theta, bias}, 2, build));
  }
  {
    // sliced Wasserstein gradient on a two-triangle sheet; the probes hold the
    // gradient-stopped face weights at their base-point values
    const TriangleMesh target = make_grid_mesh(2, 2, 0.15, rng.next_u64());
    Tensor pred({4, 3});
    for (std::size_t i = 0; i < 4; ++i) {
      pred.at(i, 0) = target.vertex(i).x + rng.uniform(-0.15, 0.15);
      pred.at(i, 1) = target.vertex(i).y + rng.uniform(-0.15, 0.15);
      pred.at(i, 2) = target.vertex(i).z + rng.uniform(-0.15, 0.15);
    }
    const ProjectionSet proj = sample_projections(6, 8, kCheckSeed + 17);
    const std::vector<double> frozen =
        swd_pred_weights(pred, target.faces(), varifold_scaling(target));
    track("swd_loss", fd_vs_tape({pred}, 0, [&](Tape&, std::vector<Var>& v) {
            return swd_loss_op(v[0], target, 1.0, proj, 2.0, &frozen);
          }));
  }
  {
    // full composite loss on a toy instance, gradient w.r.t. predictions
    const TriangleMesh topo = make_test_mesh(12, 77);
    Rng data_rng = rng.child("toy-loss");
    Tensor target_frames({2, 12, 3});
    for (std::size_t i = 0; i < target_frames.size(); ++i) {
      const double base = topo.vertices()[(i / 3) % 12].x;
      target_frames[i] = base + data_rng.uniform(-0.2, 0.2);
    }
    // keep target frames near the actual topology so faces stay non-degenerate
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t i = 0; i < 12; ++i) {
        target_frames[(t * 12 + i) * 3 + 0] = topo.vertex(i).x + data_rng.uniform(-0.05, 0.05);
        target_frames[(t * 12 + i) * 3 + 1] = topo.vertex(i).y + data_rng.uniform(-0.05, 0.05);
        target_frames[(t * 12 + i) * 3 + 2] = topo.vertex(i).z + data_rng.uniform(-0.05, 0.05);
      }
    }
    const SequenceTargets targets = prepare_targets(topo, target_frames, 1.0);
    const ProjectionSet proj = sample_projections(6, 8, kCheckSeed + 23);

    const Hierarchy h = flat_hierarchy(topo);
    const MeshPyramid pyramid = make_pyramid(h);
    ModelConfig cfg = toy_model_config();
    Tensor basis = Tensor({2, 36});
    basis.at(0, 0) = 1.0;
    basis.at(1, 4) = 1.0;
    ModelParams params = init_params(cfg, pyramid, basis, Tensor({36}), 2024);

    Tensor pred0(target_frames);
    for (std::size_t i = 0; i < pred0.size(); ++i) pred0[i] += data_rng.uniform(-0.08, 0.08);
    std::vector<Tensor> pred_frames;
    pred_frames.push_back(Tensor({12, 3}, std::vector<double>(pred0.data(), pred0.data() + 36)));
    pred_frames.push_back(Tensor({12, 3}, std::vector<double>(pred0.data() + 36, pred0.data() + 72)));

    FrozenSwdWeights frozen;
    for (std::size_t t = 0; t < 2; ++t) {
      frozen.push_back(swd_pred_weights(pred_frames[t], topo.faces(), targets.scalings[t]));
    }
    for (std::size_t wrt = 0; wrt < 2; ++wrt) {
      const BuildFn build = [&](Tape& t, std::vector<Var>& v) {
        TapeBinding b = bind_params(t, params, pyramid, false);
        const std::vector<Var> frames{v[0], v[1]};
        return loss_total(b, frames, targets, proj, {}, 2.0, &frozen).total;
      };
      track(wrt == 0 ? "loss_total/frame0" : "loss_total/frame1",
            fd_vs_tape({pred_frames[0], pred_frames[1]}, wrt, build));
    }

    // end-to-end model gradients, every trainable tensor
    Rng audio_rng = rng.child("toy-audio");
    const Tensor audio = random_tensor({2, cfg.audio_feature_dim}, audio_rng);
    Tensor tmpl({12, 3});
    for (std::size_t i = 0; i < 12; ++i) {
      tmpl.at(i, 0) = topo.vertex(i).x;
      tmpl.at(i, 1) = topo.vertex(i).y;
      tmpl.at(i, 2) = topo.vertex(i).z;
    }
    Tape tape;
    TapeBinding binding = bind_params(tape, params, pyramid, true);
    const std::vector<Var> frames = forward_sequence(binding, tmpl, audio, 2);
    FrozenSwdWeights model_frozen;
    for (std::size_t t = 0; t < 2; ++t) {
      model_frozen.push_back(
          swd_pred_weights(frames[t].value(), topo.faces(), targets.scalings[t]));
    }
    const LossBreakdown loss = loss_total(binding, frames, targets, proj, {}, 2.0, &model_frozen);
    tape.backward(loss.total);
    for (std::size_t k = 0; k < params.trainable.size(); ++k) {
      const Tensor analytic = tape.gradient(binding.leaves[k]);
      ModelParams probe_params = params;
      const auto f = [&](const Tensor& probe) {
        probe_params.trainable[k].second = probe;
        Tape t;
        TapeBinding b = bind_params(t, probe_params, pyramid, false);
        const std::vector<Var> fr = forward_sequence(b, tmpl, audio, 2);
        return loss_total(b, fr, targets, proj, {}, 2.0, &model_frozen).total.value()[0];
      };
      const double err =
          finite_diff_check(f, params.trainable[k].second, analytic, 1e-5);
      track(("model/" + params.trainable[k].first).c_str(), err);
    }
  }

  return {"gradient-suite", worst < 1e-4, "worst " + std::to_string(worst) + " at " + worst_name +
                                              " (bound 1e-4)"};
}

CheckResult check_resample_contracts() {
  Rng rng = Rng(kCheckSeed).child("resample");
  double worst_row_sum = 0.0;
  double worst_reproduce = 0.0;
  bool one_hot = true;
  bool row_shape = true;
  for (int trial = 0; trial < 50; ++trial) {
    TriangleMesh mesh;
    if (trial % 2 == 0) {
      const std::size_t rows = 5 + rng.index(6);
      const std::size_t cols = 5 + rng.index(6);
      mesh = make_grid_mesh(rows, cols, 0.1, rng.next_u64());
    } else {
      mesh = make_noisy_sphere(1 + static_cast<int>(rng.index(2)), 0.05, rng.next_u64());
    }
    const std::size_t target = (mesh.vertex_count() + 3) / 4;
    const DecimateResult dec = qem_decimate(mesh, target);

    for (std::size_t r = 0; r < dec.selection.rows(); ++r) {
      const auto vals = dec.selection.row_values(r);
      if (vals.size() != 1 || vals[0] != 1.0) one_hot = false;
    }

    const SparseMatrix qu = barycentric_upsample(mesh, dec.coarse);
    for (std::size_t r = 0; r < qu.rows(); ++r) {
      const auto vals = qu.row_values(r);
      if (vals.size() > 3) row_shape = false;
      double s = 0.0;
      for (const double v : vals) {
        if (v < 0.0) row_shape = false;
        s += v;
      }
      worst_row_sum = std::max(worst_row_sum, std::fabs(s - 1.0));
    }

    // points sampled on the coarse surface must reproduce exactly through Q_u
    const FaceGeometry geom = face_geometry(dec.coarse);
    std::vector<Vec3> samples;
    for (int k = 0; k < 20; ++k) {
      const std::size_t f = rng.index(dec.coarse.face_count());
      if (geom.degenerate[f]) continue;
      double u = rng.uniform(), v = rng.uniform();
      if (u + v > 1.0) {
        u = 1.0 - u;
        v = 1.0 - v;
      }
      const auto& face = dec.coarse.face(f);
      const Vec3& a = dec.coarse.vertex(static_cast<std::size_t>(face[0]));
      const Vec3& b = dec.coarse.vertex(static_cast<std::size_t>(face[1]));
      const Vec3& c = dec.coarse.vertex(static_cast<std::size_t>(face[2]));
      samples.push_back(a * (1.0 - u - v) + b * u + c * v);
    }
    const SparseMatrix qs = barycentric_upsample(samples, dec.coarse);
    for (std::size_t q = 0; q < samples.size(); ++q) {
      Vec3 rec{};
      const auto idx = qs.row_indices(q);
      const auto val = qs.row_values(q);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        rec += dec.coarse.vertex(idx[k]) * val[k];
      }
      worst_reproduce = std::max(worst_reproduce, (rec - samples[q]).norm());
    }
  }
  const bool pass = one_hot && row_shape && worst_row_sum < 1e-9 && worst_reproduce < 1e-9;
  std::ostringstream os;
  os << (one_hot ? "selection one-hot" : "selection NOT one-hot") << "; "
     << (row_shape ? "rows <=3 nonneg" : "row shape violated") << "; worst row sum dev "
     << worst_row_sum << "; worst surface reproduction " << worst_reproduce << " (bounds 1e-9)";
  return {"resample-contracts", pass, os.str()};
}

CheckResult check_loss_identities() {
  bool pass = true;
  std::ostringstream os;

  const TriangleMesh topo = make_test_mesh(9, 5);
  const std::size_t n = topo.vertex_count();

  // dyadic target coordinates keep constant-offset sums exact
  Tensor target({4, n, 3});
  Rng rng = Rng(kCheckSeed).child("loss-ident");
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      target[(t * n + i) * 3 + 0] = topo.vertex(i).x + static_cast<double>(rng.index(9)) / 8.0;
      target[(t * n + i) * 3 + 1] = topo.vertex(i).y + static_cast<double>(rng.index(9)) / 8.0;
      target[(t * n + i) * 3 + 2] = topo.vertex(i).z;
    }
  }
  const SequenceTargets targets = prepare_targets(topo, target, 1.0);

  const auto frames_from = [&](const Tensor& seq) {
    std::vector<Tensor> frames;
    const std::size_t stride = n * 3;
    for (std::size_t t = 0; t < seq.dim(0); ++t) {
      frames.push_back(Tensor({n, 3}, std::vector<double>(seq.data() + t * stride,
                                                          seq.data() + (t + 1) * stride)));
    }
    return frames;
  };

  {
    // single vertex offset by (3, 4, 0) in one frame
    Tensor pred = target;
    pred[((1 * n) + 2) * 3 + 0] += 3.0;
    pred[((1 * n) + 2) * 3 + 1] += 4.0;
    Tape tape;
    std::vector<Var> pv;
    for (Tensor& f : frames_from(pred)) pv.push_back(tape.leaf(std::move(f), false));
    const double rec = loss_reconstruction(pv, targets).value()[0];
    if (rec != 5.0) {
      pass = false;
      os << "3-4-5 reconstruction gave " << rec << "; ";
    }
  }
  {
    // single-frame sequence has no velocity term
    Tensor one_frame({1, n, 3}, std::vector<double>(target.data(), target.data() + n * 3));
    const SequenceTargets t1 = prepare_targets(topo, one_frame, 1.0);
    Tape tape;
    std::vector<Var> pv{tape.leaf(Tensor({n, 3}, std::vector<double>(target.data(),
                                                                     target.data() + n * 3)),
                                  false)};
    if (loss_velocity(pv, t1).value()[0] != 0.0) {
      pass = false;
      os << "T=1 velocity not 0; ";
    }
  }
  {
    // constant offset leaves velocities untouched
    Tensor pred = target;
    for (std::size_t i = 0; i < pred.size(); i += 3) pred[i] += 0.5;
    Tape tape;
    std::vector<Var> pv;
    for (Tensor& f : frames_from(pred)) pv.push_back(tape.leaf(std::move(f), false));
    const double vel = loss_velocity(pv, targets).value()[0];
    if (vel != 0.0) {
      pass = false;
      os << "constant-offset velocity gave " << vel << "; ";
    }
  }
  {
    // beta2 = beta3 = 0 collapses the total to rec + 10 * vel
    Tensor pred = target;
    Rng prng = rng.child("perturb");
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += prng.uniform(-0.05, 0.05);
    const ProjectionSet proj = sample_projections(6, 4, kCheckSeed);
    const Hierarchy h = flat_hierarchy(topo);
    const MeshPyramid pyramid = make_pyramid(h);
    Tensor basis({1, n * 3});
    basis.at(0, 0) = 1.0;
    const ModelConfig cfg = toy_model_config();
    ModelParams params = init_params(cfg, pyramid, basis, Tensor({n * 3}), 99);
    Tape tape;
    TapeBinding b = bind_params(tape, params, pyramid, false);
    std::vector<Var> pv;
    for (Tensor& f : frames_from(pred)) pv.push_back(tape.leaf(std::move(f), false));
    LossWeights weights;
    weights.swd = 0.0;
    weights.regularization = 0.0;
    const LossBreakdown l = loss_total(b, pv, targets, proj, weights);
    const double expect = l.reconstruction.value()[0] + 10.0 * l.velocity.value()[0];
    if (l.total.value()[0] != expect) {
      pass = false;
      os << "beta2=beta3=0 total " << l.total.value()[0] << " != " << expect << "; ";
    }
  }
  if (pass) os << "3-4-5, T=1, constant offset, reduced total all exact";
  return {"loss-identities", pass, os.str()};
}

std::vector<CheckResult> run_fast_checks() {
  return {check_spectral_oracle(), check_ot_oracle(),          check_metric_axioms(),
          check_gradient_suite(),  check_resample_contracts(), check_loss_identities()};
}

}  // namespace otanim
