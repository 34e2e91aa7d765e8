// Acceptance runner: one line per criterion, nonzero exit when any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <vector>

#include "otanim/checks.hpp"
#include "otanim/eval.hpp"
#include "otanim/ot.hpp"
#include "otanim/parallel.hpp"
#include "otanim/resample.hpp"
#include "otanim/train.hpp"

using namespace otanim;

namespace {

struct Criterion {
  std::string name;
  bool pass;
  std::string detail;
  double seconds;
};

std::vector<Criterion> results;

template <typename Fn>
void criterion(const std::string& name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  bool pass = false;
  std::string detail;
  try {
    const auto r = fn();
    pass = r.first;
    detail = r.second;
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  results.push_back({name, pass, detail, secs});
  std::printf("[%s] %s (%.1fs) %s\n", pass ? "PASS" : "FAIL", name.c_str(), secs, detail.c_str());
  std::fflush(stdout);
}

std::pair<bool, std::string> from_check(const CheckResult& r, double budget, double secs_so_far) {
  (void)secs_so_far;
  (void)budget;
  return {r.pass, r.detail};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

int main() {
  // 1. hierarchy sizes at the two published scales
  criterion("1 hierarchy sizes 5023/7306", []() -> std::pair<bool, std::string> {
    const auto t0 = std::chrono::steady_clock::now();
    const Hierarchy a = build_hierarchy(make_test_mesh(5023, 1), 3);
    const double ta = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto t1 = std::chrono::steady_clock::now();
    const Hierarchy b = build_hierarchy(make_test_mesh(7306, 2), 3);
    const double tb = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    const bool sizes_ok = a.sizes() == std::vector<std::size_t>{5023, 1256, 314, 79} &&
                          b.sizes() == std::vector<std::size_t>{7306, 1827, 457, 115};
    const bool time_ok = ta < 30.0 && tb < 30.0;
    std::ostringstream os;
    os << "{5023";
    for (std::size_t k = 1; k < a.sizes().size(); ++k) os << "," << a.sizes()[k];
    os << "} in " << fmt(ta) << "s, {7306";
    for (std::size_t k = 1; k < b.sizes().size(); ++k) os << "," << b.sizes()[k];
    os << "} in " << fmt(tb) << "s";
    return {sizes_ok && time_ok, os.str()};
  });

  // 2. recursive Chebyshev filters equal the dense spectral route
  criterion("2 spectral oracle", []() -> std::pair<bool, std::string> {
    const auto t0 = std::chrono::steady_clock::now();
    const CheckResult r = check_spectral_oracle();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {r.pass && secs < 5.0, r.detail};
  });

  // 3. 1-d closed form vs permutation enumeration; slice bound in R^6
  criterion("3 transport oracle", []() -> std::pair<bool, std::string> {
    const auto t0 = std::chrono::steady_clock::now();
    const CheckResult r = check_ot_oracle();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {r.pass && secs < 30.0, r.detail};
  });

  // 4. metric axioms with shared projections
  criterion("4 metric axioms",
            []() { return from_check(check_metric_axioms(), 0, 0); });

  // 5. gradients of every op and the full loss vs finite differences
  criterion("5 gradient suite", []() -> std::pair<bool, std::string> {
    const auto t0 = std::chrono::steady_clock::now();
    const CheckResult r = check_gradient_suite();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {r.pass && secs < 60.0, r.detail};
  });

  // 6. Monte Carlo consistency between L=100 and L=10000
  criterion("6 monte carlo consistency", []() -> std::pair<bool, std::string> {
    Rng rng = Rng(6060).child("mc");
    int agreements = 0;
    double worst_ratio = 0.0;
    for (int pair = 0; pair < 20; ++pair) {
      const TriangleMesh a = make_noisy_sphere(1, 0.12, rng.next_u64());
      const TriangleMesh b = make_noisy_sphere(1, 0.12, rng.next_u64());
      const VarifoldScaling scaling = varifold_scaling(b);
      const DiscreteMeasure mu = mesh_to_varifold(a, 1.0, &scaling);
      const DiscreteMeasure nu = mesh_to_varifold(b, 1.0, &scaling);
      const SwdEstimate small =
          sliced_wasserstein(mu, nu, 2.0, sample_projections(6, 100, 1000 + pair));
      const SwdEstimate big =
          sliced_wasserstein(mu, nu, 2.0, sample_projections(6, 10000, 7000 + pair));
      const double gap = std::fabs(small.value - big.value);
      const double tol =
          5.0 * std::sqrt(small.std_error * small.std_error + big.std_error * big.std_error);
      if (gap <= tol) ++agreements;
      if (tol > 0.0) worst_ratio = std::max(worst_ratio, gap / tol);
    }
    return {agreements == 20,
            std::to_string(agreements) + "/20 within 5 SE, worst gap/tolerance " +
                fmt(worst_ratio)};
  });

  // 7. end-to-end learning on the synthetic dataset
  criterion("7 end-to-end learning", []() -> std::pair<bool, std::string> {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset data = synth_dataset(1, 8, 16);
    const Hierarchy h = build_hierarchy(data.template_mesh, 3);
    const MeshPyramid pyramid = make_pyramid(h);

    TrainConfig cfg;          // paper defaults: batch 32, lr 1e-4, wd 0.01, L=100, p=2
    cfg.epochs = 200;         // 6 training chunks fit one batch, so one step per epoch
    cfg.seed = 1;
    const TrainResult r = train(cfg, data, h, default_thread_count());

    std::size_t steps = 0;
    for (std::size_t e = 1; e < r.history.size(); ++e) ++steps;  // one batch per epoch
    const double initial = r.history.front().train_loss;
    const double final_loss = r.history.back().train_loss;
    const bool loss_ok = final_loss <= 0.5 * initial;

    // held-out error against the untrained parameters
    std::size_t frames = 0;
    for (const std::size_t s : r.split.train) frames += data.samples[s].frame_count();
    Tensor disp({frames, data.template_mesh.vertex_count() * 3});
    std::size_t row = 0;
    for (const std::size_t s : r.split.train) {
      const Tensor& t = data.samples[s].targets;
      for (std::size_t f = 0; f < t.dim(0); ++f, ++row) {
        for (std::size_t c = 0; c < disp.dim(1); ++c) {
          const std::size_t i = c / 3;
          const double base = c % 3 == 0   ? data.template_mesh.vertex(i).x
                              : c % 3 == 1 ? data.template_mesh.vertex(i).y
                                           : data.template_mesh.vertex(i).z;
          disp.at(row, c) = t[f * disp.dim(1) + c] - base;
        }
      }
    }
    const PCABasis pca = pca_fit(disp, cfg.model.pca_components, cfg.seed);
    const ModelParams untrained = init_params(cfg.model, pyramid, pca.components, pca.mean, cfg.seed);
    const MetricReport before =
        evaluate_model(untrained, pyramid, data, r.split.validation, default_thread_count());
    const MetricReport after = evaluate_model(r.best_params, pyramid, data, r.split.validation,
                                              default_thread_count());
    const bool eval_ok = after.e_mean_head <= 0.6 * before.e_mean_head;

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << steps << " steps, train loss " << fmt(initial) << " -> " << fmt(final_loss)
       << ", held-out e_mean_head " << fmt(before.e_mean_head) << " -> " << fmt(after.e_mean_head)
       << ", " << fmt(secs) << "s";
    return {loss_ok && eval_ok && secs < 300.0, os.str()};
  });

  // 8. bitwise-identical training at any thread count
  criterion("8 determinism", []() -> std::pair<bool, std::string> {
    const Dataset data = synth_dataset(88, 3, 6);
    const Hierarchy h = build_hierarchy(data.template_mesh, 3);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 88;
    cfg.projection_count = 16;
    cfg.model.mesh_channels = 8;
    cfg.model.latent_width = 16;
    cfg.model.audio_channels = 16;
    cfg.model.pca_components = 6;

    const auto csv = [](const TrainResult& r) {
      std::ostringstream os;
      os << "epoch,train_loss,val_loss,rec,vel,swd,reg\n";
      for (const EpochStats& e : r.history) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                      e.train_loss, e.val_loss, e.reconstruction, e.velocity, e.swd,
                      e.regularization);
        os << buf;
      }
      return os.str();
    };
    const std::string h1 = csv(train(cfg, data, h, 1));
    const std::string h2 = csv(train(cfg, data, h, 2));
    const std::string h4 = csv(train(cfg, data, h, 4));
    const bool ok = h1 == h2 && h2 == h4;
    return {ok, ok ? "history.csv identical for threads 1, 2, 4"
                   : "histories differ across thread counts"};
  });

  // 9. resampling contracts over 50 random meshes
  criterion("9 resampling contracts",
            []() { return from_check(check_resample_contracts(), 0, 0); });

  // 10. closed-form loss identities
  criterion("10 loss identities",
            []() { return from_check(check_loss_identities(), 0, 0); });

  std::size_t failed = 0;
  for (const Criterion& c : results) {
    if (!c.pass) ++failed;
  }
  if (failed == 0) {
    std::printf("acceptance: all %zu criteria passed\n", results.size());
    return 0;
  }
  std::printf("acceptance: %zu of %zu criteria FAILED\n", failed, results.size());
  return 1;
}
