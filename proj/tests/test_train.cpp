#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "otanim/checks.hpp"
#include "otanim/train.hpp"

using namespace otanim;

TEST_CASE("adamw leaves parameters alone with zero grad and no decay") {
  std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor({3}, {1.0, -2.0, 0.5})}};
  const std::vector<Tensor> grads{Tensor({3})};
  AdamWState state;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  adamw_step(params, grads, state, cfg, 1);
  CHECK(params[0].second[0] == 1.0);
  CHECK(params[0].second[1] == -2.0);
  CHECK(params[0].second[2] == 0.5);
}

TEST_CASE("adamw first step matches the bias-corrected closed form") {
  std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor({1}, {1.0})}};
  const std::vector<Tensor> grads{Tensor({1}, {1.0})};
  AdamWState state;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  adamw_step(params, grads, state, cfg, 1);
  // m_hat = 1, v_hat = 1 after correction, so p = 1 - lr / (1 + eps)
  const double want = 1.0 - 0.1 * (1.0 / (1.0 + cfg.adam_eps));
  CHECK(params[0].second[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("adamw applies decoupled decay with zero gradient") {
  std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor({1}, {1.0})}};
  const std::vector<Tensor> grads{Tensor({1})};
  AdamWState state;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.01;
  adamw_step(params, grads, state, cfg, 1);
  CHECK(params[0].second[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-15));
}

TEST_CASE("adamw refuses shape mismatches and non-finite gradients") {
  std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor({2})}};
  AdamWState state;
  TrainConfig cfg;
  CHECK_THROWS_AS(adamw_step(params, {Tensor({3})}, state, cfg, 1), std::invalid_argument);
  CHECK_THROWS_AS(adamw_step(params, {Tensor({2}, {1.0, std::nan("")})}, state, cfg, 1),
                  std::runtime_error);
}

TEST_CASE("adamw follows the analytic trajectory for two constant-gradient steps") {
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.weight_decay = 0.0;
  std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor({1}, {0.3})}};
  AdamWState state;
  const double g = -0.7;
  double m = 0.0, v = 0.0, p = 0.3;
  for (std::size_t step = 1; step <= 2; ++step) {
    adamw_step(params, {Tensor({1}, {g})}, state, cfg, step);
    m = cfg.adam_beta1 * m + (1 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1 - cfg.adam_beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.adam_beta1, static_cast<double>(step)));
    const double vh = v / (1 - std::pow(cfg.adam_beta2, static_cast<double>(step)));
    p -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
    CHECK(params[0].second[0] == doctest::Approx(p).epsilon(1e-14));
  }
}

TEST_CASE("pca recovers a line in R^6") {
  Rng rng(3);
  Tensor dir({6});
  double n2 = 0.0;
  for (double& v : dir.values()) {
    v = rng.normal();
    n2 += v * v;
  }
  for (double& v : dir.values()) v /= std::sqrt(n2);
  Tensor data({40, 6});
  for (std::size_t i = 0; i < 40; ++i) {
    const double t = rng.uniform(-2.0, 2.0);
    for (std::size_t c = 0; c < 6; ++c) data.at(i, c) = 3.0 + t * dir[c];
  }
  const PCABasis basis = pca_fit(data, 1, 7);
  REQUIRE(basis.components.dim(0) == 1);
  double dot = 0.0;
  for (std::size_t c = 0; c < 6; ++c) dot += basis.components.at(0, c) * dir[c];
  CHECK(std::fabs(std::fabs(dot) - 1.0) < 1e-8);
}

TEST_CASE("pca truncates to the data rank with a warning flag") {
  Tensor data({3, 5});
  Rng rng(4);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = rng.uniform(-1, 1);
  const PCABasis basis = pca_fit(data, 5, 1);
  CHECK(basis.truncated_to_rank);
  CHECK(basis.components.dim(0) <= 2);  // 3 samples centered span at most rank 2
}

TEST_CASE("pca reconstructs exactly low-rank data") {
  Rng rng(9);
  const std::size_t rank = 3, d = 10, s = 24;
  Tensor factors({rank, d});
  for (double& v : factors.values()) v = rng.normal();
  Tensor data({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    double coef[rank];
    for (std::size_t r = 0; r < rank; ++r) coef[r] = rng.uniform(-1, 1);
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.5;
      for (std::size_t r = 0; r < rank; ++r) acc += coef[r] * factors.at(r, c);
      data.at(i, c) = acc;
    }
  }
  const PCABasis basis = pca_fit(data, rank, 2);
  REQUIRE(basis.components.dim(0) == rank);
  // rows orthonormal
  for (std::size_t a = 0; a < rank; ++a) {
    for (std::size_t b = 0; b < rank; ++b) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += basis.components.at(a, c) * basis.components.at(b, c);
      CHECK(std::fabs(dot - (a == b ? 1.0 : 0.0)) < 1e-9);
    }
  }
  // projection reproduces the data
  for (std::size_t i = 0; i < s; ++i) {
    double rec[10];
    for (std::size_t c = 0; c < d; ++c) rec[c] = basis.mean[c];
    for (std::size_t r = 0; r < rank; ++r) {
      double coef = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        coef += (data.at(i, c) - basis.mean[c]) * basis.components.at(r, c);
      }
      for (std::size_t c = 0; c < d; ++c) rec[c] += coef * basis.components.at(r, c);
    }
    for (std::size_t c = 0; c < d; ++c) CHECK(std::fabs(rec[c] - data.at(i, c)) < 1e-8);
  }
  // explained variances are sorted
  for (std::size_t r = 1; r < basis.explained_variance.size(); ++r) {
    CHECK(basis.explained_variance[r] <= basis.explained_variance[r - 1] + 1e-12);
  }
}

TEST_CASE("synthetic dataset is deterministic and structured") {
  const Dataset a = synth_dataset(1, 2, 8);
  const Dataset b = synth_dataset(1, 2, 8);
  REQUIRE(a.samples.size() == 2);
  CHECK(a.template_mesh.vertex_count() == 642);
  for (std::size_t s = 0; s < a.samples.size(); ++s) {
    REQUIRE(a.samples[s].audio.shape() == b.samples[s].audio.shape());
    for (std::size_t i = 0; i < a.samples[s].audio.size(); ++i) {
      CHECK(a.samples[s].audio[i] == b.samples[s].audio[i]);
    }
    for (std::size_t i = 0; i < a.samples[s].targets.size(); ++i) {
      CHECK(a.samples[s].targets[i] == b.samples[s].targets[i]);
    }
  }
  CHECK(a.lip_mask.indices.size() == 64);
  CHECK(a.face_mask.indices.size() == 256);
  CHECK(a.head_mask.indices.size() == 642);

  const Dataset c = synth_dataset(2, 2, 8);
  bool differs = false;
  for (std::size_t i = 0; i < c.samples[0].targets.size(); ++i) {
    if (c.samples[0].targets[i] != a.samples[0].targets[i]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("lip vertices move much more than the top cap") {
  const Dataset data = synth_dataset(3, 3, 12);
  const std::size_t n = data.template_mesh.vertex_count();
  // top cap: the 10% of vertices with the largest z
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return data.template_mesh.vertex(x).z > data.template_mesh.vertex(y).z;
  });
  const std::size_t cap = n / 10;

  double lip_sq = 0.0, top_sq = 0.0;
  std::size_t lip_n = 0, top_n = 0;
  for (const SequenceSample& s : data.samples) {
    for (std::size_t t = 0; t < s.frame_count(); ++t) {
      for (const int v : data.lip_mask.indices) {
        for (int c = 0; c < 3; ++c) {
          const double d = s.targets[(t * n + static_cast<std::size_t>(v)) * 3 +
                                     static_cast<std::size_t>(c)] -
                           (c == 0   ? data.template_mesh.vertex(static_cast<std::size_t>(v)).x
                            : c == 1 ? data.template_mesh.vertex(static_cast<std::size_t>(v)).y
                                     : data.template_mesh.vertex(static_cast<std::size_t>(v)).z);
          lip_sq += d * d;
        }
        ++lip_n;
      }
      for (std::size_t k = 0; k < cap; ++k) {
        const std::size_t v = order[k];
        for (int c = 0; c < 3; ++c) {
          const double d =
              s.targets[(t * n + v) * 3 + static_cast<std::size_t>(c)] -
              (c == 0   ? data.template_mesh.vertex(v).x
               : c == 1 ? data.template_mesh.vertex(v).y
                        : data.template_mesh.vertex(v).z);
          top_sq += d * d;
        }
        ++top_n;
      }
    }
  }
  const double lip_rms = std::sqrt(lip_sq / static_cast<double>(lip_n));
  const double top_rms = std::sqrt(top_sq / static_cast<double>(top_n));
  CHECK(lip_rms >= 5.0 * top_rms);
}

TEST_CASE("quiet frames stay near the template") {
  const Dataset data = synth_dataset(5, 4, 16);
  const std::size_t n = data.template_mesh.vertex_count();
  for (const SequenceSample& s : data.samples) {
    for (std::size_t t = 0; t < s.frame_count(); ++t) {
      // envelope is channel 0 up to 1% noise
      if (s.audio.at(t, 0) > 0.02) continue;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec3 tv = data.template_mesh.vertex(i);
        const double dx = s.targets[(t * n + i) * 3 + 0] - tv.x;
        const double dy = s.targets[(t * n + i) * 3 + 1] - tv.y;
        const double dz = s.targets[(t * n + i) * 3 + 2] - tv.z;
        CHECK(std::sqrt(dx * dx + dy * dy + dz * dz) < 0.03);
      }
    }
  }
}

TEST_CASE("split is deterministic and respects the fraction") {
  const TrainSplit s = split_dataset(8, 0.25, 1);
  CHECK(s.validation.size() == 2);
  CHECK(s.train.size() == 6);
  const TrainSplit s2 = split_dataset(8, 0.25, 1);
  CHECK(s.train == s2.train);
  CHECK(s.validation == s2.validation);
  const TrainSplit tiny = split_dataset(2, 0.1, 3);
  CHECK(tiny.validation.size() == 1);
}

namespace {

TrainConfig small_train_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 11;
  cfg.projection_count = 8;
  cfg.batch_size = 8;
  cfg.model.mesh_channels = 6;
  cfg.model.latent_width = 16;
  cfg.model.audio_channels = 16;
  cfg.model.pca_components = 6;
  return cfg;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched") {
  const Dataset data = synth_dataset(1, 3, 6);
  const Hierarchy h = build_hierarchy(data.template_mesh, 3);
  TrainConfig cfg = small_train_config();
  cfg.learning_rate = 0.0;
  cfg.weight_decay = 0.0;
  const TrainResult r = train(cfg, data, h);

  const MeshPyramid pyramid = make_pyramid(h);
  // re-derive the initial parameters and compare
  const TrainSplit split = split_dataset(data.samples.size(), cfg.validation_fraction, cfg.seed);
  std::size_t frames = 0;
  for (const std::size_t s : split.train) frames += data.samples[s].frame_count();
  Tensor disp({frames, data.template_mesh.vertex_count() * 3});
  std::size_t row = 0;
  for (const std::size_t s : split.train) {
    const Tensor& t = data.samples[s].targets;
    for (std::size_t f = 0; f < t.dim(0); ++f) {
      for (std::size_t c = 0; c < disp.dim(1); ++c) {
        const std::size_t i = c / 3;
        const double base = c % 3 == 0   ? data.template_mesh.vertex(i).x
                            : c % 3 == 1 ? data.template_mesh.vertex(i).y
                                         : data.template_mesh.vertex(i).z;
        disp.at(row, c) = t[f * disp.dim(1) + c] - base;
      }
      ++row;
    }
  }
  const PCABasis pca = pca_fit(disp, cfg.model.pca_components, cfg.seed);
  const ModelParams init = init_params(cfg.model, pyramid, pca.components, pca.mean, cfg.seed);
  REQUIRE(init.trainable.size() == r.best_params.trainable.size());
  for (std::size_t k = 0; k < init.trainable.size(); ++k) {
    const Tensor& a = init.trainable[k].second;
    const Tensor& b = r.best_params.trainable[k].second;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("validation-best selection never loses to the final epoch") {
  const Dataset data = synth_dataset(7, 3, 6);
  const Hierarchy h = build_hierarchy(data.template_mesh, 3);
  TrainConfig cfg = small_train_config();
  cfg.epochs = 3;
  const TrainResult r = train(cfg, data, h);
  REQUIRE(r.history.size() == 4);
  double best = r.history.front().val_loss;
  for (const EpochStats& e : r.history) best = std::min(best, e.val_loss);
  CHECK(r.history[r.best_epoch].val_loss == best);
}

TEST_CASE("training is bitwise deterministic across thread counts") {
  const Dataset data = synth_dataset(13, 2, 5);
  const Hierarchy h = build_hierarchy(data.template_mesh, 3);
  TrainConfig cfg = small_train_config();
  cfg.epochs = 2;
  const TrainResult a = train(cfg, data, h, 1);
  const TrainResult b = train(cfg, data, h, 4);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
    CHECK(a.history[i].swd == b.history[i].swd);
  }
  for (std::size_t k = 0; k < a.best_params.trainable.size(); ++k) {
    const Tensor& ta = a.best_params.trainable[k].second;
    const Tensor& tb = b.best_params.trainable[k].second;
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
  }
}
