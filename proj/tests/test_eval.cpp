#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "otanim/checks.hpp"
#include "otanim/eval.hpp"

using namespace otanim;

namespace {

struct Fixture {
  VertexMask lip = make_mask("lip", {0, 1}, 6);
  VertexMask face = make_mask("face", {0, 1, 2, 3}, 6);
  VertexMask head = make_mask("head", {0, 1, 2, 3, 4, 5}, 6);

  Tensor sequence(std::size_t frames, double fill = 0.0) const {
    Tensor t({frames, 6, 3});
    for (double& v : t.values()) v = fill;
    return t;
  }
};

}  // namespace

TEST_CASE("identical sequences give an all-zero report") {
  Fixture fx;
  Rng rng(1);
  Tensor seq = fx.sequence(4);
  for (double& v : seq.values()) v = rng.uniform(-1, 1);
  const MetricReport r = masked_errors(seq, seq, fx.lip, fx.face, fx.head);
  CHECK(r.e_max_lip == 0.0);
  CHECK(r.e_mean_lip == 0.0);
  CHECK(r.e_mean_face == 0.0);
  CHECK(r.e_mean_head == 0.0);
  CHECK(dtw_lip(seq, seq, fx.lip) == 0.0);
}

TEST_CASE("uniform offset reports its euclidean norm everywhere") {
  Fixture fx;
  const Tensor target = fx.sequence(3);
  Tensor pred = target;
  for (std::size_t i = 0; i < pred.size(); i += 3) {
    pred[i] += 1.0;
    pred[i + 1] += 2.0;
    pred[i + 2] += 2.0;
  }
  const MetricReport r = masked_errors(pred, target, fx.lip, fx.face, fx.head);
  CHECK(r.e_max_lip == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r.e_mean_lip == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r.e_mean_face == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r.e_mean_head == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("single lip vertex offset matches the enumeration oracle") {
  Fixture fx;
  const Tensor target = fx.sequence(4);
  Tensor pred = target;
  // vertex 1 off by 2 along x in frame 2 only
  pred[(2 * 6 + 1) * 3 + 0] += 2.0;
  const MetricReport r = masked_errors(pred, target, fx.lip, fx.face, fx.head);

  // brute force over frames and masks
  double max_acc = 0.0, lip_acc = 0.0;
  for (std::size_t t = 0; t < 4; ++t) {
    double frame_max = 0.0, frame_sum = 0.0;
    for (const int v : fx.lip.indices) {
      double d = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double diff = pred[(t * 6 + static_cast<std::size_t>(v)) * 3 + static_cast<std::size_t>(c)] -
                            target[(t * 6 + static_cast<std::size_t>(v)) * 3 + static_cast<std::size_t>(c)];
        d += diff * diff;
      }
      d = std::sqrt(d);
      frame_max = std::max(frame_max, d);
      frame_sum += d;
    }
    max_acc += frame_max;
    lip_acc += frame_sum / 2.0;
  }
  CHECK(r.e_max_lip == doctest::Approx(max_acc / 4.0).epsilon(1e-12));
  CHECK(r.e_max_lip == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.e_mean_lip == doctest::Approx(lip_acc / 4.0).epsilon(1e-12));
  CHECK(r.e_mean_lip <= r.e_max_lip);
}

TEST_CASE("mean lip error never exceeds max lip error") {
  Fixture fx;
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor target = fx.sequence(5);
    Tensor pred = fx.sequence(5);
    for (double& v : target.values()) v = rng.uniform(-1, 1);
    for (double& v : pred.values()) v = rng.uniform(-1, 1);
    const MetricReport r = masked_errors(pred, target, fx.lip, fx.face, fx.head);
    CHECK(r.e_mean_lip <= r.e_max_lip + 1e-12);
  }
}

TEST_CASE("metrics are invariant under joint rigid translation") {
  Fixture fx;
  Rng rng(9);
  Tensor target = fx.sequence(3);
  Tensor pred = fx.sequence(3);
  for (double& v : target.values()) v = rng.uniform(-1, 1);
  for (double& v : pred.values()) v = rng.uniform(-1, 1);
  Tensor target2 = target, pred2 = pred;
  for (std::size_t i = 0; i < target.size(); i += 3) {
    for (int c = 0; c < 3; ++c) {
      target2[i + static_cast<std::size_t>(c)] += 5.0 - c;
      pred2[i + static_cast<std::size_t>(c)] += 5.0 - c;
    }
  }
  const MetricReport a = masked_errors(pred, target, fx.lip, fx.face, fx.head);
  const MetricReport b = masked_errors(pred2, target2, fx.lip, fx.face, fx.head);
  CHECK(a.e_mean_head == doctest::Approx(b.e_mean_head).epsilon(1e-9));
  CHECK(dtw_lip(pred, target, fx.lip) == doctest::Approx(dtw_lip(pred2, target2, fx.lip)).epsilon(1e-9));
}

TEST_CASE("dtw basics") {
  Fixture fx;
  Rng rng(3);
  Tensor a = fx.sequence(1);
  Tensor b = fx.sequence(1);
  for (double& v : a.values()) v = rng.uniform(-1, 1);
  for (double& v : b.values()) v = rng.uniform(-1, 1);
  // single frame pair: cost is the masked distance sum
  double want = 0.0;
  for (const int v : fx.lip.indices) {
    double d = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double diff = a[static_cast<std::size_t>(v) * 3 + static_cast<std::size_t>(c)] -
                          b[static_cast<std::size_t>(v) * 3 + static_cast<std::size_t>(c)];
      d += diff * diff;
    }
    want += std::sqrt(d);
  }
  CHECK(dtw_lip(a, b, fx.lip) == doctest::Approx(want).epsilon(1e-12));

  // dtw never exceeds the straight diagonal alignment
  Tensor p = fx.sequence(6);
  Tensor q = fx.sequence(6);
  for (double& v : p.values()) v = rng.uniform(-1, 1);
  for (double& v : q.values()) v = rng.uniform(-1, 1);
  double diagonal = 0.0;
  for (std::size_t t = 0; t < 6; ++t) {
    for (const int v : fx.lip.indices) {
      double d = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double diff = p[(t * 6 + static_cast<std::size_t>(v)) * 3 + static_cast<std::size_t>(c)] -
                            q[(t * 6 + static_cast<std::size_t>(v)) * 3 + static_cast<std::size_t>(c)];
        d += diff * diff;
      }
      diagonal += std::sqrt(d);
    }
  }
  CHECK(dtw_lip(p, q, fx.lip) <= diagonal + 1e-12);
}

TEST_CASE("an oracle predictor evaluates to zero everywhere") {
  const Dataset data = synth_dataset(21, 2, 5);
  const std::vector<std::size_t> idx{0, 1};
  const MetricReport r = evaluate_with(
      [](const SequenceSample& s, const TriangleMesh&) { return s.targets; }, data, idx);
  CHECK(r.e_max_lip == 0.0);
  CHECK(r.e_mean_head == 0.0);
  CHECK(r.dtw_lip == 0.0);
  CHECK(r.samples == 2);
}

TEST_CASE("evaluation is deterministic and threads do not change it") {
  const Dataset data = synth_dataset(22, 3, 4);
  const Hierarchy h = build_hierarchy(data.template_mesh, 3);
  const MeshPyramid pyramid = make_pyramid(h);
  ModelConfig cfg;
  cfg.mesh_channels = 6;
  cfg.latent_width = 16;
  cfg.audio_channels = 16;
  Tensor basis({1, data.template_mesh.vertex_count() * 3});
  basis.at(0, 0) = 1.0;
  const ModelParams params =
      init_params(cfg, pyramid, basis, Tensor({data.template_mesh.vertex_count() * 3}), 5);
  const std::vector<std::size_t> idx{0, 1, 2};
  const MetricReport a = evaluate_model(params, pyramid, data, idx, 1);
  const MetricReport b = evaluate_model(params, pyramid, data, idx, 3);
  CHECK(a.e_mean_head == b.e_mean_head);
  CHECK(a.dtw_lip == b.dtw_lip);
  CHECK(a.e_max_lip == b.e_max_lip);
}
