#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "otanim/checks.hpp"
#include "otanim/ot.hpp"

using namespace otanim;

TEST_CASE("varifold of a single right triangle") {
  const TriangleMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  const double gamma = 2.5;
  const DiscreteMeasure v = mesh_to_varifold(m, gamma);
  REQUIRE(v.count() == 1);
  CHECK(v.weights[0] == 1.0);
  const double want[6] = {1.0 / 3, 1.0 / 3, 0.0, 0.0, 0.0, gamma};
  for (int i = 0; i < 6; ++i) CHECK(v.supports[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("varifold weights are proportional to areas") {
  // two triangles of equal area share the weight evenly
  const TriangleMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}}, {{0, 1, 2}, {1, 3, 2}});
  const DiscreteMeasure v = mesh_to_varifold(m, 1.0);
  REQUIRE(v.count() == 2);
  CHECK(v.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(v.weights[1] == doctest::Approx(0.5).epsilon(1e-12));

  const TriangleMesh sphere = make_icosphere(2);
  const DiscreteMeasure vs = mesh_to_varifold(sphere, 1.0);
  const FaceGeometry g = face_geometry(sphere);
  double total = 0.0;
  for (const double a : g.areas) total += a;
  double sum = 0.0;
  for (std::size_t f = 0; f < vs.count(); ++f) {
    sum += vs.weights[f];
    CHECK(vs.weights[f] == doctest::Approx(g.areas[f] / total).epsilon(1e-9));
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("degenerate faces are skipped") {
  const TriangleMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 0, 0}}, {{0, 1, 2}, {0, 1, 3}});
  const DiscreteMeasure v = mesh_to_varifold(m, 1.0);  // collinear second face drops out
  CHECK(v.count() == 1);
  const TriangleMesh all_degenerate({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, {{0, 1, 2}});
  CHECK_THROWS_AS(mesh_to_varifold(all_degenerate, 1.0), std::invalid_argument);
}

TEST_CASE("wasserstein_1d closed forms") {
  const std::vector<double> w2{0.5, 0.5};
  CHECK(wasserstein_1d(std::vector<double>{1.0, 2.0}, w2, std::vector<double>{1.0, 2.0}, w2, 2.0) ==
        0.0);
  // two diracs
  const std::vector<double> w1{1.0};
  const double a = 0.3, b = -1.4;
  CHECK(wasserstein_1d(std::vector<double>{a}, w1, std::vector<double>{b}, w1, 2.0) ==
        doctest::Approx((a - b) * (a - b)).epsilon(1e-15));
  // weight-sum violation
  CHECK_THROWS_AS(
      wasserstein_1d(std::vector<double>{1.0}, std::vector<double>{0.7}, std::vector<double>{0.0},
                     w1, 2.0),
      std::invalid_argument);
}

TEST_CASE("closed form equals permutation enumeration") {
  const CheckResult r = check_ot_oracle();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("1d metric properties hold") {
  Rng rng(2027);
  for (int trial = 0; trial < 40; ++trial) {
    const DiscreteMeasure a = random_measure(2 + rng.index(5), 1, rng);
    const DiscreteMeasure b = random_measure(2 + rng.index(5), 1, rng);
    const DiscreteMeasure c = random_measure(2 + rng.index(5), 1, rng);
    const double ab = wasserstein_1d(a, b, 2.0);
    CHECK(ab == wasserstein_1d(b, a, 2.0));
    CHECK(wasserstein_1d(a, a, 2.0) == 0.0);
    CHECK(std::sqrt(ab) <=
          std::sqrt(wasserstein_1d(a, c, 2.0)) + std::sqrt(wasserstein_1d(c, b, 2.0)) + 1e-9);
  }
}

TEST_CASE("projections are unit norm and deterministic") {
  const ProjectionSet p = sample_projections(6, 100, 7);
  for (std::size_t l = 0; l < p.count; ++l) {
    double n = 0.0;
    for (const double d : p.direction(l)) n += d * d;
    CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-12);
  }
  const ProjectionSet q = sample_projections(6, 100, 7);
  CHECK(p.directions == q.directions);

  // directions average out at rate ~ 1/sqrt(L)
  const ProjectionSet big = sample_projections(6, 10000, 11);
  double mean[6] = {0, 0, 0, 0, 0, 0};
  for (std::size_t l = 0; l < big.count; ++l) {
    for (int k = 0; k < 6; ++k) mean[k] += big.direction(l)[k];
  }
  double norm = 0.0;
  for (int k = 0; k < 6; ++k) {
    mean[k] /= static_cast<double>(big.count);
    norm += mean[k] * mean[k];
  }
  CHECK(std::sqrt(norm) < 0.1);

  // one dimension: signs only
  const ProjectionSet one = sample_projections(1, 50, 3);
  for (std::size_t l = 0; l < one.count; ++l) {
    CHECK(std::fabs(std::fabs(one.direction(l)[0]) - 1.0) < 1e-15);
  }
}

TEST_CASE("sliced wasserstein equals the 1d distance in one dimension") {
  Rng rng(5);
  const DiscreteMeasure a = random_measure(5, 1, rng);
  const DiscreteMeasure b = random_measure(7, 1, rng);
  const ProjectionSet p = sample_projections(1, 16, 9);
  const double sw = sliced_wasserstein(a, b, 2.0, p).value;
  CHECK(sw == doctest::Approx(wasserstein_1d(a, b, 2.0)).epsilon(1e-12));
}

TEST_CASE("sliced wasserstein of a measure with itself is exactly zero") {
  Rng rng(6);
  const DiscreteMeasure a = random_measure(9, 6, rng);
  const ProjectionSet p = sample_projections(6, 32, 10);
  CHECK(sliced_wasserstein(a, a, 2.0, p).value == 0.0);
  CHECK_THROWS_AS(sliced_wasserstein(a, random_measure(4, 3, rng), 2.0, p),
                  std::invalid_argument);
}

TEST_CASE("metric axioms with shared projections") {
  const CheckResult r = check_metric_axioms();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("monte carlo estimates tighten with more projections") {
  Rng rng(8);
  int agreements = 0;
  for (int pair = 0; pair < 6; ++pair) {
    const TriangleMesh a = make_noisy_sphere(1, 0.15, rng.next_u64());
    const TriangleMesh b = make_noisy_sphere(1, 0.15, rng.next_u64());
    const DiscreteMeasure va = mesh_to_varifold(a, 1.0);
    const DiscreteMeasure vb = mesh_to_varifold(b, 1.0);
    const SwdEstimate small = sliced_wasserstein(va, vb, 2.0, sample_projections(6, 100, 100 + pair));
    const SwdEstimate big = sliced_wasserstein(va, vb, 2.0, sample_projections(6, 10000, 900 + pair));
    const double gap = std::fabs(small.value - big.value);
    const double tol = 5.0 * std::sqrt(small.std_error * small.std_error +
                                       big.std_error * big.std_error);
    if (gap <= tol) ++agreements;
  }
  CHECK(agreements == 6);
}

TEST_CASE("swd loss is zero with zero gradient when meshes match") {
  const TriangleMesh target = make_noisy_sphere(1, 0.05, 12);
  Tensor pred({target.vertex_count(), 3});
  for (std::size_t i = 0; i < target.vertex_count(); ++i) {
    pred.at(i, 0) = target.vertex(i).x;
    pred.at(i, 1) = target.vertex(i).y;
    pred.at(i, 2) = target.vertex(i).z;
  }
  const ProjectionSet proj = sample_projections(6, 16, 4);
  Tape tape;
  Var p = tape.leaf(pred, true);
  Var loss = swd_loss_op(p, target, 1.0, proj);
  CHECK(loss.value()[0] == 0.0);
  tape.backward(loss);
  const Tensor grad = tape.gradient(p);
  for (const double g : grad.values()) CHECK(g == 0.0);
}

TEST_CASE("swd loss grows monotonically under translation") {
  const TriangleMesh target = make_noisy_sphere(1, 0.02, 19);
  const ProjectionSet proj = sample_projections(6, 64, 21);
  double prev = -1.0;
  for (int k = 0; k <= 8; ++k) {
    const double delta = 0.125 * k;
    Tensor pred({target.vertex_count(), 3});
    for (std::size_t i = 0; i < target.vertex_count(); ++i) {
      pred.at(i, 0) = target.vertex(i).x + delta;
      pred.at(i, 1) = target.vertex(i).y;
      pred.at(i, 2) = target.vertex(i).z;
    }
    Tape tape;
    // normals match exactly, so the loss isolates the positional shift
    Var loss = swd_loss_op(tape.leaf(pred, false), target, 0.0, proj);
    const double value = loss.value()[0];
    if (k > 0) CHECK(value > prev);
    prev = value;
  }
}

TEST_CASE("swd gradient matches finite differences on a small sheet") {
  const CheckResult r = check_gradient_suite();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("oracle rejects unsupported inputs") {
  Rng rng(3);
  const DiscreteMeasure uniform = random_measure(4, 2, rng);
  std::vector<double> w(4, 0.25);
  const DiscreteMeasure eq = make_measure(2, std::vector<double>(uniform.supports), w);
  CHECK_THROWS_AS(exact_wasserstein_oracle(eq, uniform, 2.0), std::invalid_argument);
  std::vector<double> big((9) * 2, 0.0);
  std::vector<double> bw(9, 1.0 / 9);
  const DiscreteMeasure nine = make_measure(2, big, bw);
  CHECK_THROWS_AS(exact_wasserstein_oracle(nine, nine, 2.0), std::invalid_argument);
}
