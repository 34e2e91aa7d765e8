#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "otanim/checks.hpp"
#include "otanim/linalg.hpp"
#include "otanim/ottk.hpp"
#include "otanim/rng.hpp"
#include "otanim/sparse.hpp"
#include "otanim/tape.hpp"

using namespace otanim;

TEST_CASE("tensor shape and data agree") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(t.reshaped({4}), std::invalid_argument);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
}

TEST_CASE("non-finite values are detected") {
  Tensor t({3}, {1.0, std::nan(""), 2.0});
  CHECK_THROWS_AS(t.check_finite("test"), std::runtime_error);
  Tensor inf({2}, {1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(inf.check_finite("test"), std::runtime_error);
  Tensor ok({2}, {1.0, -2.0});
  CHECK_NOTHROW(ok.check_finite("test"));
}

TEST_CASE("matmul identity and hand case") {
  Tape tape;
  Var i3 = tape.constant(Tensor::identity(3));
  Tensor x({3, 2}, {1, 2, 3, 4, 5, 6});
  Var vx = tape.leaf(x, false);
  const Tensor y = matmul(i3, vx).value();
  for (std::size_t i = 0; i < 6; ++i) CHECK(y[i] == x[i]);

  Var a = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor({2, 1}, {1, 1}));
  const Tensor p = matmul(a, b).value();
  CHECK(p[0] == 3.0);
  CHECK(p[1] == 7.0);

  CHECK_THROWS_AS(matmul(a, tape.constant(Tensor({3, 1}))), std::invalid_argument);
}

TEST_CASE("sparse product matches densified product") {
  Rng rng(42);
  const SparseMatrix s = random_connected_adjacency(10, 0.3, rng);
  Tensor x({10, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  const Tensor dense = s.to_dense();
  Tape tape;
  const Tensor via_sparse = sparse_matmul(s, tape.leaf(x, false)).value();
  const Tensor via_dense = matmul(tape.leaf(dense, false), tape.leaf(x, false)).value();
  for (std::size_t i = 0; i < via_sparse.size(); ++i) {
    CHECK(std::fabs(via_sparse[i] - via_dense[i]) < 1e-12);
  }

  // zero matrix maps everything to zero
  const SparseMatrix zero(3, 3, {0, 0, 0, 0}, {}, {});
  const Tensor zy = sparse_matmul(zero, tape.leaf(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}), false)).value();
  for (std::size_t i = 0; i < zy.size(); ++i) CHECK(zy[i] == 0.0);
}

TEST_CASE("csr invariants are validated") {
  CHECK_THROWS_AS(SparseMatrix(2, 2, {0, 1}, {0}, {1.0}), std::invalid_argument);  // bad offsets
  CHECK_THROWS_AS(SparseMatrix(1, 2, {0, 2}, {1, 0}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(SparseMatrix(1, 2, {0, 1}, {5}, {1.0}), std::invalid_argument);
  const SparseMatrix m = SparseMatrix::from_triplets(2, 2, {{0, 1, 2.0}, {0, 1, 3.0}, {1, 0, 1.0}});
  CHECK(m.coeff(0, 1) == 5.0);  // duplicates summed
  CHECK(m.coeff(1, 0) == 1.0);
  CHECK(m.nnz() == 2);
}

TEST_CASE("relu and sum trivial cases") {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, {-1.0, 0.0, 2.0}), true);
  const Tensor y = relu(x).value();
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);

  Var s = sum(x);
  tape.backward(s);
  const Tensor g = tape.gradient(x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("backward of a leaf is one and of a constant is zero") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0), true);
  tape.backward(x);
  CHECK(tape.gradient(x)[0] == 1.0);

  Tape tape2;
  Var y = tape2.leaf(Tensor::scalar(5.0), true);
  Var c = tape2.constant(Tensor::scalar(7.0));
  Var out = sum(mul(c, c));
  (void)y;
  tape2.backward(out);
  CHECK(tape2.gradient(y)[0] == 0.0);
}

TEST_CASE("backward requires scalar output") {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1, 2}), true);
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("backward is deterministic") {
  Rng rng(7);
  std::vector<double> values(8);
  for (double& x : values) x = rng.uniform(-1, 1);
  Tape tape;
  Var a = tape.leaf(Tensor({4, 2}, std::move(values)), true);
  Var b = tape.leaf(Tensor({2, 3}, {0.3, -0.4, 1.2, 0.8, -1.1, 0.05}), true);
  Var out = mean(square(matmul(a, b)));
  tape.backward(out);
  const Tensor g1 = tape.gradient(a);
  tape.backward(out);
  const Tensor g2 = tape.gradient(a);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("power iteration on a diagonal matrix") {
  const SparseMatrix d = SparseMatrix::from_triplets(
      3, 3, {{0, 0, 1.0}, {1, 1, 2.0}, {2, 2, 5.0}});
  const PowerIterationResult r = power_iteration(d, 100, 1);
  CHECK(std::fabs(r.eigenvalue - 5.0) < 1e-6);
  CHECK_THROWS_AS(power_iteration(SparseMatrix(2, 3, {0, 0, 0}, {}, {}), 10, 1),
                  std::invalid_argument);
}

TEST_CASE("power iteration matches the Jacobi oracle on random symmetric matrices") {
  Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<SparseMatrix::Triplet> trips;
    Tensor dense({8, 8});
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = i; j < 8; ++j) {
        const double v = rng.uniform(-1.0, 1.0);
        dense.at(i, j) = v;
        dense.at(j, i) = v;
        trips.push_back({i, j, v});
        if (i != j) trips.push_back({j, i, v});
      }
    }
    const SparseMatrix s = SparseMatrix::from_triplets(8, 8, std::move(trips));
    const PowerIterationResult r = power_iteration(s, 3000, 99);
    const EighResult eig = jacobi_eigh(dense);
    const double want =
        std::max(std::fabs(eig.eigenvalues.front()), std::fabs(eig.eigenvalues.back()));
    CHECK(std::fabs(std::fabs(r.eigenvalue) - want) / want < 1e-6);
  }
}

TEST_CASE("finite difference harness on sum of squares") {
  const Tensor x({2}, {1.0, 2.0});
  const Tensor analytic({2}, {2.0, 4.0});
  const auto f = [](const Tensor& p) {
    double s = 0.0;
    for (const double v : p.values()) s += v * v;
    return s;
  };
  CHECK(finite_diff_check(f, x, analytic) < 1e-9);
  CHECK_THROWS_AS(finite_diff_check(f, x, analytic, 0.0), std::invalid_argument);
}

TEST_CASE("ottk round trip preserves payload bits") {
  Rng rng(5);
  Tensor t({3, 4, 2});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  std::stringstream buf;
  write_ottk(buf, t);
  const Tensor back = read_ottk(buf);
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

  std::stringstream bad("not a tensor");
  CHECK_THROWS_AS(read_ottk(bad), std::runtime_error);
}

TEST_CASE("ottk header layout is pinned") {
  std::stringstream buf;
  write_ottk(buf, Tensor({2}, {1.0, 2.0}));
  const std::string bytes = buf.str();
  REQUIRE(bytes.size() == 4 + 4 + 1 + 1 + 8 + 16);
  CHECK(bytes.substr(0, 4) == "OTTK");
  CHECK(bytes[4] == 1);  // version u32 LE
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 1);  // dtype f64
  CHECK(bytes[9] == 1);  // rank
  CHECK(static_cast<unsigned char>(bytes[10]) == 2);  // shape[0] LE
}

TEST_CASE("rng streams are deterministic and splittable") {
  Rng a(99);
  Rng b(99);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c = Rng(99).child(1);
  Rng d = Rng(99).child(2);
  CHECK(c.next_u64() != d.next_u64());
  Rng e(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = e.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
