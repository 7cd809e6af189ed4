#include <doctest.h>

#include "noisegeom/error.hpp"
#include "noisegeom/linalg.hpp"
#include "oracles.hpp"

using namespace noisegeom;

namespace {

Matrix random_symmetric(Index n, RngStream& rng) {
  Matrix a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = rng.normal();
  return 0.5 * (a + a.transpose());
}

Matrix random_psd(Index n, Index rank, RngStream& rng) {
  Matrix b(n, rank);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < rank; ++j) b(i, j) = rng.normal();
  return b * b.transpose() / static_cast<double>(rank);
}

}  // namespace

TEST_CASE("dense eigenvalues agree with inertia bisection") {
  RngStream rng(1, 0);
  for (Index n : {1, 2, 5, 12}) {
    const Matrix a = random_symmetric(n, rng);
    const auto eig = sym_eig_dense(SymMatrix(a));
    const auto ref = oracle::bisection_eigenvalues(a);
    for (Index j = 0; j < n; ++j) CHECK(eig.eigenvalues[j] == doctest::Approx(ref[j]).epsilon(1e-10));
    for (Index j = 0; j < n; ++j) {
      const Vector u = eig.eigenvector(j);
      CHECK((a * u - eig.eigenvalues[j] * u).norm() < 1e-10);
      CHECK(u.norm() == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("eigenvalues of a tridiagonal matrix with known spectrum") {
  // -1, 2, -1 stencil: 2 - 2 cos(j pi / (n + 1)).
  const Index n = 9;
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    a(i, i) = 2.0;
    if (i + 1 < n) a(i, i + 1) = a(i + 1, i) = -1.0;
  }
  const auto eig = sym_eig_dense(SymMatrix(a));
  for (Index j = 0; j < n; ++j) {
    const double expected = 2.0 - 2.0 * std::cos(static_cast<double>(n - j) * M_PI / static_cast<double>(n + 1));
    CHECK(eig.eigenvalues[j] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("symmetric matrix validation") {
  Matrix a(2, 2);
  a << 1.0, 2.0, 3.0, 4.0;
  CHECK_THROWS_AS(SymMatrix{a}, ValidationError);
  a << 1.0, NAN, NAN, 1.0;
  CHECK_THROWS_AS(SymMatrix{a}, ValidationError);
  CHECK_THROWS_AS(SymMatrix{Matrix(2, 3)}, ValidationError);
}

TEST_CASE("dense limit raises a capacity error") {
  CHECK_THROWS_AS(sym_eig_dense(SymMatrix(Matrix::Identity(5, 5)), 4), CapacityError);
}

TEST_CASE("psd clamping") {
  SpectralDecomposition d;
  d.eigenvalues = Vector(3);
  d.eigenvalues << 2.0, 0.0, -1e-12;
  clamp_psd(d);
  CHECK(d.eigenvalues[2] == 0.0);
  d.eigenvalues << 2.0, 0.0, -1e-6;
  CHECK_THROWS_AS(clamp_psd(d), NumericalError);
}

TEST_CASE("lanczos top-k matches dense on a low-rank psd operator") {
  RngStream rng(2, 0);
  const Matrix a = random_psd(80, 15, rng);
  const auto dense = sym_eig_dense(SymMatrix(a));
  RngStream start(2, 1);
  const auto top = lanczos_topk(dense_operator(a), 6, 200, 1e-10, start);
  REQUIRE(top.k() == 6);
  for (Index j = 0; j < 6; ++j) {
    CHECK(top.eigenvalues[j] == doctest::Approx(dense.eigenvalues[j]).epsilon(1e-8));
    const Vector u = top.eigenvector(j);
    CHECK((a * u - top.eigenvalues[j] * u).norm() <= 1e-10 * top.eigenvalues[0] * 1.0001);
  }
}

TEST_CASE("lanczos on a diagonal operator") {
  Vector diag(50);
  for (Index i = 0; i < 50; ++i) diag[i] = 1.0 / static_cast<double>(i + 1);
  RngStream rng(3, 0);
  const auto top = lanczos_topk(diagonal_operator(diag), 4, 100, 1e-10, rng);
  for (Index j = 0; j < 4; ++j) CHECK(top.eigenvalues[j] == doctest::Approx(diag[j]).epsilon(1e-8));
}

TEST_CASE("psd square root squares back") {
  RngStream rng(4, 0);
  const Matrix a = random_psd(10, 10, rng);
  const Matrix r = psd_sqrt(SymMatrix(a));
  CHECK((r * r - a).norm() < 1e-10 * a.norm());
  CHECK((r - r.transpose()).norm() < 1e-12);
}

TEST_CASE("gaussian vectors have the requested covariance") {
  Vector diag(3);
  diag << 4.0, 1.0, 0.25;
  Vector sd = diag.cwiseSqrt();
  const Vector mean = Vector::Constant(3, 1.0);
  RngStream rng(5, 0);
  Vector s1 = Vector::Zero(3);
  Vector s2 = Vector::Zero(3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vector x = gaussian_vector(mean, diagonal_operator(sd), rng);
    s1 += x;
    s2 += (x - mean).cwiseProduct(x - mean);
  }
  for (Index j = 0; j < 3; ++j) {
    CHECK(std::abs(s1[j] / n - 1.0) < 5.0 * std::sqrt(diag[j] / n));
    CHECK(std::abs(s2[j] / n / diag[j] - 1.0) < 0.03);
  }
}

TEST_CASE("compensated summation") {
  CompensatedSum s;
  for (int k = 1; k <= 625; ++k) s += 1.0 / std::sqrt(static_cast<double>(k));
  CHECK(s.value() == doctest::Approx(48.559642824524126).epsilon(1e-14));
  CompensatedSum t;
  t += 1e16;
  t += 1.0;
  t += -1e16;
  CHECK(t.value() == 1.0);
}
