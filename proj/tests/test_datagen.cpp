#include <doctest.h>

#include "noisegeom/datagen.hpp"
#include "noisegeom/error.hpp"

using namespace noisegeom;

TEST_CASE("covariance spec validation") {
  CHECK_THROWS_AS(CovarianceSpec::isotropic(0), ValidationError);
  CHECK_THROWS_AS(CovarianceSpec::diagonal(Vector()), ValidationError);
  Vector neg(2);
  neg << 1.0, -0.5;
  CHECK_THROWS_AS(CovarianceSpec::diagonal(neg), ValidationError);
  CHECK_THROWS_AS(CovarianceSpec::diagonal(Vector::Zero(3)), ValidationError);
}

TEST_CASE("effective ranks") {
  CHECK(effective_rank(CovarianceSpec::isotropic(50)) == doctest::Approx(50.0));
  CHECK(effective_input_dim(CovarianceSpec::isotropic(50)) == doctest::Approx(50.0));
  Vector lambda(3);
  lambda << 2.0, 1.0, 1.0;
  const auto spec = CovarianceSpec::diagonal(lambda);
  CHECK(effective_rank(spec) == doctest::Approx(2.0));
  // srk(S^2) = (4 + 1 + 1) / 4
  CHECK(effective_input_dim(spec) == doctest::Approx(1.5));
}

TEST_CASE("power-law spectra reach the target with the smallest dimension") {
  const auto s20 = power_law_spec(20.0);
  const auto s50 = power_law_spec(50.0);
  CHECK(s20.dim() == 115);
  CHECK(s50.dim() == 662);
  CHECK(effective_rank(s50) >= 50.0);
  CHECK(effective_rank(power_law_spec(50.0)) == doctest::Approx(50.017797417868266).epsilon(1e-12));
  CHECK(s50.eigenvalues()[3] == doctest::Approx(0.5));
  CHECK_FALSE(s50.notes().empty());
  CHECK_THROWS_AS(power_law_spec(1.0), ValidationError);
}

TEST_CASE("figure-1 sample count") {
  CHECK(figure1_sample_count(50.0) == 20);
  CHECK(figure1_sample_count(2000.0) == 39);
  CHECK_THROWS_AS(figure1_sample_count(1.0), ValidationError);
}

TEST_CASE("sample covariance converges to the spec") {
  Vector lambda(4);
  lambda << 3.0, 1.0, 0.5, 0.1;
  const auto spec = CovarianceSpec::diagonal(lambda);
  RngStream rng(1, 0);
  const Dataset data = sample_dataset(spec, 40000, ZeroTeacher{}, rng);
  const Matrix cov = data.inputs.transpose() * data.inputs / static_cast<double>(data.n());
  for (Index i = 0; i < 4; ++i) {
    CHECK(std::abs(cov(i, i) / lambda[i] - 1.0) < 0.04);
    for (Index j = 0; j < i; ++j) CHECK(std::abs(cov(i, j)) < 0.04 * std::sqrt(lambda[i] * lambda[j]));
  }
  CHECK(data.targets.isZero(0.0));
}

TEST_CASE("explicit covariance square root") {
  Matrix s(2, 2);
  s << 2.0, 0.5, 0.5, 1.0;
  const auto spec = CovarianceSpec::explicit_matrix(SymMatrix(s));
  const auto root = spec.sqrt_operator();
  Matrix m(2, 2);
  m.col(0) = root(Vector::Unit(2, 0));
  m.col(1) = root(Vector::Unit(2, 1));
  CHECK((m * m - s).norm() < 1e-12);
  CHECK((spec.apply_operator()(Vector::Ones(2)) - s * Vector::Ones(2)).norm() < 1e-14);
  CHECK(spec.eigenvalues()[0] >= spec.eigenvalues()[1]);
}

TEST_CASE("teachers produce realizable targets") {
  RngStream rng(2, 0);
  const auto spec = CovarianceSpec::isotropic(5);
  const Dataset lin = sample_dataset(spec, 30, RandomLinearTeacher{}, rng);
  const auto* w = std::get_if<LinearTeacher>(&lin.teacher);
  REQUIRE(w != nullptr);
  CHECK((lin.inputs * w->w - lin.targets).norm() < 1e-12);

  const Model model = Model::two_layer(5, 4, 0.2, false);
  const Params star = standard_normal(model.param_dim(), rng);
  const Dataset nl = sample_dataset(spec, 30, ModelTeacher{model, star}, rng);
  CHECK((predict_batch(model, star, nl.inputs) - nl.targets).norm() == 0.0);
}

TEST_CASE("dataset serialization round-trips exactly") {
  RngStream rng(3, 0);
  const Dataset data = sample_dataset(CovarianceSpec::isotropic(3), 7, RandomLinearTeacher{}, rng);
  const Dataset back = parse_dataset(serialize_dataset(data));
  CHECK(back.n() == 7);
  CHECK(back.d() == 3);
  CHECK(back.inputs == data.inputs);
  CHECK(back.targets == data.targets);
  CHECK(teacher_descriptor(back.teacher) == teacher_descriptor(data.teacher));
  CHECK_THROWS_AS(parse_dataset("3 2 zero 0\n1 2 3 4\n"), ValidationError);
}

TEST_CASE("dataset validation") {
  CHECK_THROWS_AS(make_dataset(RowMatrix(2, 2), Vector(3), ZeroTeacher{}), ValidationError);
  RowMatrix x = RowMatrix::Zero(2, 2);
  x(0, 0) = INFINITY;
  CHECK_THROWS_AS(make_dataset(x, Vector::Zero(2), ZeroTeacher{}), ValidationError);
}
