#include <doctest.h>

#include "noisegeom/error.hpp"
#include "noisegeom/noisegeom.hpp"
#include "oracles.hpp"

using namespace noisegeom;

namespace {

std::vector<Model> families(Index d) {
  return {Model::linear(d), Model::diag_linear_net(d), Model::deep_linear_net({d, 4, 3, 1}),
          Model::two_layer(d, 6, 0.2, false), Model::two_layer(d, 6, 0.2, true)};
}

Dataset make_random_data(const Model& model, Index n, RngStream& rng) {
  return sample_dataset(CovarianceSpec::isotropic(model.input_dim()), n, RandomLinearTeacher{}, rng);
}

// Direct sums over samples.
struct Brute {
  Matrix g;
  Matrix s1;
  Matrix s0;
  Vector grad;
  double loss = 0.0;
  std::vector<double> ell;
};

Brute brute(const Model& model, const Dataset& data, const Params& theta) {
  const Index p = model.param_dim();
  const auto n = static_cast<double>(data.n());
  Brute b{Matrix::Zero(p, p), Matrix::Zero(p, p), Matrix::Zero(p, p), Vector::Zero(p), 0.0, {}};
  for (Index i = 0; i < data.n(); ++i) {
    const Vector x = data.inputs.row(i).transpose();
    const double u = predict(model, theta, x) - data.targets[i];
    const Vector j = per_sample_grad(model, theta, x);
    b.g += j * j.transpose() / n;
    b.s1 += u * u * j * j.transpose() / n;
    b.grad += u * j / n;
    b.loss += 0.5 * u * u / n;
    b.ell.push_back(0.5 * u * u);
  }
  b.s0 = b.s1 - b.grad * b.grad.transpose();
  return b;
}

double loss_at(const Model& model, const Dataset& data, const Params& theta) {
  return loss_state(model, data, theta).loss;
}

}  // namespace

TEST_CASE("fisher and noise covariances match direct sums") {
  RngStream rng(1, 0);
  for (const Model& model : families(5)) {
    CAPTURE(model.descriptor());
    const Dataset data = make_random_data(model, 17, rng);
    const Params theta = standard_normal(model.param_dim(), rng);
    const Brute b = brute(model, data, theta);
    const double scale = b.s1.norm();
    CHECK((fisher_matrix(model, data, theta).matrix() - b.g).norm() < 1e-12 * b.g.norm());
    CHECK((noise_covariance(model, data, theta, NoiseKind::sigma1).matrix() - b.s1).norm() < 1e-12 * scale);
    CHECK((noise_covariance(model, data, theta, NoiseKind::sigma0).matrix() - b.s0).norm() < 1e-12 * scale);
    const LossState st = loss_state(model, data, theta);
    CHECK(st.loss == doctest::Approx(b.loss).epsilon(1e-13));
    CHECK((st.grad - b.grad).norm() < 1e-12 * b.grad.norm());

    const Vector v = standard_normal(model.param_dim(), rng);
    const SampleGeometry geom = sample_geometry(model, data, theta);
    CHECK((fisher_apply(geom, v) - b.g * v).norm() < 1e-12 * (b.g * v).norm());
    CHECK((sigma_apply(geom, v, NoiseKind::sigma1) - b.s1 * v).norm() < 1e-12 * (b.s1 * v).norm());
    CHECK((sigma_apply(geom, v, NoiseKind::sigma0) - b.s0 * v).norm() < 1e-11 * (b.s1 * v).norm());
    CHECK((sigma1_apply(model, data, theta, v) - b.s1 * v).norm() < 1e-12 * (b.s1 * v).norm());
  }
}

TEST_CASE("loss gradient matches finite differences of the loss") {
  RngStream rng(2, 0);
  for (const Model& model : families(4)) {
    const Dataset data = make_random_data(model, 9, rng);
    const Params theta = standard_normal(model.param_dim(), rng);
    const Vector fd = oracle::finite_gradient([&](const Vector& t) { return loss_at(model, data, t); }, theta);
    CHECK((loss_state(model, data, theta).grad - fd).norm() < 1e-6 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("loss alignment matches the trace formula") {
  RngStream rng(3, 0);
  for (const Model& model : families(6)) {
    CAPTURE(model.descriptor());
    const Dataset data = make_random_data(model, 25, rng);
    const Params theta = standard_normal(model.param_dim(), rng);
    const Brute b = brute(model, data, theta);
    const double expected = (b.s1 * b.g).trace() / (2.0 * b.loss * b.g.squaredNorm());
    const AlignmentReport r = loss_alignment_mu(model, data, theta);
    CHECK(r.mu == doctest::Approx(expected).epsilon(1e-12));
    CHECK(r.gamma1 == doctest::Approx((b.s1 * b.g).trace()).epsilon(1e-12));
    CHECK(r.fisher_fro_norm == doctest::Approx(b.g.norm()).epsilon(1e-12));
    CHECK(r.estimator == "pairwise");
    CHECK_FALSE(r.by_convention);
  }
}

TEST_CASE("hutchinson estimator on large n tracks the trace formula") {
  RngStream rng(4, 0);
  const Model model = Model::linear(4);
  const Dataset data = make_random_data(model, 10050, rng);
  const Params theta = standard_normal(4, rng);
  const Brute b = brute(model, data, theta);
  const double exact = (b.s1 * b.g).trace() / (2.0 * b.loss * b.g.squaredNorm());
  RngStream probes(4, 1);
  const AlignmentReport est = loss_alignment_mu(sample_geometry(model, data, theta), &probes);
  CHECK(est.estimator == "hutchinson");
  CHECK(std::abs(est.mu / exact - 1.0) < 0.3);
}

TEST_CASE("directional alignment matches quadratic forms") {
  RngStream rng(5, 0);
  for (const Model& model : families(5)) {
    const Dataset data = make_random_data(model, 20, rng);
    const Params theta = standard_normal(model.param_dim(), rng);
    const Brute b = brute(model, data, theta);
    Vector v = standard_normal(model.param_dim(), rng);
    const DirectionalReport r = directional_alignment_g(model, data, theta, 3.0 * v);
    v.normalize();
    const double expected = v.dot(b.s1 * v) / (2.0 * b.loss * v.dot(b.g * v));
    CHECK(r.g == doctest::Approx(expected).epsilon(1e-12));
    CHECK(r.v.norm() == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(directional_alignment_g(Model::linear(2), make_random_data(Model::linear(2), 3, rng), Params::Ones(2),
                                          Vector::Zero(2)),
                  ValidationError);
}

TEST_CASE("single sample gives exact alignment") {
  RngStream rng(6, 0);
  for (const Model& model : families(5)) {
    const Dataset data = make_random_data(model, 1, rng);
    const Params theta = standard_normal(model.param_dim(), rng);
    REQUIRE(loss_at(model, data, theta) > 0.0);
    CHECK(loss_alignment_mu(model, data, theta).mu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(directional_alignment_g(model, data, theta, standard_normal(model.param_dim(), rng)).g ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(noise_covariance(model, data, theta, NoiseKind::sigma0).matrix().isZero(0.0));
  }
}

TEST_CASE("interpolation falls back to the 0/0 convention") {
  RngStream rng(7, 0);
  for (const Model& model : families(4)) {
    const Params star = standard_normal(model.param_dim(), rng);
    const Dataset data =
        sample_dataset(CovarianceSpec::isotropic(4), 12, ModelTeacher{model, star}, rng);
    const AlignmentReport r = loss_alignment_mu(model, data, star);
    CHECK(r.mu == 1.0);
    CHECK(r.by_convention);
    const DirectionalReport g = directional_alignment_g(model, data, star, Vector::Ones(model.param_dim()));
    CHECK(g.g == 1.0);
    CHECK(g.by_convention);
    CHECK(noise_covariance(model, data, star, NoiseKind::sigma1).matrix().isZero(0.0));
    CHECK(noise_covariance(model, data, star, NoiseKind::sigma0).matrix().isZero(0.0));
    CHECK(loss_state(model, data, star).grad.isZero(0.0));
  }
}

TEST_CASE("alignment is sandwiched by per-sample loss ratios") {
  RngStream rng(8, 0);
  int violations = 0;
  for (int trial = 0; trial < 8; ++trial) {
    for (const Model& model : families(3 + trial)) {
      const Dataset data = make_random_data(model, 5 + 7 * trial, rng);
      const Params theta = standard_normal(model.param_dim(), rng);
      const Brute b = brute(model, data, theta);
      const double lo = *std::min_element(b.ell.begin(), b.ell.end()) / b.loss;
      const double hi = *std::max_element(b.ell.begin(), b.ell.end()) / b.loss;
      const double mu = loss_alignment_mu(model, data, theta).mu;
      const double g = directional_alignment_g(model, data, theta, standard_normal(model.param_dim(), rng)).g;
      for (double x : {mu, g}) violations += (x < lo - 1e-10 || x > hi + 1e-10) ? 1 : 0;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("monte-carlo products") {
  RngStream rng(9, 0);
  const Model model = Model::diag_linear_net(4);
  const Dataset data = make_random_data(model, 30, rng);
  const Params theta = standard_normal(8, rng);
  const SampleGeometry geom = sample_geometry(model, data, theta);
  const Vector v = standard_normal(8, rng);
  RngStream draw(9, 1);
  const Vector exhaustive = mc_apply(geom, v, 30, draw, McTarget::fisher, McSampling::exhaustive);
  CHECK((exhaustive - fisher_apply(geom, v)).norm() < 1e-12 * exhaustive.norm());
  const Vector s1 = mc_apply(geom, v, 30, draw, McTarget::sigma1, McSampling::exhaustive);
  CHECK((s1 - sigma_apply(geom, v, NoiseKind::sigma1)).norm() < 1e-12 * s1.norm());
  CHECK_THROWS_AS(mc_apply(geom, v, 10, draw, McTarget::fisher, McSampling::exhaustive), ValidationError);

  // Unbiased: the average over many subsamples approaches G v.
  Vector acc = Vector::Zero(8);
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) acc += mc_apply(geom, v, 3, draw);
  const Vector gv = fisher_apply(geom, v);
  CHECK((acc / reps - gv).norm() < 0.05 * gv.norm());

  const LinearOperator op = mc_fisher_operator(geom, 6, draw);
  const Vector a = standard_normal(8, rng);
  const Vector c = standard_normal(8, rng);
  CHECK(a.dot(op(c)) == doctest::Approx(c.dot(op(a))).epsilon(1e-12));
  CHECK(a.dot(op(a)) >= 0.0);
}

TEST_CASE("eigen alignment: dense and lanczos paths agree") {
  RngStream rng(10, 0);
  const Model model = Model::linear(12);
  const Dataset data = make_random_data(model, 40, rng);
  const Params theta = standard_normal(12, rng);
  RngStream s1(10, 1);
  RngStream s2(10, 1);
  EigenAlignmentOptions dense;
  EigenAlignmentOptions iterative;
  iterative.dense_cutoff = 4;
  iterative.tol = 1e-12;
  const EigenAlignment a = eigen_alignment(model, data, theta, 4, s1, dense);
  const EigenAlignment b = eigen_alignment(model, data, theta, 4, s2, iterative);
  CHECK(a.solver == "dense");
  CHECK(b.solver == "lanczos");
  const Brute br = brute(model, data, theta);
  for (Index j = 0; j < 4; ++j) {
    CHECK(a.lambda[j] == doctest::Approx(b.lambda[j]).epsilon(1e-9));
    CHECK(a.ratio[j] == doctest::Approx(b.ratio[j]).epsilon(1e-6));
    const Vector u = a.directions.col(j);
    CHECK(a.alpha[j] == doctest::Approx(u.dot(br.s0 * u) / (2.0 * br.loss)).epsilon(1e-10));
    CHECK(a.ratio[j] == doctest::Approx(a.alpha[j] / a.lambda[j]).epsilon(1e-12));
  }
}

TEST_CASE("one-step expected loss by enumeration") {
  RngStream rng(11, 0);
  for (const Model& model : families(3)) {
    const Dataset data = make_random_data(model, 8, rng);
    const Params theta = standard_normal(model.param_dim(), rng);
    const double eta = 0.05;
    const OneStepLoss r = expected_one_step_loss(model, data, theta, eta);
    double sum = 0.0;
    for (Index i = 0; i < data.n(); ++i) {
      const Vector x = data.inputs.row(i).transpose();
      const Vector gi = (predict(model, theta, x) - data.targets[i]) * per_sample_grad(model, theta, x);
      sum += loss_at(model, data, theta - eta * gi);
    }
    CHECK(r.exact == doctest::Approx(sum / 8.0).epsilon(1e-12));
    const Vector grad = loss_state(model, data, theta).grad;
    CHECK(r.gd_part == doctest::Approx(loss_at(model, data, theta - eta * grad)).epsilon(1e-12));
    CHECK(r.noise_part == doctest::Approx(r.exact - r.gd_part).epsilon(1e-9));
  }
  const Model lin = Model::linear(6);
  const Dataset data = make_random_data(lin, 20, rng);
  const Params theta = standard_normal(6, rng);
  const Brute b = brute(lin, data, theta);
  const OneStepLoss r = expected_one_step_loss(lin, data, theta, 0.3);
  CHECK(r.quadratic_closed_form ==
        doctest::Approx(r.gd_part + 0.5 * 0.09 * (b.s0 * b.g).trace()).epsilon(1e-12));
  CHECK(r.exact == doctest::Approx(r.quadratic_closed_form).epsilon(1e-10));
}

TEST_CASE("population geometry of an olm") {
  const Model model = Model::diag_linear_net(3);
  Vector lambda(3);
  lambda << 2.0, 1.0, 0.5;
  const auto spec = CovarianceSpec::diagonal(lambda);
  RngStream rng(12, 0);
  const Params theta = standard_normal(6, rng);
  const Params star = standard_normal(6, rng);
  const Vector fstar = olm_feature_map(model, star);
  const PopulationGeometry pop = population_geometry(model, spec, theta, fstar);
  const Vector r = olm_feature_map(model, theta) - fstar;
  CHECK(pop.loss == doctest::Approx(0.5 * r.dot(lambda.cwiseProduct(r))));
  const Matrix jac = olm_jacobian(model, theta);
  CHECK((pop.fisher - jac.transpose() * lambda.asDiagonal() * jac).norm() < 1e-12 * pop.fisher.norm());
  CHECK((pop.grad - jac.transpose() * lambda.cwiseProduct(r)).norm() < 1e-12 * pop.grad.norm());
}

TEST_CASE("population noise covariance under gaussian inputs") {
  RngStream rng(13, 0);
  const Model model = Model::linear(3);
  const Params theta = standard_normal(3, rng);
  const Params star = standard_normal(3, rng);
  RngStream mc(13, 1);
  const PopulationIdentity id = population_identity_check(model, CovarianceSpec::isotropic(3), theta, star, 200000, mc);
  CHECK(id.relative_residual_gaussian < 0.02);
  CHECK(id.relative_residual > 0.1);
  CHECK_THROWS_AS(population_identity_check(Model::two_layer(3, 2), CovarianceSpec::isotropic(3),
                                            Params::Zero(6), Params::Zero(6), 1000, mc),
                  UnsupportedFamilyError);
  CHECK_THROWS_AS(population_identity_check(model, CovarianceSpec::isotropic(3), theta, star, 10, mc),
                  ValidationError);
}

TEST_CASE("input validation") {
  RngStream rng(14, 0);
  const Model model = Model::linear(3);
  const Dataset data = make_random_data(model, 5, rng);
  CHECK_THROWS_AS(loss_state(model, data, Params::Zero(4)), ValidationError);
  CHECK_THROWS_AS(loss_state(Model::linear(2), data, Params::Zero(2)), ValidationError);
  CHECK(parse_noise_kind("sigma0") == NoiseKind::sigma0);
  CHECK_THROWS_AS(parse_noise_kind("sigma2"), ValidationError);
}
