#include <doctest.h>

#include "noisegeom/error.hpp"
#include "noisegeom/models.hpp"
#include "oracles.hpp"

using namespace noisegeom;

namespace {

std::vector<Model> all_families() {
  return {Model::linear(4),
          Model::diag_linear_net(4),
          Model::deep_linear_net({4, 3, 2, 1}),
          Model::two_layer(4, 5, 0.2, false),
          Model::two_layer(4, 5, 0.2, true),
          Model::clr_toy()};
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(Model::linear(4).param_dim() == 4);
  CHECK(Model::diag_linear_net(4).param_dim() == 8);
  CHECK(Model::deep_linear_net({4, 3, 2, 1}).param_dim() == 12 + 6 + 2);
  CHECK(Model::two_layer(4, 5, 0.2, false).param_dim() == 20);
  CHECK(Model::two_layer(4, 5, 0.2, true).param_dim() == 25);
  CHECK(Model::clr_toy().param_dim() == 2);
}

TEST_CASE("analytic gradients match central differences") {
  RngStream rng(1, 0);
  for (const Model& model : all_families()) {
    CAPTURE(model.descriptor());
    for (int trial = 0; trial < 5; ++trial) {
      const Params theta = standard_normal(model.param_dim(), rng);
      const Vector x = standard_normal(model.input_dim(), rng);
      const Vector g = per_sample_grad(model, theta, x);
      const Vector fd = oracle::finite_gradient([&](const Vector& t) { return predict(model, t, x); }, theta);
      CHECK((g - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("batch evaluation agrees with single evaluation") {
  RngStream rng(2, 0);
  for (const Model& model : all_families()) {
    const Params theta = standard_normal(model.param_dim(), rng);
    RowMatrix inputs(6, model.input_dim());
    for (Index i = 0; i < 6; ++i) inputs.row(i) = standard_normal(model.input_dim(), rng).transpose();
    const Vector f = predict_batch(model, theta, inputs);
    const RowMatrix g = per_sample_grads(model, theta, inputs);
    for (Index i = 0; i < 6; ++i) {
      const Vector x = inputs.row(i).transpose();
      CHECK(f[i] == doctest::Approx(predict(model, theta, x)).epsilon(1e-13));
      CHECK((g.row(i).transpose() - per_sample_grad(model, theta, x)).norm() < 1e-12);
    }
  }
}

TEST_CASE("olm feature maps reproduce predictions and jacobians") {
  RngStream rng(3, 0);
  for (const Model& model : all_families()) {
    if (!model.is_olm()) {
      CHECK_THROWS_AS(olm_feature_map(model, Params::Zero(model.param_dim())), UnsupportedFamilyError);
      continue;
    }
    CAPTURE(model.descriptor());
    const Params theta = standard_normal(model.param_dim(), rng);
    const Vector x = standard_normal(model.input_dim(), rng);
    const Vector feature = olm_feature_map(model, theta);
    CHECK(predict(model, theta, x) == doctest::Approx(feature.dot(x)).epsilon(1e-13));
    const Matrix jac = olm_jacobian(model, theta);
    CHECK((jac.transpose() * x - per_sample_grad(model, theta, x)).norm() < 1e-12);
  }
}

TEST_CASE("family classification") {
  CHECK(Model::linear(3).is_olm());
  CHECK(Model::diag_linear_net(3).is_olm());
  CHECK(Model::deep_linear_net({3, 2, 1}).is_olm());
  CHECK(Model::clr_toy().is_olm());
  CHECK_FALSE(Model::two_layer(3, 2).is_olm());
}

TEST_CASE("descriptor round-trip") {
  for (const Model& model : all_families()) {
    const Model back = Model::from_descriptor(model.descriptor());
    CHECK(back.descriptor() == model.descriptor());
    CHECK(back.param_dim() == model.param_dim());
  }
  CHECK_THROWS_AS(Model::from_descriptor("resnet(18)"), ValidationError);
}

TEST_CASE("parameter serialization round-trips exactly") {
  RngStream rng(4, 0);
  const Model model = Model::deep_linear_net({3, 2, 1});
  const Params theta = standard_normal(model.param_dim(), rng);
  const auto [back_model, back_theta] = parse_params(serialize_params(model, theta));
  CHECK(back_model.descriptor() == model.descriptor());
  CHECK(back_theta == theta);
}

TEST_CASE("closed-form predictions") {
  Vector x(2);
  x << 2.0, -1.0;
  Params ab(4);
  ab << 1.0, 2.0, 0.5, 1.0;  // alpha = (1, 2), beta = (0.5, 1)
  CHECK(predict(Model::diag_linear_net(2), ab, x) == doctest::Approx((1.0 - 0.25) * 2.0 - (4.0 - 1.0)));

  Params w(2);
  w << 3.0, 2.0;
  Vector one(1);
  one << 1.5;
  CHECK(predict(Model::clr_toy(), w, one) == doctest::Approx(2.0 / std::sqrt(10.0) * 1.5));

  const Model net = Model::two_layer(1, std::vector<double>{1.0, -1.0}, 0.1, false);
  Params b(2);
  b << 1.0, 2.0;
  Vector neg(1);
  neg << -1.0;
  CHECK(predict(net, b, neg) == doctest::Approx(-0.1 + 0.2));
  CHECK(leaky_relu_derivative(0.0, 0.1) == 0.1);
  CHECK(leaky_relu(-2.0, 0.1) == doctest::Approx(-0.2));
}
