#include <doctest.h>

#include <json.hpp>

#include "noisegeom/error.hpp"
#include "noisegeom/escape.hpp"
#include "oracles.hpp"

using namespace noisegeom;

namespace {

struct Setup {
  Model model = Model::linear(1);
  Dataset data;
  Params star;
};

Setup zero_teacher(Index d, Index n, const Vector& lambda, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Setup s{Model::linear(d), sample_dataset(CovarianceSpec::diagonal(lambda), n, ZeroTeacher{}, rng),
          Params::Zero(d)};
  return s;
}

// P >= D lambda_k / lambda_{k+1} at every step.
int pd_violations(const EscapeTrace& trace) {
  const Index k = trace.k;
  if (trace.lambda[k] <= 0.0) return 0;
  const double factor = trace.lambda[k - 1] / trace.lambda[k];
  int bad = 0;
  for (Index t = 0; t < trace.length(); ++t) {
    const auto u = static_cast<std::size_t>(t);
    if (trace.d_infinite[u]) continue;
    if (trace.p[u] < trace.d[u] * factor * (1.0 - 1e-12)) ++bad;
  }
  return bad;
}

}  // namespace

TEST_CASE("spike spectrum hits the target srk") {
  for (double s : {1.0, 2.0, 5.0, 10.0}) {
    const SpectrumSpec spec = SpectrumSpec::spike(1000, s);
    CHECK(spec.lambda[0] == 1.0);
    CHECK(spec.srk_sq() == doctest::Approx(s).epsilon(1e-12));
    CHECK(spec.tail_sq(1) == doctest::Approx(s - 1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(SpectrumSpec::spike(10, 11.0), ValidationError);
  Vector bad(2);
  bad << 1.0, 2.0;
  CHECK_THROWS_AS(SpectrumSpec::from(bad), ValidationError);
}

TEST_CASE("theorem 5.1 bound quantities") {
  Vector lambda(3);
  lambda << 2.0, 1.0, 1.0;
  const SpectrumSpec s = SpectrumSpec::from(lambda);
  CHECK(s.fro_norm() == doctest::Approx(std::sqrt(6.0)));
  CHECK(s.head_sq(1) == 4.0);
  CHECK(s.tail_sq(1) == 2.0);
  const double eta = 1.5 / s.fro_norm();
  const Theorem51Bound b = theorem51_bound(s, 1, eta, 1.0);
  CHECK(b.ratio == doctest::Approx(0.5));
  CHECK(b.beta == doctest::Approx(1.5));
  CHECK(b.burn_in == doctest::Approx(std::max(1.0, std::log(1.0 / (eta * 2.0)) / std::log(1.5))));
  CHECK(std::isinf(theorem51_bound(s, 1, 0.5 / s.fro_norm()).burn_in));
  CHECK(sgd_escape_lr(1.2, s) == doctest::Approx(1.2 / std::sqrt(6.0)));
}

TEST_CASE("gd escape closed form") {
  Vector pair(2);
  pair << 1.0, 0.5;
  const auto d = gd_escape_analytic(SpectrumSpec::from(pair), Vector::Ones(2), 4.0, 3);
  CHECK(d[0] == doctest::Approx(0.5));
  CHECK(d[1] == doctest::Approx(1.0 / 18.0).epsilon(1e-15));
  CHECK(d[2] == doctest::Approx(1.0 / 162.0).epsilon(1e-15));
  // Large t stays finite in log space.
  const auto far = gd_escape_analytic(SpectrumSpec::from(pair), Vector::Ones(2), 4.0, 400);
  CHECK(std::isfinite(far.back()));
  CHECK(far.back() >= 0.0);
  CHECK_THROWS_AS(gd_escape_analytic(SpectrumSpec::from(pair), Vector::Unit(2, 1), 4.0, 3), ValidationError);
}

TEST_CASE("simulated gd matches the closed form") {
  Vector lambda(10);
  for (Index i = 0; i < 10; ++i) lambda[i] = 1.0 / static_cast<double>(i + 1);
  const SpectrumSpec spec = SpectrumSpec::from(lambda);
  RngStream rng(1, 0);
  const Vector w0 = standard_normal(10, rng);
  EscapeOptions o;
  o.eta = 4.0;
  o.steps = 50;
  o.reps = 1;
  o.noise = EscapeNoise::gd;
  const EscapeTrace sim = spectrum_escape(spec, EscapeInit::at(w0), o);
  const auto exact = gd_escape_analytic(spec, w0, 4.0, 50);
  REQUIRE(sim.length() == 51);
  for (Index t = 0; t <= 50; ++t) {
    const auto u = static_cast<std::size_t>(t);
    CHECK(oracle::rel(sim.d[u], exact[u]) < 1e-9);
  }
  CHECK(pd_violations(sim) == 0);
  CHECK_THROWS_AS(([&] {
                    EscapeOptions s = o;
                    s.noise = EscapeNoise::sgd;
                    spectrum_escape(spec, EscapeInit::at(w0), s);
                  }()),
                  ValidationError);
}

TEST_CASE("energy identity on the linearized model") {
  Vector lambda(6);
  lambda << 1.0, 0.3, 0.3, 0.2, 0.1, 0.05;
  const Setup s = zero_teacher(6, 40, lambda, 2);
  RngStream init(2, 1);
  const Vector w0 = standard_normal(6, init);
  EscapeOptions o;
  o.eta = 1.2;
  o.steps = 25;
  o.reps = 1;
  o.seed = 9;
  const EscapeTrace trace = linearized_sgd_escape(s.model, s.data, s.star, EscapeInit::at(w0), o);
  // Replay the same index sequence independently.
  RngStream rng(9, 2);
  Vector w = w0;
  for (Index t = 0; t < trace.length(); ++t) {
    const double two_loss = 2.0 * loss_state(s.model, s.data, w).loss;
    CHECK(oracle::rel(trace.x[static_cast<std::size_t>(t)] + trace.y[static_cast<std::size_t>(t)], two_loss) < 1e-8);
    CHECK(trace.loss(t) == doctest::Approx(two_loss / 2.0).epsilon(1e-8));
    const auto i = static_cast<Index>(rng.index(40));
    const Vector x = s.data.inputs.row(i).transpose();
    w -= o.eta * x.dot(w) * x;
  }
  CHECK(pd_violations(trace) == 0);
}

TEST_CASE("averaged traces are reproducible and satisfy the P-D inequality") {
  Vector lambda = Vector::Constant(30, 0.2);
  lambda[0] = 1.0;
  const Setup s = zero_teacher(30, 300, lambda / 30.0, 3);
  EscapeOptions o;
  o.steps = 30;
  o.reps = 12;
  o.seed = 4;
  o.eta = 1.2 / SpectrumSpec::from(sym_eig_dense(fisher_matrix(s.model, s.data, s.star)).eigenvalues.cwiseMax(0.0))
                    .fro_norm();
  const EscapeInit init = EscapeInit::gaussian(1e-4);
  const EscapeTrace a = linearized_sgd_escape(s.model, s.data, s.star, init, o);
  const EscapeTrace b = linearized_sgd_escape(s.model, s.data, s.star, init, o);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(escape_trace_csv(a) == escape_trace_csv(b));
  CHECK(pd_violations(a) == 0);
  CHECK(a.beta() == doctest::Approx(1.2));
  CHECK(a.loss(a.length() - 1) > 10.0 * a.loss(0));

  const auto side = nlohmann::json::parse(escape_sidecar_json(a));
  CHECK(side["reps"] == 12);
  CHECK(side["k"] == 1);
  CHECK(side["rep_stream_ids"].size() == 12);
  CHECK(side["rep_stream_ids"][0] == 2);

  o.noise = EscapeNoise::gaussian_surrogate;
  const EscapeTrace g = linearized_sgd_escape(s.model, s.data, s.star, init, o);
  CHECK(pd_violations(g) == 0);
}

TEST_CASE("escape needs an interpolating minimum") {
  RngStream rng(5, 0);
  const Dataset data = sample_dataset(CovarianceSpec::isotropic(3), 10, RandomLinearTeacher{}, rng);
  EscapeOptions o;
  o.eta = 0.1;
  CHECK_THROWS_AS(linearized_sgd_escape(Model::linear(3), data, Params::Zero(3), EscapeInit::at(Vector::Ones(3)), o),
                  ValidationError);
}

TEST_CASE("component check reduces to the noiseless recursion") {
  Vector lambda(4);
  lambda << 1.0, 0.5, 0.25, 0.1;
  EscapeOptions o;
  o.eta = 0.5;
  o.steps = 20;
  o.reps = 1;
  o.noise = EscapeNoise::gd;
  const EscapeTrace trace = spectrum_escape(SpectrumSpec::from(lambda), EscapeInit::at(Vector::Ones(4)), o);
  AlignmentConstants zero;
  const ComponentCheck strict = component_dynamics_check(trace, zero, 0, 20, 1.0);
  CHECK(strict.checked == 20);
  CHECK(strict.x_violations == 0);
  CHECK(strict.alpha_k == doctest::Approx(0.25));
  // X contracts by exactly (1 - eta lambda_1)^2 = alpha_k each step.
  for (Index t = 0; t < 20; ++t) {
    CHECK(trace.x[static_cast<std::size_t>(t + 1)] ==
          doctest::Approx(0.25 * trace.x[static_cast<std::size_t>(t)]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(component_dynamics_check(trace, zero, 0, 20, 0.5), ValidationError);
}

TEST_CASE("alignment constants of gaussian linear regression are near two") {
  Vector lambda = Vector::Constant(20, 0.5);
  lambda[0] = 1.0;
  const Setup s = zero_teacher(20, 4000, lambda, 6);
  RngStream rng(6, 1);
  std::vector<Params> thetas;
  for (int i = 0; i < 5; ++i) thetas.push_back(standard_normal(20, rng));
  const AlignmentConstants c = estimate_alignment_constants(s.model, s.data, s.star, thetas, 5);
  CHECK(c.samples == 25);
  CHECK(c.a1 > 1.0);
  CHECK(c.a2 < 4.0);
  CHECK(c.a1 <= c.a2);
}

TEST_CASE("subspace components satisfy pythagoras") {
  RngStream rng(7, 0);
  Matrix q = Matrix::Zero(6, 2);
  q(0, 0) = 1.0;
  q(1, 1) = 1.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector delta = standard_normal(6, rng);
    double p = 0.0;
    double r = 0.0;
    subspace_components(delta, q, p, r);
    CHECK(oracle::rel(p * p + r * r, delta.squaredNorm()) < 1e-10);
    CHECK(p >= 0.0);
  }
  double p = 0.0;
  double r = 0.0;
  Vector e = Vector::Zero(6);
  e[0] = -2.0;
  subspace_components(e, q.leftCols(1), p, r);
  CHECK(p == -2.0);
  CHECK(r == 0.0);
}

TEST_CASE("nonlinear escape trace rows satisfy pythagoras") {
  const Model model = Model::two_layer(4, 3, 0.1, false);
  RngStream rng(8, 0);
  const Params star = standard_normal(model.param_dim(), rng);
  const Dataset data = sample_dataset(CovarianceSpec::isotropic(4), 50, ModelTeacher{model, star}, rng);
  OptimizerConfig config;
  config.schedule = LRSchedule::constant(0.3);
  config.steps = 40;
  config.rng = RngStream(8, 2);
  RngStream solver(8, 3);
  const Params theta0 = star + 1e-3 * standard_normal(model.param_dim(), rng);
  const SubspaceTrace tr = nonlinear_escape_track(model, data, star, theta0, config, 3, solver);
  REQUIRE(tr.t.size() == tr.p.size());
  CHECK(tr.base_loss < 1e-20);
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    CHECK(oracle::rel(tr.p[i] * tr.p[i] + tr.r[i] * tr.r[i], tr.distance_sq[i]) < 1e-10);
  }
  const std::string csv = subspace_trace_csv(tr);
  CHECK(csv.rfind("t,p,r\n", 0) == 0);
}
