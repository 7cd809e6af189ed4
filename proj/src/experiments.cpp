#include "noisegeom/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "noisegeom/error.hpp"
#include "noisegeom/parallel.hpp"

namespace noisegeom {

namespace {

std::uint64_t data_substream(Index n) { return static_cast<std::uint64_t>(n); }

Vector json_vector(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

CovarianceSpec covariance_from_blocks(const Json& blocks) {
  const auto kind = block_value<std::string>(blocks, "data", "covariance", "isotropic");
  CovarianceSpec spec = CovarianceSpec::isotropic(1);
  if (kind == "isotropic") {
    spec = CovarianceSpec::isotropic(block_value<Index>(blocks, "data", "d", 50));
  } else if (kind == "power_law") {
    spec = power_law_spec(block_value<double>(blocks, "data", "srk_target", 50.0));
  } else if (kind == "spike") {
    const Index d = block_value<Index>(blocks, "data", "d", 1000);
    const double srk = block_value<double>(blocks, "data", "srk_sq", 5.0);
    Vector lambda = SpectrumSpec::spike(d, srk).lambda;
    if (block_value<std::string>(blocks, "data", "input_scale", "none") == "inverse_d") {
      lambda /= static_cast<double>(d);
    }
    spec = CovarianceSpec::diagonal(std::move(lambda));
  } else {
    throw ValidationError("data.covariance must be isotropic, power_law or spike, got '" + kind + "'");
  }
  return spec;
}

Model model_from_blocks(const std::string& family, Index d, const Json& blocks) {
  if (family == "linear") return Model::linear(d);
  if (family == "diag_linear_net") return Model::diag_linear_net(d);
  if (family == "deep_linear_net") {
    const Index h = block_value<Index>(blocks, "model", "hidden_width", 64);
    const Index depth = block_value<Index>(blocks, "model", "depth", 4);
    if (depth < 1) throw ValidationError("model.depth must be positive");
    std::vector<Index> widths{d};
    for (Index l = 1; l < depth; ++l) widths.push_back(h);
    widths.push_back(1);
    return Model::deep_linear_net(widths);
  }
  if (family == "two_layer") {
    return Model::two_layer(d, block_value<Index>(blocks, "model", "m", 10),
                            block_value<double>(blocks, "model", "slope", 0.1),
                            block_value<bool>(blocks, "model", "train_head", false));
  }
  if (family == "clr_toy") return Model::clr_toy();
  throw ValidationError("unknown model family '" + family + "'");
}

Dataset dataset_from_blocks(const Json& blocks, const Model& model, Index n, std::uint64_t seed) {
  const CovarianceSpec spec = covariance_from_blocks(blocks);
  if (spec.dim() != model.input_dim()) throw ValidationError("model and data dimensions differ");
  RngStream rng = RngStream(seed, kDataStream).substream(data_substream(n));
  const auto teacher = block_value<std::string>(blocks, "data", "teacher", "random_linear");
  if (teacher == "zero") return sample_dataset(spec, n, ZeroTeacher{}, rng);
  if (teacher == "random_linear") return sample_dataset(spec, n, RandomLinearTeacher{}, rng);
  if (teacher == "model") {
    Params star = standard_normal(model.param_dim(), rng);
    return sample_dataset(spec, n, ModelTeacher{model, std::move(star)}, rng);
  }
  throw ValidationError("data.teacher must be zero, random_linear or model, got '" + teacher + "'");
}

std::vector<Params> sample_thetas(Index p, Index count, std::uint64_t seed, std::uint64_t substream) {
  RngStream rng = RngStream(seed, kThetaStream).substream(substream);
  std::vector<Params> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) out.push_back(standard_normal(p, rng));
  return out;
}

std::vector<Vector> sample_directions(Index p, Index count, RngStream& rng) {
  std::vector<Vector> out;
  for (Index i = 0; i < count; ++i) {
    Vector v = standard_normal(p, rng);
    out.push_back(v / v.norm());
  }
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  CompensatedSum acc;
  s.min = values.front();
  s.max = values.front();
  for (double v : values) {
    acc += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = acc.value() / static_cast<double>(values.size());
  return s;
}

AlignmentSweep loss_alignment_sweep(const Model& model, const Dataset& data, Index thetas,
                                    std::uint64_t seed, std::uint64_t substream) {
  AlignmentSweep out;
  out.family = model.family_name();
  out.n = data.n();
  out.d = data.d();
  out.p = model.param_dim();
  const auto samples = sample_thetas(out.p, thetas, seed, substream);
  out.reports.resize(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    out.reports[i] = loss_alignment_mu(model, data, samples[i]);
  });
  std::vector<double> mus;
  for (const auto& r : out.reports) mus.push_back(r.mu);
  out.mu = summarize(mus);
  return out;
}

EigenSweep eigen_sweep(Index d, Index n, Index k, Index thetas, NoiseKind noise, std::uint64_t seed) {
  const Model model = Model::linear(d);
  RngStream data_rng = RngStream(seed, kDataStream).substream(data_substream(n));
  const Dataset data = sample_dataset(CovarianceSpec::isotropic(d), n, RandomLinearTeacher{}, data_rng);
  EigenSweep out;
  out.n = n;
  out.d = d;
  out.k = k;
  const auto samples = sample_thetas(d, thetas, seed, data_substream(n));
  EigenAlignmentOptions options;
  options.noise = noise;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    RngStream solver = RngStream(seed, kThetaStream).substream(0x10000 + i);
    out.results.push_back(eigen_alignment(model, data, samples[i], k, solver, options));
  }
  return out;
}

McFidelity mc_fidelity(Index d, Index n, Index k, Index b, std::uint64_t seed) {
  const Model model = Model::linear(d);
  RngStream data_rng = RngStream(seed, kDataStream).substream(data_substream(n));
  const Dataset data = sample_dataset(CovarianceSpec::isotropic(d), n, RandomLinearTeacher{}, data_rng);
  const SampleGeometry geom = sample_geometry(model, data, Params::Zero(d));
  RngStream solver = RngStream(seed, kThetaStream).substream(0x20000);
  RngStream draw = RngStream(seed, kThetaStream).substream(0x20001);
  McFidelity out;
  out.n = n;
  out.k = k;
  out.b = b;
  out.exact = lanczos_topk(fisher_operator(geom), k, 500, 1e-8, solver).eigenvalues;
  out.monte_carlo = lanczos_topk(mc_fisher_operator(geom, b, draw), k, 500, 1e-8, solver).eigenvalues;
  for (Index i = 0; i < k; ++i) {
    out.max_relative_error =
        std::max(out.max_relative_error, std::abs(out.monte_carlo[i] - out.exact[i]) / out.exact[i]);
  }
  return out;
}

EscapeStudy escape_study(const EscapeSettings& s, std::uint64_t seed, std::uint64_t substream) {
  const SpectrumSpec nominal = SpectrumSpec::spike(s.d, s.srk_sq);
  const CovarianceSpec cov = CovarianceSpec::diagonal(nominal.lambda / static_cast<double>(s.d));
  RngStream data_rng = RngStream(seed, kDataStream).substream(substream);
  const Dataset data = sample_dataset(cov, s.n, ZeroTeacher{}, data_rng);
  const Model model = Model::linear(s.d);
  const Params star = Params::Zero(s.d);

  SpectralDecomposition eig = sym_eig_dense(fisher_matrix(model, data, star));
  clamp_psd(eig);
  EscapeStudy out;
  out.srk_sq = s.srk_sq;
  out.empirical = SpectrumSpec::from(eig.eigenvalues);
  out.eta = sgd_escape_lr(s.beta, out.empirical);
  out.gd_eta = s.gd_beta / (eig.eigenvalues[0] + eig.eigenvalues[1]);

  const EscapeInit init = EscapeInit::gaussian(std::exp(-10.0) / static_cast<double>(s.d));
  EscapeOptions options;
  options.eta = out.eta;
  options.steps = s.steps;
  options.k = s.k;
  options.reps = s.reps;
  options.noise = EscapeNoise::sgd;
  options.seed = seed;
  out.sgd = linearized_sgd_escape(model, data, star, init, options);
  options.eta = out.gd_eta;
  options.noise = EscapeNoise::gd;
  out.gd = linearized_sgd_escape(model, data, star, init, options);

  out.bound = theorem51_bound(out.empirical, s.k, out.eta, s.c2);
  out.bound.ratio = theorem51_bound(nominal, s.k).ratio;
  if (s.with_constants) {
    std::vector<Params> thetas = sample_thetas(s.d, s.alignment_thetas, seed, substream);
    out.constants = estimate_alignment_constants(model, data, star, thetas, s.alignment_k);
    const auto from = static_cast<Index>(std::ceil(out.bound.burn_in));
    out.check = component_dynamics_check(out.sgd, out.constants, from, s.steps, s.slack);
  }
  return out;
}

ClrSettings clr_settings_from_blocks(const Json& blocks, Index seeds) {
  ClrSettings s;
  s.eta_min = block_value<double>(blocks, "optimizer", "eta_min", s.eta_min);
  s.eta_max = block_value<double>(blocks, "optimizer", "eta_max", s.eta_max);
  s.period = block_value<Index>(blocks, "optimizer", "period", s.period);
  const auto wave = block_value<std::string>(blocks, "optimizer", "waveform", "triangular");
  if (wave != "triangular" && wave != "cosine") throw ValidationError("optimizer.waveform must be triangular or cosine");
  s.waveform = wave == "cosine" ? Waveform::cosine : Waveform::triangular;
  s.steps = block_value<Index>(blocks, "optimizer", "steps", s.steps);
  s.stride = block_value<Index>(blocks, "optimizer", "stride", s.stride);
  s.seeds = seeds;
  s.theta0 = Vector(2);
  s.theta0 << 0.5, 0.01;
  if (blocks.contains("model") && blocks.at("model").contains("theta0")) {
    s.theta0 = json_vector(blocks.at("model").at("theta0"));
  }
  if (blocks.contains("model") && blocks.at("model").contains("theta_star")) {
    s.theta_star = json_vector(blocks.at("model").at("theta_star"));
  }
  return s;
}

ClrStudy clr_toy_study(const ClrSettings& s, std::uint64_t seed) {
  if (s.theta0.size() != 2 || s.theta_star.size() != 2) throw ValidationError("clr toy: theta has length 2");
  if (s.seeds < 1) throw ValidationError("clr toy: need at least one seed");
  const Model model = Model::clr_toy();
  const CovarianceSpec spec = CovarianceSpec::isotropic(1);
  const Observer coords{{"w1", "w2"}, [](Index, const Params& w) { return std::vector<double>{w[0], w[1]}; }};
  ClrStudy out;
  out.sgd.resize(static_cast<std::size_t>(s.seeds));
  out.gd.resize(static_cast<std::size_t>(s.seeds));
  parallel_for(out.sgd.size(), [&](std::size_t r) {
    OptimizerConfig config;
    config.schedule = LRSchedule::cyclical(s.eta_min, s.eta_max, s.period, s.waveform);
    config.steps = s.steps;
    config.stride = s.stride;
    config.batch = 1;
    config.rng = RngStream(seed, kOptimizerStreamBase + r);
    config.method = Method::sgd;
    out.sgd[r] = run_online(model, spec, s.theta_star, s.theta0, config, {coords});
    config.method = Method::gd;
    out.gd[r] = run_online(model, spec, s.theta_star, s.theta0, config, {coords});
  });
  out.initial_w1_sq = s.theta0[0] * s.theta0[0];
  CompensatedSum sgd_acc;
  CompensatedSum gd_acc;
  for (std::size_t r = 0; r < out.sgd.size(); ++r) {
    const double a = out.sgd[r].final_theta[0];
    const double b = out.gd[r].final_theta[0];
    sgd_acc += a * a;
    gd_acc += b * b;
  }
  const auto count = static_cast<double>(out.sgd.size());
  out.sgd_mean_final_w1_sq = sgd_acc.value() / count;
  out.gd_mean_final_w1_sq = gd_acc.value() / count;
  out.sgd_growth = out.sgd_mean_final_w1_sq / out.initial_w1_sq;
  out.gd_growth = out.gd_mean_final_w1_sq / out.initial_w1_sq;
  return out;
}

NonlinearEscapeSettings nonlinear_settings_from_blocks(const Json& blocks, Index reps) {
  NonlinearEscapeSettings s;
  s.d = block_value<Index>(blocks, "data", "d", s.d);
  s.n = block_value<Index>(blocks, "data", "n", s.n);
  s.m = block_value<Index>(blocks, "model", "m", s.m);
  s.slope = block_value<double>(blocks, "model", "slope", s.slope);
  s.k = block_value<Index>(blocks, "escape", "k", s.k);
  s.gd_beta = block_value<double>(blocks, "escape", "gd_beta", s.gd_beta);
  s.steps = block_value<Index>(blocks, "escape", "steps", s.steps);
  s.init_scale = block_value<double>(blocks, "escape", "init_scale", s.init_scale);
  s.reps = reps;
  return s;
}

NonlinearEscapeStudy nonlinear_escape_study(const NonlinearEscapeSettings& s, std::uint64_t seed) {
  const Model model = Model::two_layer(s.d, s.m, s.slope, false);
  RngStream data_rng = RngStream(seed, kDataStream).substream(data_substream(s.n));
  const Params star = standard_normal(model.param_dim(), data_rng);
  const Dataset data = sample_dataset(CovarianceSpec::isotropic(s.d), s.n, ModelTeacher{model, star}, data_rng);

  SpectralDecomposition eig = sym_eig_dense(fisher_matrix(model, data, star));
  clamp_psd(eig);
  NonlinearEscapeStudy out;
  out.lambda1 = eig.eigenvalues[0];
  out.eta = s.gd_beta / out.lambda1;
  out.sgd.resize(static_cast<std::size_t>(s.reps));
  out.gd.resize(static_cast<std::size_t>(s.reps));
  parallel_for(out.sgd.size(), [&](std::size_t r) {
    RngStream init_rng = RngStream(seed, kThetaStream).substream(r);
    const Params theta0 = star + s.init_scale * standard_normal(model.param_dim(), init_rng);
    RngStream solver = RngStream(seed, kThetaStream).substream(0x30000 + r);
    OptimizerConfig config;
    config.schedule = LRSchedule::constant(out.eta);
    config.steps = s.steps;
    config.batch = 1;
    config.rng = RngStream(seed, kOptimizerStreamBase + r);
    config.method = Method::sgd;
    out.sgd[r] = nonlinear_escape_track(model, data, star, theta0, config, s.k, solver);
    config.method = Method::gd;
    out.gd[r] = nonlinear_escape_track(model, data, star, theta0, config, s.k, solver);
  });
  auto mean_abs = [](const std::vector<SubspaceTrace>& traces, bool use_p) {
    std::size_t len = traces.front().t.size();
    for (const auto& t : traces) len = std::min(len, t.t.size());
    Vector out = Vector::Zero(static_cast<Index>(len));
    for (const auto& t : traces) {
      for (std::size_t i = 0; i < len; ++i) out[static_cast<Index>(i)] += std::abs(use_p ? t.p[i] : t.r[i]);
    }
    return Vector(out / static_cast<double>(traces.size()));
  };
  out.sgd_mean_p = mean_abs(out.sgd, true);
  out.sgd_mean_r = mean_abs(out.sgd, false);
  out.gd_mean_p = mean_abs(out.gd, true);
  out.gd_mean_r = mean_abs(out.gd, false);
  const Index last_sgd = out.sgd_mean_p.size() - 1;
  const Index last_gd = out.gd_mean_p.size() - 1;
  out.sgd_ratio = out.sgd_mean_r[last_sgd] / out.sgd_mean_p[last_sgd];
  out.gd_ratio = out.gd_mean_r[last_gd] / out.gd_mean_p[last_gd];
  return out;
}

}  // namespace noisegeom
