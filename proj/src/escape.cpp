#include "noisegeom/escape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "noisegeom/error.hpp"
#include "noisegeom/io.hpp"
#include "noisegeom/parallel.hpp"

namespace noisegeom {

namespace {

constexpr double kInterpolationTolerance = 1e-12;
constexpr double kTinyEnergy = 1e-300;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Moments {
  double x = 0.0;
  double y = 0.0;
  double sharp = 0.0;
  double flat = 0.0;
};

Moments moments_of(const Vector& z, const Vector& lambda, Index k) {
  Moments m;
  for (Index i = 0; i < z.size(); ++i) {
    const double sq = z[i] * z[i];
    if (i < k) {
      m.x += lambda[i] * sq;
      m.sharp += sq;
    } else {
      m.y += lambda[i] * sq;
      m.flat += sq;
    }
  }
  return m;
}

Vector draw_init(const EscapeInit& init, Index dim, RngStream& rng) {
  if (init.gaussian_variance > 0.0) return std::sqrt(init.gaussian_variance) * standard_normal(dim, rng);
  if (init.fixed.size() != dim) {
    throw ValidationError("escape: w0 has length " + std::to_string(init.fixed.size()) +
                          ", expected " + std::to_string(dim));
  }
  return init.fixed;
}

void validate_options(const EscapeOptions& o, Index dim) {
  if (!(o.eta >= 0.0) || !std::isfinite(o.eta)) throw ValidationError("escape: eta must be finite and >= 0");
  if (o.steps < 0) throw ValidationError("escape: steps must be nonnegative");
  if (o.reps < 1) throw ValidationError("escape: reps must be positive");
  if (o.k < 1 || o.k >= dim) throw ValidationError("escape: need 1 <= k < dim");
  if (o.noise == EscapeNoise::gaussian_surrogate && !(o.surrogate_a >= 0.0)) {
    throw ValidationError("escape: surrogate_a must be nonnegative");
  }
}

// Per-repetition moments for t = 0..steps; shorter when the run diverged.
using RepMoments = std::vector<Moments>;

// GD or Gaussian-surrogate recursion in eigencoordinates.
RepMoments eigen_recursion(const Vector& lambda, Vector z, const EscapeOptions& o, RngStream& rng) {
  RepMoments out;
  out.reserve(static_cast<std::size_t>(o.steps + 1));
  out.push_back(moments_of(z, lambda, o.k));
  const Vector decay = Vector::Ones(lambda.size()) - o.eta * lambda;
  for (Index t = 0; t < o.steps; ++t) {
    double loss = 0.0;
    if (o.noise == EscapeNoise::gaussian_surrogate) loss = 0.5 * (out.back().x + out.back().y);
    for (Index i = 0; i < z.size(); ++i) {
      z[i] *= decay[i];
      if (o.noise == EscapeNoise::gaussian_surrogate) {
        z[i] += o.eta * std::sqrt(o.surrogate_a * loss * lambda[i]) * rng.normal();
      }
    }
    if (!z.allFinite()) break;
    out.push_back(moments_of(z, lambda, o.k));
  }
  return out;
}

EscapeTrace reduce(const std::vector<RepMoments>& reps, const Vector& lambda, const EscapeOptions& o) {
  EscapeTrace trace;
  trace.lambda = lambda;
  trace.k = o.k;
  trace.reps = o.reps;
  trace.eta = o.eta;
  trace.noise = o.noise;
  trace.seed = o.seed;
  std::size_t length = static_cast<std::size_t>(o.steps + 1);
  for (const auto& r : reps) length = std::min(length, r.size());
  trace.diverged = length < static_cast<std::size_t>(o.steps + 1);
  const double inv = 1.0 / static_cast<double>(reps.size());
  for (std::size_t t = 0; t < length; ++t) {
    Moments m;
    for (const auto& r : reps) {
      m.x += r[t].x;
      m.y += r[t].y;
      m.sharp += r[t].sharp;
      m.flat += r[t].flat;
    }
    const double x = m.x * inv;
    const double y = m.y * inv;
    trace.x.push_back(x);
    trace.y.push_back(y);
    const bool tiny = x < kTinyEnergy;
    trace.d_infinite.push_back(tiny);
    trace.d.push_back(tiny ? kInf : y / x);
    trace.p.push_back(m.sharp * inv < kTinyEnergy ? kInf : m.flat / m.sharp);
  }
  return trace;
}

RngStream rep_stream(std::uint64_t seed, Index rep) {
  return RngStream(seed, 2 + static_cast<std::uint64_t>(rep));
}

}  // namespace

SpectrumSpec SpectrumSpec::from(Vector lambda) {
  if (lambda.size() < 1) throw ValidationError("spectrum is empty");
  if (!lambda.allFinite()) throw ValidationError("spectrum has non-finite entries");
  if (lambda.minCoeff() < 0.0) throw ValidationError("spectrum has negative entries");
  for (Index i = 1; i < lambda.size(); ++i) {
    if (lambda[i] > lambda[i - 1]) throw ValidationError("spectrum must be non-increasing");
  }
  if (!(lambda[0] > 0.0)) throw ValidationError("spectrum: lambda_1 must be positive");
  return SpectrumSpec{std::move(lambda)};
}

SpectrumSpec SpectrumSpec::spike(Index d, double srk_sq) {
  if (d < 2) throw ValidationError("spike spectrum: d must be at least 2");
  if (!(srk_sq >= 1.0) || srk_sq > static_cast<double>(d)) {
    throw ValidationError("spike spectrum: srk(G^2) must lie in [1, d]");
  }
  Vector lambda = Vector::Constant(d, std::sqrt((srk_sq - 1.0) / static_cast<double>(d - 1)));
  lambda[0] = 1.0;
  return from(std::move(lambda));
}

double SpectrumSpec::fro_norm() const { return std::sqrt(head_sq(dim())); }

double SpectrumSpec::srk_sq() const { return head_sq(dim()) / (lambda[0] * lambda[0]); }

double SpectrumSpec::head_sq(Index k) const {
  CompensatedSum acc;
  for (Index i = 0; i < std::min(k, dim()); ++i) acc += lambda[i] * lambda[i];
  return acc.value();
}

double SpectrumSpec::tail_sq(Index k) const {
  CompensatedSum acc;
  for (Index i = k; i < dim(); ++i) acc += lambda[i] * lambda[i];
  return acc.value();
}

std::string to_string(EscapeNoise noise) {
  switch (noise) {
    case EscapeNoise::sgd:
      return "sgd";
    case EscapeNoise::gd:
      return "gd";
    case EscapeNoise::gaussian_surrogate:
      return "gaussian_surrogate";
  }
  return "unknown";
}

EscapeNoise parse_escape_noise(const std::string& text) {
  if (text == "sgd") return EscapeNoise::sgd;
  if (text == "gd") return EscapeNoise::gd;
  if (text == "gaussian_surrogate") return EscapeNoise::gaussian_surrogate;
  throw ValidationError("escape noise must be sgd, gd or gaussian_surrogate, got '" + text + "'");
}

EscapeInit EscapeInit::at(Vector w0) {
  EscapeInit init;
  init.fixed = std::move(w0);
  return init;
}

EscapeInit EscapeInit::gaussian(double variance) {
  if (!(variance > 0.0)) throw ValidationError("escape init variance must be positive");
  EscapeInit init;
  init.gaussian_variance = variance;
  return init;
}

double EscapeTrace::beta() const {
  CompensatedSum acc;
  for (Index i = 0; i < lambda.size(); ++i) acc += lambda[i] * lambda[i];
  return eta * std::sqrt(acc.value());
}

EscapeTrace spectrum_escape(const SpectrumSpec& spectrum, const EscapeInit& init,
                            const EscapeOptions& options) {
  validate_options(options, spectrum.dim());
  if (options.noise == EscapeNoise::sgd) {
    throw ValidationError("spectrum_escape: sgd noise needs a dataset; use gd or gaussian_surrogate");
  }
  std::vector<RepMoments> reps(static_cast<std::size_t>(options.reps));
  parallel_for(reps.size(), [&](std::size_t r) {
    RngStream rng = rep_stream(options.seed, static_cast<Index>(r));
    Vector z = draw_init(init, spectrum.dim(), rng);
    reps[r] = eigen_recursion(spectrum.lambda, std::move(z), options, rng);
  });
  return reduce(reps, spectrum.lambda, options);
}

EscapeTrace linearized_sgd_escape(const Model& model, const Dataset& data, const Params& theta_star,
                                  const EscapeInit& init, const EscapeOptions& options) {
  const SampleGeometry geom = sample_geometry(model, data, theta_star);
  const double base = loss_value(geom);
  if (!(base < kInterpolationTolerance)) {
    throw ValidationError("linearized_sgd_escape: theta* is not interpolating (L = " +
                          format_number(base) + ")");
  }
  const Index p = geom.p();
  validate_options(options, p);
  const SymMatrix fisher = fisher_matrix(geom);
  SpectralDecomposition eig = sym_eig_dense(fisher);
  clamp_psd(eig);
  const Matrix& basis = eig.eigenvectors;
  const Vector& lambda = eig.eigenvalues;
  const Index n = geom.n();

  std::vector<RepMoments> reps(static_cast<std::size_t>(options.reps));
  parallel_for(reps.size(), [&](std::size_t r) {
    RngStream rng = rep_stream(options.seed, static_cast<Index>(r));
    Vector w = draw_init(init, p, rng);
    if (options.noise != EscapeNoise::sgd) {
      reps[r] = eigen_recursion(lambda, basis.transpose() * w, options, rng);
      return;
    }
    RepMoments out;
    out.reserve(static_cast<std::size_t>(options.steps + 1));
    out.push_back(moments_of(basis.transpose() * w, lambda, options.k));
    for (Index t = 0; t < options.steps; ++t) {
      const auto i = static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
      const double u = geom.grads.row(i).dot(w);
      w -= options.eta * u * geom.grads.row(i).transpose();
      if (!w.allFinite()) break;
      out.push_back(moments_of(basis.transpose() * w, lambda, options.k));
    }
    reps[r] = std::move(out);
  });
  return reduce(reps, lambda, options);
}

double sgd_escape_lr(double beta, const SpectrumSpec& spectrum) {
  if (!(beta > 0.0)) throw ValidationError("sgd_escape_lr: beta must be positive");
  const double fro = spectrum.fro_norm();
  if (!(fro > 0.0)) throw ValidationError("sgd_escape_lr: zero spectrum");
  return beta / fro;
}

std::vector<double> gd_escape_analytic(const SpectrumSpec& spectrum, const Vector& w0, double eta,
                                       Index steps) {
  const Index d = spectrum.dim();
  if (w0.size() != d) throw ValidationError("gd_escape_analytic: w0 length mismatch");
  if (w0[0] == 0.0) throw ValidationError("gd_escape_analytic: w0 along u_1 must be nonzero");
  if (steps < 0) throw ValidationError("gd_escape_analytic: steps must be nonnegative");
  const Vector& lambda = spectrum.lambda;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(steps + 1));
  for (Index t = 0; t <= steps; ++t) {
    const double two_t = 2.0 * static_cast<double>(t);
    auto log_term = [&](Index i) {
      const double factor = std::abs(1.0 - eta * lambda[i]);
      if (lambda[i] == 0.0 || w0[i] == 0.0) return -kInf;
      if (factor == 0.0 && t > 0) return -kInf;
      const double decay = t == 0 ? 0.0 : two_t * std::log(factor);
      return std::log(lambda[i]) + decay + 2.0 * std::log(std::abs(w0[i]));
    };
    const double log_den = log_term(0);
    double peak = -kInf;
    for (Index i = 1; i < d; ++i) peak = std::max(peak, log_term(i));
    if (peak == -kInf) {
      out.push_back(0.0);
      continue;
    }
    if (log_den == -kInf) {
      out.push_back(kInf);
      continue;
    }
    CompensatedSum acc;
    for (Index i = 1; i < d; ++i) {
      const double lt = log_term(i);
      if (lt != -kInf) acc += std::exp(lt - peak);
    }
    out.push_back(std::exp(peak + std::log(acc.value()) - log_den));
  }
  return out;
}

AlignmentConstants estimate_alignment_constants(const Model& model, const Dataset& data,
                                                const Params& theta_star,
                                                const std::vector<Params>& thetas, Index k,
                                                NoiseKind noise) {
  if (thetas.empty()) throw ValidationError("estimate_alignment_constants: no theta samples");
  const SampleGeometry star = sample_geometry(model, data, theta_star);
  if (k < 1 || k > star.p()) throw ValidationError("estimate_alignment_constants: need 1 <= k <= p");
  SpectralDecomposition eig = sym_eig_dense(fisher_matrix(star));
  clamp_psd(eig);
  SpectralDecomposition top;
  top.eigenvalues = eig.eigenvalues.head(k);
  top.eigenvectors = eig.eigenvectors.leftCols(k);
  const double lambda_floor = kZeroTolerance * std::max(1.0, eig.eigenvalues[0]);

  AlignmentConstants out;
  out.a1 = kInf;
  out.a2 = -kInf;
  for (const auto& theta : thetas) {
    const SampleGeometry geom = sample_geometry(model, data, theta);
    const double loss = loss_value(geom);
    if (!(loss > kInterpolationTolerance)) {
      throw ValidationError("estimate_alignment_constants: sampled theta has L <= 1e-12");
    }
    const EigenAlignment along = alignment_along(geom, top, noise);
    for (Index i = 0; i < k; ++i) {
      if (top.eigenvalues[i] < lambda_floor) {
        ++out.skipped;
        continue;
      }
      // alpha = u^T Sigma u / (2L), so u^T Sigma u / (L lambda) = 2 alpha / lambda.
      const double ratio = 2.0 * along.alpha[i] / top.eigenvalues[i];
      out.a1 = std::min(out.a1, ratio);
      out.a2 = std::max(out.a2, ratio);
      ++out.samples;
    }
  }
  if (out.samples == 0) {
    out.a1 = 0.0;
    out.a2 = 0.0;
  }
  out.degenerate = !(out.a1 > 0.0);
  return out;
}

Theorem51Bound theorem51_bound(const SpectrumSpec& spectrum, Index k, double eta, double c2) {
  if (k < 1 || k >= spectrum.dim()) throw ValidationError("theorem51_bound: need 1 <= k < d");
  Theorem51Bound out;
  const double head = spectrum.head_sq(k);
  out.ratio = spectrum.tail_sq(k) / head;
  if (eta > 0.0) {
    out.beta = eta * spectrum.fro_norm();
    const double numer = std::log(c2 / (eta * std::sqrt(head)));
    if (out.beta > 1.0) {
      out.burn_in = std::max(1.0, numer / std::log(out.beta));
    } else {
      out.burn_in = kInf;
    }
  }
  return out;
}

void subspace_components(const Vector& delta, const Matrix& basis, double& p, double& r) {
  const double dist_sq = delta.squaredNorm();
  const Vector coords = basis.transpose() * delta;
  p = basis.cols() == 1 ? coords[0] : coords.norm();
  double r_sq = dist_sq - p * p;
  if (r_sq < 0.0) {
    if (r_sq < -1e-12 * std::max(1.0, dist_sq)) {
      throw NumericalError("subspace_components: negative radicand " + format_number(r_sq));
    }
    r_sq = 0.0;
  }
  r = std::sqrt(r_sq);
}

SubspaceTrace nonlinear_escape_track(const Model& model, const Dataset& data, const Params& theta_star,
                                     const Params& theta0, const OptimizerConfig& config, Index k,
                                     RngStream& rng) {
  const SampleGeometry star = sample_geometry(model, data, theta_star);
  if (k < 1 || k >= star.p()) throw ValidationError("nonlinear_escape_track: need 1 <= k < p");
  EigenAlignmentOptions eig_options;
  const EigenAlignment top = eigen_alignment(star, k, rng, eig_options);
  const Matrix basis = top.directions;

  Observer observer{{"p", "r", "distance_sq"}, [&](Index, const Params& theta) {
                      const Vector delta = theta - theta_star;
                      double p = 0.0;
                      double r = 0.0;
                      subspace_components(delta, basis, p, r);
                      return std::vector<double>{p, r, delta.squaredNorm()};
                    }};
  const Trajectory traj = run(model, data, theta0, config, {observer});

  SubspaceTrace out;
  out.k = k;
  out.base_loss = loss_value(star);
  out.diverged = traj.diverged;
  for (const auto& point : traj.points) {
    out.t.push_back(point.t);
    out.loss.push_back(point.loss);
    out.p.push_back(point.values[0]);
    out.r.push_back(point.values[1]);
    out.distance_sq.push_back(point.values[2]);
  }
  return out;
}

ComponentCheck component_dynamics_check(const EscapeTrace& trace, const AlignmentConstants& constants,
                                        Index t_from, Index t_to, double slack) {
  if (!(slack >= 1.0)) throw ValidationError("component_dynamics_check: slack must be >= 1");
  const SpectrumSpec spectrum{trace.lambda};
  const Index k = trace.k;
  ComponentCheck out;
  out.slack = slack;
  for (Index i = 0; i < k; ++i) {
    const double f = 1.0 - trace.eta * trace.lambda[i];
    out.alpha_k = std::max(out.alpha_k, f * f);
  }
  const double eta_sq = trace.eta * trace.eta;
  const double head = spectrum.head_sq(k);
  const double tail = spectrum.tail_sq(k);
  out.worst_y = kInf;
  const Index last = std::min(t_to, trace.length() - 1);
  for (Index t = std::max<Index>(0, t_from); t + 1 <= last; ++t) {
    const auto s = static_cast<std::size_t>(t);
    const double energy = trace.x[s] + trace.y[s];
    const double x_bound = out.alpha_k * trace.x[s] + constants.a2 * eta_sq * head * energy;
    const double y_bound = constants.a1 * eta_sq * tail * energy;
    const double x_next = trace.x[s + 1];
    const double y_next = trace.y[s + 1];
    ++out.checked;
    if (x_next > slack * x_bound) ++out.x_violations;
    if (y_next < y_bound / slack) ++out.y_violations;
    if (x_bound > 0.0) out.worst_x = std::max(out.worst_x, x_next / x_bound);
    if (y_bound > 0.0) out.worst_y = std::min(out.worst_y, y_next / y_bound);
  }
  return out;
}

std::string escape_trace_csv(const EscapeTrace& trace) {
  std::string out = "t,X,Y,D,P\n";
  for (Index t = 0; t < trace.length(); ++t) {
    const auto s = static_cast<std::size_t>(t);
    out += std::to_string(t) + ',' + format_number(trace.x[s]) + ',' + format_number(trace.y[s]) + ',' +
           format_number(trace.d[s]) + ',' + format_number(trace.p[s]) + '\n';
  }
  return out;
}

std::string escape_sidecar_json(const EscapeTrace& trace) {
  nlohmann::ordered_json j;
  j["spectrum"] = std::vector<double>(trace.lambda.data(), trace.lambda.data() + trace.lambda.size());
  j["eta"] = trace.eta;
  j["beta"] = trace.beta();
  j["k"] = trace.k;
  j["reps"] = trace.reps;
  j["noise"] = to_string(trace.noise);
  j["seed"] = trace.seed;
  std::vector<std::uint64_t> streams;
  for (Index r = 0; r < trace.reps; ++r) streams.push_back(2 + static_cast<std::uint64_t>(r));
  j["rep_stream_ids"] = streams;
  j["diverged"] = trace.diverged;
  std::vector<Index> infinite;
  for (std::size_t t = 0; t < trace.d_infinite.size(); ++t) {
    if (trace.d_infinite[t]) infinite.push_back(static_cast<Index>(t));
  }
  j["d_infinite_steps"] = infinite;
  return j.dump(2) + "\n";
}

std::string subspace_trace_csv(const SubspaceTrace& trace) {
  std::string out = "t,p,r\n";
  for (std::size_t i = 0; i < trace.t.size(); ++i) {
    out += std::to_string(trace.t[i]) + ',' + format_number(trace.p[i]) + ',' + format_number(trace.r[i]) + '\n';
  }
  return out;
}

}  // namespace noisegeom
