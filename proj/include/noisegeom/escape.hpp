#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "noisegeom/datagen.hpp"
#include "noisegeom/dynamics.hpp"
#include "noisegeom/linalg.hpp"
#include "noisegeom/models.hpp"
#include "noisegeom/noisegeom.hpp"

namespace noisegeom {

/// Curvature spectrum lambda_1 >= lambda_2 >= ... >= 0 with lambda_1 > 0.
struct SpectrumSpec {
  Vector lambda;

  static SpectrumSpec from(Vector lambda);
  /// (1, c, ..., c) of length d with c chosen so that sum lambda^2 / lambda_1^2 = srk_sq.
  static SpectrumSpec spike(Index d, double srk_sq);

  Index dim() const { return lambda.size(); }
  double fro_norm() const;
  /// sum lambda_i^2 / lambda_1^2.
  double srk_sq() const;
  double head_sq(Index k) const;  // sum_{i<=k} lambda_i^2
  double tail_sq(Index k) const;  // sum_{i>k} lambda_i^2
};

enum class EscapeNoise { sgd, gd, gaussian_surrogate };
std::string to_string(EscapeNoise noise);
EscapeNoise parse_escape_noise(const std::string& text);

/// Initial displacement w_0: a fixed vector, or N(0, variance I) drawn per repetition.
struct EscapeInit {
  Vector fixed;
  double gaussian_variance = 0.0;

  static EscapeInit at(Vector w0);
  static EscapeInit gaussian(double variance);
};

struct EscapeOptions {
  double eta = 0.0;
  Index steps = 50;
  Index k = 1;
  Index reps = 50;
  EscapeNoise noise = EscapeNoise::sgd;
  /// Noise energy multiplier A in the Gaussian surrogate: Var(xi_i) = A L(w) lambda_i.
  double surrogate_a = 2.0;
  std::uint64_t seed = 0;
};

struct EscapeTrace {
  Vector lambda;  // spectrum of G(theta*) the trace is measured against
  Index k = 1;
  Index reps = 0;
  double eta = 0.0;
  EscapeNoise noise = EscapeNoise::sgd;
  std::uint64_t seed = 0;
  std::vector<double> x;  // sum_{i<=k} lambda_i E[w_i^2]
  std::vector<double> y;  // sum_{i>k} lambda_i E[w_i^2]
  std::vector<double> d;  // y / x, +inf when x < 1e-300
  std::vector<double> p;  // sum_{i>k} E[w_i^2] / sum_{i<=k} E[w_i^2]
  std::vector<bool> d_infinite;
  bool diverged = false;

  Index length() const { return static_cast<Index>(x.size()); }
  double loss(Index t) const { return 0.5 * (x[static_cast<std::size_t>(t)] + y[static_cast<std::size_t>(t)]); }
  double beta() const;
};

/// Linearized SGD around an interpolating theta*: w <- w - eta (G w + xi) with xi
/// the finite-sample noise grad l_i - grad L at the current w. Second moments are
/// averaged over reps in the eigenbasis of G(theta*).
EscapeTrace linearized_sgd_escape(const Model& model, const Dataset& data, const Params& theta_star,
                                  const EscapeInit& init, const EscapeOptions& options);

/// Same recursion run directly in eigencoordinates of a given spectrum. Supports
/// gd and gaussian_surrogate noise (sgd needs a dataset).
EscapeTrace spectrum_escape(const SpectrumSpec& spectrum, const EscapeInit& init,
                            const EscapeOptions& options);

/// beta / ||G||_F.
double sgd_escape_lr(double beta, const SpectrumSpec& spectrum);

/// D_{t,1} of GD for t = 0..steps, evaluated in log space. w0 is in eigencoordinates.
std::vector<double> gd_escape_analytic(const SpectrumSpec& spectrum, const Vector& w0, double eta,
                                       Index steps);

struct AlignmentConstants {
  double a1 = 0.0;
  double a2 = 0.0;
  Index samples = 0;
  Index skipped = 0;
  bool degenerate = false;
};

/// A1, A2 as min and max of u_i^T Sigma(theta) u_i / (L(theta) lambda_i) over the
/// supplied thetas and the top-k eigen-directions of G(theta_star).
AlignmentConstants estimate_alignment_constants(const Model& model, const Dataset& data,
                                                const Params& theta_star,
                                                const std::vector<Params>& thetas, Index k,
                                                NoiseKind noise = NoiseKind::sigma0);

struct Theorem51Bound {
  double ratio = 0.0;    // sum_{i>k} lambda^2 / sum_{i<=k} lambda^2
  double beta = 0.0;     // eta ||G||_F
  double burn_in = 1.0;  // max{1, log(c2 / (eta sqrt(sum_{i<=k} lambda^2))) / log beta}
};

Theorem51Bound theorem51_bound(const SpectrumSpec& spectrum, Index k, double eta = 0.0,
                               double c2 = 1.0);

struct SubspaceTrace {
  Index k = 1;
  double base_loss = 0.0;  // L(theta*)
  std::vector<Index> t;
  std::vector<double> p;
  std::vector<double> r;
  std::vector<double> distance_sq;
  std::vector<double> loss;
  bool diverged = false;
};

/// Sharp/flat split (p, r) of theta_t - theta* against the top-k eigenbasis of G(theta*).
void subspace_components(const Vector& delta, const Matrix& basis, double& p, double& r);

SubspaceTrace nonlinear_escape_track(const Model& model, const Dataset& data, const Params& theta_star,
                                     const Params& theta0, const OptimizerConfig& config, Index k,
                                     RngStream& rng);

struct ComponentCheck {
  Index checked = 0;
  Index x_violations = 0;
  Index y_violations = 0;
  double worst_x = 0.0;  // max of X_{t+1} / bound
  double worst_y = 0.0;  // min of Y_{t+1} / bound
  double alpha_k = 0.0;
  double slack = 1.5;
  Index violations() const { return x_violations + y_violations; }
};

/// Checks X_{t+1} <= alpha_k X_t + A2 eta^2 (sum_{i<=k} lambda^2)(X_t + Y_t) and
/// Y_{t+1} >= A1 eta^2 (sum_{i>k} lambda^2)(X_t + Y_t) with multiplicative slack,
/// for every t with t_from <= t and t + 1 <= t_to.
ComponentCheck component_dynamics_check(const EscapeTrace& trace, const AlignmentConstants& constants,
                                        Index t_from, Index t_to, double slack = 1.5);

std::string escape_trace_csv(const EscapeTrace& trace);
std::string escape_sidecar_json(const EscapeTrace& trace);
std::string subspace_trace_csv(const SubspaceTrace& trace);

}  // namespace noisegeom
