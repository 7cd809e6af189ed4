#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "noisegeom/config.hpp"
#include "noisegeom/datagen.hpp"
#include "noisegeom/dynamics.hpp"
#include "noisegeom/escape.hpp"
#include "noisegeom/models.hpp"
#include "noisegeom/noisegeom.hpp"

namespace noisegeom {

/// Input covariance described by a data block (isotropic, power_law, spike).
CovarianceSpec covariance_from_blocks(const Json& blocks);
/// Model of the named family built from a model block for input dimension d.
Model model_from_blocks(const std::string& family, Index d, const Json& blocks);
/// Dataset from the data block; stream kDataStream of the master seed.
Dataset dataset_from_blocks(const Json& blocks, const Model& model, Index n, std::uint64_t seed);

/// count draws of theta ~ N(0, I_p) from one substream of the theta stream.
std::vector<Params> sample_thetas(Index p, Index count, std::uint64_t seed, std::uint64_t substream = 0);
/// count unit vectors uniformly on the sphere in R^p.
std::vector<Vector> sample_directions(Index p, Index count, RngStream& rng);

struct Summary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};
Summary summarize(const std::vector<double>& values);

struct AlignmentSweep {
  std::string family;
  Index n = 0;
  Index d = 0;
  Index p = 0;
  std::vector<AlignmentReport> reports;
  Summary mu;
};

/// mu at thetas ~ N(0, I_p) drawn from substream `substream` of the theta stream.
AlignmentSweep loss_alignment_sweep(const Model& model, const Dataset& data, Index thetas,
                                    std::uint64_t seed, std::uint64_t substream = 0);

struct EigenSweep {
  Index n = 0;
  Index d = 0;
  Index k = 0;
  std::vector<EigenAlignment> results;  // one per theta
};

/// Linear model on isotropic Gaussian inputs with a random linear teacher.
EigenSweep eigen_sweep(Index d, Index n, Index k, Index thetas, NoiseKind noise, std::uint64_t seed);

struct McFidelity {
  Index n = 0;
  Index k = 0;
  Index b = 0;
  Vector exact;
  Vector monte_carlo;
  double max_relative_error = 0.0;
};

/// Top-k Lanczos eigenvalues of G against Lanczos on a b-sample Monte-Carlo operator.
McFidelity mc_fidelity(Index d, Index n, Index k, Index b, std::uint64_t seed);

struct EscapeStudy {
  double srk_sq = 0.0;
  double eta = 0.0;
  double gd_eta = 0.0;
  SpectrumSpec empirical;
  EscapeTrace sgd;
  EscapeTrace gd;
  Theorem51Bound bound;  // on the nominal spectrum
  AlignmentConstants constants;
  ComponentCheck check;
};

struct EscapeSettings {
  Index d = 1000;
  Index n = 10000;
  double srk_sq = 5.0;
  double beta = 1.2;
  double gd_beta = 4.0;
  Index k = 1;
  Index steps = 50;
  Index reps = 50;
  double c2 = 1.0;
  double slack = 1.5;
  Index alignment_thetas = 10;
  Index alignment_k = 10;
  bool with_constants = true;
};

/// Linear regression with w* = 0 on N(0, diag(lambda)/d) inputs, lambda = (1, c, ..., c).
EscapeStudy escape_study(const EscapeSettings& settings, std::uint64_t seed, std::uint64_t substream = 0);

struct ClrSettings {
  double eta_min = 0.01;
  double eta_max = 7.5;
  Index period = 200;
  Waveform waveform = Waveform::triangular;
  Index steps = 2000;
  Index stride = 10;
  Index seeds = 20;
  Vector theta0 = Vector::Zero(2);
  Vector theta_star = Vector::Zero(2);
};

struct ClrStudy {
  std::vector<Trajectory> sgd;  // columns t, loss, lr, w1, w2
  std::vector<Trajectory> gd;
  double initial_w1_sq = 0.0;
  double sgd_mean_final_w1_sq = 0.0;
  double gd_mean_final_w1_sq = 0.0;
  double sgd_growth = 0.0;  // mean final w1^2 / initial w1^2
  double gd_growth = 0.0;
};

ClrSettings clr_settings_from_blocks(const Json& blocks, Index seeds);
ClrStudy clr_toy_study(const ClrSettings& settings, std::uint64_t seed);

struct NonlinearEscapeSettings {
  Index d = 20;
  Index m = 10;
  Index n = 200;
  double slope = 0.1;
  Index k = 5;
  double gd_beta = 2.2;
  Index steps = 20;
  double init_scale = 1e-3;
  Index reps = 50;
};

struct NonlinearEscapeStudy {
  double eta = 0.0;
  double lambda1 = 0.0;
  std::vector<SubspaceTrace> sgd;
  std::vector<SubspaceTrace> gd;
  Vector sgd_mean_p;  // mean |p| per recorded step
  Vector sgd_mean_r;
  Vector gd_mean_p;
  Vector gd_mean_r;
  double sgd_ratio = 0.0;  // mean r / mean |p| at the final step
  double gd_ratio = 0.0;
};

NonlinearEscapeSettings nonlinear_settings_from_blocks(const Json& blocks, Index reps);
NonlinearEscapeStudy nonlinear_escape_study(const NonlinearEscapeSettings& settings, std::uint64_t seed);

}  // namespace noisegeom
