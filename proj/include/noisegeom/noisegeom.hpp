#pragma once

#include <string>

#include "noisegeom/datagen.hpp"
#include "noisegeom/linalg.hpp"
#include "noisegeom/models.hpp"
#include "noisegeom/rng.hpp"

namespace noisegeom {

/// Absolute floor below which a quadratic form counts as zero (0/0 -> 1 convention).
inline constexpr double kZeroTolerance = 1e-14;

enum class NoiseKind { sigma1, sigma0 };
std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& text);

/// Residuals and per-sample model gradients at one theta. Every metric below
/// is a function of these two arrays.
struct SampleGeometry {
  Vector residuals;  // u_i = f(x_i; theta) - y_i
  RowMatrix grads;   // row i = grad f(x_i; theta)

  Index n() const { return grads.rows(); }
  Index p() const { return grads.cols(); }
};

SampleGeometry sample_geometry(const Model& model, const Dataset& data, const Params& theta);

struct LossState {
  Params theta;
  Vector residuals;
  double loss = 0.0;  // (1/2n) sum u_i^2
  Vector grad;        // (1/n) sum u_i grad f_i
};

LossState loss_state(const Model& model, const Dataset& data, const Params& theta);
double loss_value(const SampleGeometry& geom);
Vector loss_gradient(const SampleGeometry& geom);

/// G = (1/n) sum grad f_i grad f_i^T. Requires p <= kDenseLimit.
SymMatrix fisher_matrix(const Model& model, const Dataset& data, const Params& theta);
SymMatrix fisher_matrix(const SampleGeometry& geom);
/// Sigma_1 = (1/n) sum u_i^2 grad f_i grad f_i^T, Sigma_0 = Sigma_1 - grad L grad L^T.
SymMatrix noise_covariance(const Model& model, const Dataset& data, const Params& theta,
                           NoiseKind which);
SymMatrix noise_covariance(const SampleGeometry& geom, NoiseKind which);

/// Matrix-free G v and Sigma_1 v in O(n p).
Vector fisher_apply(const Model& model, const Dataset& data, const Params& theta, const Vector& v);
Vector sigma1_apply(const Model& model, const Dataset& data, const Params& theta, const Vector& v);
Vector fisher_apply(const SampleGeometry& geom, const Vector& v);
Vector sigma_apply(const SampleGeometry& geom, const Vector& v, NoiseKind which);

LinearOperator fisher_operator(const SampleGeometry& geom);
LinearOperator sigma_operator(const SampleGeometry& geom, NoiseKind which);

enum class McTarget { fisher, sigma1 };
enum class McSampling { with_replacement, exhaustive };

/// Monte-Carlo estimate (1/b) sum_j T_{i_j} v of G v (or Sigma_1 v) over b
/// indices drawn uniformly with replacement. Exhaustive mode uses every
/// sample exactly once (requires b == n) and reproduces fisher_apply.
Vector mc_apply(const SampleGeometry& geom, const Vector& v, Index b, RngStream& rng,
                McTarget target = McTarget::fisher,
                McSampling sampling = McSampling::with_replacement);
Vector mc_apply(const Model& model, const Dataset& data, const Params& theta, const Vector& v,
                Index b, RngStream& rng, McTarget target = McTarget::fisher,
                McSampling sampling = McSampling::with_replacement);

/// Symmetric operator over one frozen subsample of b indices (drawn once from rng).
/// This is the form Lanczos needs: the same draw serves every matrix-vector product.
LinearOperator mc_fisher_operator(const SampleGeometry& geom, Index b, RngStream& rng);

struct AlignmentReport {
  double mu = 1.0;
  double gamma1 = 0.0;      // tr(Sigma_1 G)
  double gamma1_bar = 0.0;  // 2 L ||G||_F^2
  double loss = 0.0;
  double fisher_fro_norm = 0.0;
  bool by_convention = false;  // mu set to 1 by the 0/0 rule
  std::string estimator;       // "pairwise" or "hutchinson"
};

/// mu = tr(Sigma_1 G) / (2 L ||G||_F^2) via pairwise gradient inner products.
AlignmentReport loss_alignment_mu(const Model& model, const Dataset& data, const Params& theta);
AlignmentReport loss_alignment_mu(const SampleGeometry& geom, RngStream* probe_rng = nullptr);

struct DirectionalReport {
  Vector v;  // normalized
  double g = 1.0;
  double numerator = 0.0;    // v^T Sigma_1 v
  double denominator = 0.0;  // 2 L v^T G v
  bool by_convention = false;
};

DirectionalReport directional_alignment_g(const Model& model, const Dataset& data,
                                          const Params& theta, const Vector& v);
DirectionalReport directional_alignment_g(const SampleGeometry& geom, const Vector& v);

struct EigenAlignment {
  Vector lambda;  // top-k eigenvalues of G, descending
  Vector alpha;   // u_k^T Sigma u_k / (2L)
  Vector ratio;   // alpha_k / lambda_k, 1 under the 0/0 convention
  Matrix directions;
  NoiseKind noise = NoiseKind::sigma0;
  std::string solver;  // "dense" or "lanczos"
};

struct EigenAlignmentOptions {
  NoiseKind noise = NoiseKind::sigma0;
  /// Dense solve when p is at most this; Lanczos otherwise.
  Index dense_cutoff = 256;
  Index max_iters = 500;
  double tol = 1e-8;
};

EigenAlignment eigen_alignment(const Model& model, const Dataset& data, const Params& theta, Index k,
                               RngStream& rng, const EigenAlignmentOptions& options = {});
EigenAlignment eigen_alignment(const SampleGeometry& geom, Index k, RngStream& rng,
                               const EigenAlignmentOptions& options = {});

/// Alpha/ratio along given unit directions with their curvatures.
EigenAlignment alignment_along(const SampleGeometry& geom, const SpectralDecomposition& basis,
                               NoiseKind noise);

struct OneStepLoss {
  double exact = 0.0;       // (1/n) sum_i L(theta - eta grad l_i)
  double gd_part = 0.0;     // L(theta - eta grad L)
  double noise_part = 0.0;  // exact - gd_part
  /// L(theta - eta grad L) + (eta^2/2) tr(Sigma_0 G); exact for quadratic losses.
  double quadratic_closed_form = 0.0;
};

OneStepLoss expected_one_step_loss(const Model& model, const Dataset& data, const Params& theta,
                                   double eta);

struct PopulationIdentity {
  /// ||Sigma1_mc - rhs||_F / ||rhs||_F with rhs = 2 L_bar G_bar + grad L_bar grad L_bar^T.
  double relative_residual = 0.0;
  /// Same against the Gaussian fourth-moment form 2 L_bar G_bar + 2 grad L_bar grad L_bar^T.
  double relative_residual_gaussian = 0.0;
  Matrix sigma1_mc;
  Matrix rhs;
  Matrix rhs_gaussian;
};

/// Monte-Carlo estimate of the population Sigma_1 of an OLM under N(0, S) inputs with
/// teacher parameters theta_star, compared against the closed forms above.
PopulationIdentity population_identity_check(const Model& model, const CovarianceSpec& spec,
                                             const Params& theta, const Params& theta_star,
                                             Index n_mc, RngStream& rng);

/// Population quantities of an OLM under N(0, S): L_bar, grad L_bar, G_bar.
struct PopulationGeometry {
  double loss = 0.0;
  Vector grad;
  Matrix fisher;
};
PopulationGeometry population_geometry(const Model& model, const CovarianceSpec& spec,
                                       const Params& theta, const Vector& feature_star);

}  // namespace noisegeom
