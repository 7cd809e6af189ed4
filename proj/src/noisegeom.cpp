#include "noisegeom/noisegeom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "noisegeom/error.hpp"

namespace noisegeom {

namespace {

constexpr double kPairwiseLimit = 1e8;
constexpr int kHutchinsonProbes = 64;
constexpr Index kGramBlock = 256;

void check_dims(const Model& model, const Dataset& data, const Params& theta) {
  if (model.input_dim() != data.d()) {
    throw ValidationError("model input dimension " + std::to_string(model.input_dim()) +
                          " does not match dataset dimension " + std::to_string(data.d()));
  }
  if (theta.size() != model.param_dim()) {
    throw ValidationError("theta has length " + std::to_string(theta.size()) + " but model expects " +
                          std::to_string(model.param_dim()));
  }
}

void check_vector(const SampleGeometry& geom, const Vector& v) {
  if (v.size() != geom.p()) {
    throw ValidationError("vector has length " + std::to_string(v.size()) + " but p is " +
                          std::to_string(geom.p()));
  }
}

void check_dense(Index p) {
  if (p > kDenseLimit) {
    throw CapacityError("p = " + std::to_string(p) + " exceeds the dense limit " +
                        std::to_string(kDenseLimit) + "; use the matrix-free operators");
  }
}

Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// (1/n) sum_i w_i q_i^2 with compensated accumulation.
double weighted_mean_square(const Vector& q, const Vector* weights) {
  CompensatedSum acc;
  for (Index i = 0; i < q.size(); ++i) {
    const double term = q[i] * q[i];
    acc += weights ? (*weights)[i] * term : term;
  }
  return acc.value() / static_cast<double>(q.size());
}

// Sigma_0 quadratic form via centered terms: (1/n) sum_i (u_i q_i - gradL.v)^2.
double sigma0_quadratic(const Vector& residuals, const Vector& q, double grad_dot_v) {
  CompensatedSum acc;
  for (Index i = 0; i < q.size(); ++i) {
    const double c = residuals[i] * q[i] - grad_dot_v;
    acc += c * c;
  }
  return acc.value() / static_cast<double>(q.size());
}

double ratio_with_convention(double num, double den, bool& by_convention) {
  by_convention = false;
  if (std::abs(num) < kZeroTolerance && std::abs(den) < kZeroTolerance) {
    by_convention = true;
    return 1.0;
  }
  return num / den;
}

}  // namespace

std::string to_string(NoiseKind kind) { return kind == NoiseKind::sigma1 ? "sigma1" : "sigma0"; }

NoiseKind parse_noise_kind(const std::string& text) {
  if (text == "sigma1") return NoiseKind::sigma1;
  if (text == "sigma0") return NoiseKind::sigma0;
  throw ValidationError("noise kind must be sigma1 or sigma0, got '" + text + "'");
}

SampleGeometry sample_geometry(const Model& model, const Dataset& data, const Params& theta) {
  check_dims(model, data, theta);
  SampleGeometry geom;
  geom.residuals = predict_batch(model, theta, data.inputs) - data.targets;
  geom.grads = per_sample_grads(model, theta, data.inputs);
  return geom;
}

double loss_value(const SampleGeometry& geom) {
  return 0.5 * weighted_mean_square(geom.residuals, nullptr);
}

Vector loss_gradient(const SampleGeometry& geom) {
  return geom.grads.transpose() * geom.residuals / static_cast<double>(geom.n());
}

LossState loss_state(const Model& model, const Dataset& data, const Params& theta) {
  SampleGeometry geom = sample_geometry(model, data, theta);
  LossState state;
  state.theta = theta;
  state.loss = loss_value(geom);
  state.grad = loss_gradient(geom);
  state.residuals = std::move(geom.residuals);
  return state;
}

SymMatrix fisher_matrix(const SampleGeometry& geom) {
  check_dense(geom.p());
  const Matrix g = geom.grads.transpose() * geom.grads / static_cast<double>(geom.n());
  return SymMatrix(symmetrized(g));
}

SymMatrix fisher_matrix(const Model& model, const Dataset& data, const Params& theta) {
  check_dims(model, data, theta);
  check_dense(model.param_dim());
  return fisher_matrix(sample_geometry(model, data, theta));
}

SymMatrix noise_covariance(const SampleGeometry& geom, NoiseKind which) {
  check_dense(geom.p());
  const double inv_n = 1.0 / static_cast<double>(geom.n());
  // Rows u_i grad f_i (the per-sample loss gradients), centered for Sigma_0.
  RowMatrix rows = geom.residuals.asDiagonal() * geom.grads;
  if (which == NoiseKind::sigma0) {
    const Vector mean = loss_gradient(geom);
    rows.rowwise() -= mean.transpose();
  }
  const Matrix s = rows.transpose() * rows * inv_n;
  return SymMatrix(symmetrized(s));
}

SymMatrix noise_covariance(const Model& model, const Dataset& data, const Params& theta,
                           NoiseKind which) {
  check_dims(model, data, theta);
  check_dense(model.param_dim());
  return noise_covariance(sample_geometry(model, data, theta), which);
}

Vector fisher_apply(const SampleGeometry& geom, const Vector& v) {
  check_vector(geom, v);
  const Vector q = geom.grads * v;
  return geom.grads.transpose() * q / static_cast<double>(geom.n());
}

Vector sigma_apply(const SampleGeometry& geom, const Vector& v, NoiseKind which) {
  check_vector(geom, v);
  const Vector q = geom.grads * v;
  const Vector weighted = geom.residuals.cwiseAbs2().cwiseProduct(q);
  Vector out = geom.grads.transpose() * weighted / static_cast<double>(geom.n());
  if (which == NoiseKind::sigma0) {
    const Vector grad = loss_gradient(geom);
    out -= grad * grad.dot(v);
  }
  return out;
}

Vector fisher_apply(const Model& model, const Dataset& data, const Params& theta, const Vector& v) {
  return fisher_apply(sample_geometry(model, data, theta), v);
}

Vector sigma1_apply(const Model& model, const Dataset& data, const Params& theta, const Vector& v) {
  return sigma_apply(sample_geometry(model, data, theta), v, NoiseKind::sigma1);
}

LinearOperator fisher_operator(const SampleGeometry& geom) {
  auto shared = std::make_shared<const SampleGeometry>(geom);
  return {geom.p(), [shared](const Vector& v) { return fisher_apply(*shared, v); }};
}

LinearOperator sigma_operator(const SampleGeometry& geom, NoiseKind which) {
  auto shared = std::make_shared<const SampleGeometry>(geom);
  return {geom.p(), [shared, which](const Vector& v) { return sigma_apply(*shared, v, which); }};
}

Vector mc_apply(const SampleGeometry& geom, const Vector& v, Index b, RngStream& rng,
                McTarget target, McSampling sampling) {
  check_vector(geom, v);
  if (b < 1) throw ValidationError("mc_apply: subsample size b must be positive");
  if (b > geom.n()) throw ValidationError("mc_apply: subsample size b exceeds n");
  if (sampling == McSampling::exhaustive && b != geom.n()) {
    throw ValidationError("mc_apply: exhaustive mode requires b == n");
  }
  if (sampling == McSampling::exhaustive) {
    return target == McTarget::fisher ? fisher_apply(geom, v)
                                      : sigma_apply(geom, v, NoiseKind::sigma1);
  }
  Vector out = Vector::Zero(geom.p());
  for (Index j = 0; j < b; ++j) {
    const auto i = static_cast<Index>(rng.index(static_cast<std::uint64_t>(geom.n())));
    double coef = geom.grads.row(i).dot(v);
    if (target == McTarget::sigma1) coef *= geom.residuals[i] * geom.residuals[i];
    out += coef * geom.grads.row(i).transpose();
  }
  return out / static_cast<double>(b);
}

Vector mc_apply(const Model& model, const Dataset& data, const Params& theta, const Vector& v,
                Index b, RngStream& rng, McTarget target, McSampling sampling) {
  return mc_apply(sample_geometry(model, data, theta), v, b, rng, target, sampling);
}

LinearOperator mc_fisher_operator(const SampleGeometry& geom, Index b, RngStream& rng) {
  if (b < 1 || b > geom.n()) throw ValidationError("mc_fisher_operator: need 1 <= b <= n");
  RowMatrix sub(b, geom.p());
  for (Index j = 0; j < b; ++j) {
    sub.row(j) = geom.grads.row(static_cast<Index>(rng.index(static_cast<std::uint64_t>(geom.n()))));
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  auto shared = std::make_shared<const RowMatrix>(std::move(sub));
  return {geom.p(), [shared, inv_b](const Vector& v) -> Vector {
            const Vector q = *shared * v;
            return shared->transpose() * q * inv_b;
          }};
}

AlignmentReport loss_alignment_mu(const SampleGeometry& geom, RngStream* probe_rng) {
  const Index n = geom.n();
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  AlignmentReport report;
  report.loss = loss_value(geom);
  double fro_sq = 0.0;
  if (nn <= kPairwiseLimit) {
    report.estimator = "pairwise";
    const Vector u2 = geom.residuals.cwiseAbs2();
    CompensatedSum gamma, fro;
    for (Index start = 0; start < n; start += kGramBlock) {
      const Index rows = std::min(kGramBlock, n - start);
      const Matrix k = geom.grads.middleRows(start, rows) * geom.grads.transpose();
      for (Index r = 0; r < rows; ++r) {
        CompensatedSum row_sq;
        for (Index j = 0; j < n; ++j) row_sq += k(r, j) * k(r, j);
        gamma += u2[start + r] * row_sq.value();
        fro += row_sq.value();
      }
    }
    report.gamma1 = gamma.value() / nn;
    fro_sq = fro.value() / nn;
  } else {
    report.estimator = "hutchinson";
    RngStream fallback(0, 0);
    RngStream& rng = probe_rng ? *probe_rng : fallback;
    CompensatedSum gamma, fro;
    for (int probe = 0; probe < kHutchinsonProbes; ++probe) {
      Vector z(geom.p());
      for (Index j = 0; j < z.size(); ++j) z[j] = (rng.next_u64() & 1u) ? 1.0 : -1.0;
      const Vector gz = fisher_apply(geom, z);
      gamma += z.dot(sigma_apply(geom, gz, NoiseKind::sigma1));
      fro += gz.squaredNorm();
    }
    report.gamma1 = gamma.value() / kHutchinsonProbes;
    fro_sq = fro.value() / kHutchinsonProbes;
  }
  report.fisher_fro_norm = std::sqrt(fro_sq);
  report.gamma1_bar = 2.0 * report.loss * fro_sq;
  if (report.gamma1_bar < kZeroTolerance && report.gamma1 >= kZeroTolerance) {
    throw NumericalError("loss_alignment_mu: gamma1 = " + std::to_string(report.gamma1) +
                         " with vanishing gamma1_bar");
  }
  report.mu = ratio_with_convention(report.gamma1, report.gamma1_bar, report.by_convention);
  return report;
}

AlignmentReport loss_alignment_mu(const Model& model, const Dataset& data, const Params& theta) {
  return loss_alignment_mu(sample_geometry(model, data, theta));
}

DirectionalReport directional_alignment_g(const SampleGeometry& geom, const Vector& v) {
  check_vector(geom, v);
  const double norm = v.norm();
  if (!(norm > 0.0)) throw ValidationError("directional_alignment_g: v must be nonzero");
  DirectionalReport report;
  report.v = v / norm;
  const Vector q = geom.grads * report.v;
  const Vector u2 = geom.residuals.cwiseAbs2();
  report.numerator = weighted_mean_square(q, &u2);
  report.denominator = 2.0 * loss_value(geom) * weighted_mean_square(q, nullptr);
  report.g = ratio_with_convention(report.numerator, report.denominator, report.by_convention);
  return report;
}

DirectionalReport directional_alignment_g(const Model& model, const Dataset& data,
                                          const Params& theta, const Vector& v) {
  return directional_alignment_g(sample_geometry(model, data, theta), v);
}

EigenAlignment alignment_along(const SampleGeometry& geom, const SpectralDecomposition& basis,
                               NoiseKind noise) {
  const Index k = basis.k();
  const double two_loss = 2.0 * loss_value(geom);
  const Vector grad = loss_gradient(geom);
  const Vector u2 = geom.residuals.cwiseAbs2();
  EigenAlignment out;
  out.lambda = basis.eigenvalues;
  out.directions = basis.eigenvectors;
  out.alpha = Vector::Zero(k);
  out.ratio = Vector::Ones(k);
  out.noise = noise;
  for (Index j = 0; j < k; ++j) {
    const Vector dir = basis.eigenvectors.col(j);
    const Vector q = geom.grads * dir;
    double quad = noise == NoiseKind::sigma1 ? weighted_mean_square(q, &u2)
                                             : sigma0_quadratic(geom.residuals, q, grad.dot(dir));
    if (quad < 0.0) {
      if (quad < -kPsdTolerance) throw NumericalError("alignment_along: negative noise energy");
      quad = 0.0;
    }
    if (two_loss < kZeroTolerance) continue;
    out.alpha[j] = quad / two_loss;
    bool unused = false;
    out.ratio[j] = ratio_with_convention(quad, two_loss * basis.eigenvalues[j], unused);
  }
  return out;
}

EigenAlignment eigen_alignment(const SampleGeometry& geom, Index k, RngStream& rng,
                               const EigenAlignmentOptions& options) {
  if (k < 1) throw ValidationError("eigen_alignment: k must be positive");
  if (k > geom.p()) throw ValidationError("eigen_alignment: k exceeds p");
  SpectralDecomposition basis;
  std::string solver;
  if (geom.p() <= options.dense_cutoff || k == geom.p()) {
    SpectralDecomposition full = sym_eig_dense(fisher_matrix(geom));
    clamp_psd(full);
    basis.eigenvalues = full.eigenvalues.head(k);
    basis.eigenvectors = full.eigenvectors.leftCols(k);
    basis.residuals.assign(static_cast<std::size_t>(k), 0.0);
    solver = "dense";
  } else {
    basis = lanczos_topk(fisher_operator(geom), k, options.max_iters, options.tol, rng);
    for (Index j = 0; j < basis.k(); ++j) basis.eigenvalues[j] = std::max(basis.eigenvalues[j], 0.0);
    solver = "lanczos";
  }
  EigenAlignment out = alignment_along(geom, basis, options.noise);
  out.solver = solver;
  return out;
}

EigenAlignment eigen_alignment(const Model& model, const Dataset& data, const Params& theta, Index k,
                               RngStream& rng, const EigenAlignmentOptions& options) {
  return eigen_alignment(sample_geometry(model, data, theta), k, rng, options);
}

OneStepLoss expected_one_step_loss(const Model& model, const Dataset& data, const Params& theta,
                                   double eta) {
  const SampleGeometry geom = sample_geometry(model, data, theta);
  const Index n = geom.n();
  const Vector grad = loss_gradient(geom);
  auto loss_at = [&](const Params& t) {
    const Vector r = predict_batch(model, t, data.inputs) - data.targets;
    return 0.5 * weighted_mean_square(r, nullptr);
  };
  CompensatedSum total;
  for (Index i = 0; i < n; ++i) {
    const Params step = theta - eta * geom.residuals[i] * geom.grads.row(i).transpose();
    total += loss_at(step);
  }
  OneStepLoss out;
  out.exact = total.value() / static_cast<double>(n);
  out.gd_part = loss_at(theta - eta * grad);
  out.noise_part = out.exact - out.gd_part;
  const double tr_sigma1_g = loss_alignment_mu(geom).gamma1;
  const double grad_g_grad = weighted_mean_square(geom.grads * grad, nullptr);
  out.quadratic_closed_form = out.gd_part + 0.5 * eta * eta * (tr_sigma1_g - grad_g_grad);
  return out;
}

PopulationGeometry population_geometry(const Model& model, const CovarianceSpec& spec,
                                       const Params& theta, const Vector& feature_star) {
  if (spec.dim() != model.input_dim()) throw ValidationError("covariance dimension mismatch");
  const Vector r = olm_feature_map(model, theta) - feature_star;
  const Matrix jac = olm_jacobian(model, theta);
  const LinearOperator s = spec.apply_operator();
  const Vector sr = s(r);
  Matrix s_jac(jac.rows(), jac.cols());
  for (Index c = 0; c < jac.cols(); ++c) s_jac.col(c) = s(jac.col(c));
  PopulationGeometry out;
  out.loss = 0.5 * r.dot(sr);
  out.grad = jac.transpose() * sr;
  out.fisher = symmetrized(jac.transpose() * s_jac);
  return out;
}

PopulationIdentity population_identity_check(const Model& model, const CovarianceSpec& spec,
                                             const Params& theta, const Params& theta_star,
                                             Index n_mc, RngStream& rng) {
  if (!model.is_olm()) {
    throw UnsupportedFamilyError("population_identity_check: " + model.family_name() +
                                 " is not an OLM");
  }
  if (n_mc < 1000) throw ValidationError("population_identity_check: n_mc must be at least 1000");
  if (theta.size() != model.param_dim() || theta_star.size() != model.param_dim()) {
    throw ValidationError("population_identity_check: theta length mismatch");
  }
  const Vector f_star = olm_feature_map(model, theta_star);
  const PopulationGeometry pop = population_geometry(model, spec, theta, f_star);
  const Vector r = olm_feature_map(model, theta) - f_star;
  const Matrix jac = olm_jacobian(model, theta);
  const LinearOperator root = spec.sqrt_operator();
  const Index d = spec.dim();

  RowMatrix x(n_mc, d);
  for (Index i = 0; i < n_mc; ++i) x.row(i) = root(standard_normal(d, rng)).transpose();
  const Vector u = x * r;
  RowMatrix rows = u.asDiagonal() * (x * jac);

  PopulationIdentity out;
  out.sigma1_mc = symmetrized(rows.transpose() * rows / static_cast<double>(n_mc));
  const Matrix outer = pop.grad * pop.grad.transpose();
  out.rhs = 2.0 * pop.loss * pop.fisher + outer;
  out.rhs_gaussian = out.rhs + outer;
  auto residual = [&](const Matrix& rhs) {
    const double denom = rhs.norm();
    const double diff = (out.sigma1_mc - rhs).norm();
    if (denom == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / denom;
  };
  out.relative_residual = residual(out.rhs);
  out.relative_residual_gaussian = residual(out.rhs_gaussian);
  return out;
}

}  // namespace noisegeom
