#include "noisegeom/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "noisegeom/error.hpp"

namespace noisegeom {

SymMatrix::SymMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols()) {
    throw ValidationError("SymMatrix: matrix is " + std::to_string(entries_.rows()) + "x" +
                          std::to_string(entries_.cols()));
  }
  if (entries_.rows() == 0) throw ValidationError("SymMatrix: empty matrix");
  if (!entries_.allFinite()) throw ValidationError("SymMatrix: non-finite entry");
  const double scale = entries_.cwiseAbs().maxCoeff();
  const double asym = (entries_ - entries_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw ValidationError("SymMatrix: asymmetry " + std::to_string(asym) + " exceeds tolerance");
  }
}

LinearOperator dense_operator(const Matrix& a) {
  return {a.rows(), [a](const Vector& v) -> Vector { return a * v; }};
}

LinearOperator diagonal_operator(const Vector& diag) {
  return {diag.size(), [diag](const Vector& v) -> Vector { return diag.cwiseProduct(v); }};
}

SpectralDecomposition sym_eig_dense(const SymMatrix& a, Index dense_limit) {
  if (a.dim() > dense_limit) {
    throw CapacityError("sym_eig_dense: dimension " + std::to_string(a.dim()) +
                        " exceeds dense limit " + std::to_string(dense_limit));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix());
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eig_dense: QR iteration failed");
  // Eigen returns ascending order.
  SpectralDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  out.residuals.assign(static_cast<std::size_t>(a.dim()), 0.0);
  return out;
}

void clamp_psd(SpectralDecomposition& decomposition) {
  for (Index i = 0; i < decomposition.eigenvalues.size(); ++i) {
    double& lambda = decomposition.eigenvalues[i];
    if (lambda < -kPsdTolerance) {
      throw NumericalError("clamp_psd: eigenvalue " + std::to_string(lambda) +
                           " is below the PSD tolerance");
    }
    if (lambda < 0.0) lambda = 0.0;
  }
}

Vector standard_normal(Index dim, RngStream& rng) {
  Vector z(dim);
  for (Index i = 0; i < dim; ++i) z[i] = rng.normal();
  return z;
}

namespace {

// Removes the components of w along the first m columns of q (two passes).
void reorthogonalize(const Matrix& q, Index m, Vector& w) {
  for (int pass = 0; pass < 2; ++pass) {
    const Vector coeffs = q.leftCols(m).transpose() * w;
    w.noalias() -= q.leftCols(m) * coeffs;
  }
}

struct RitzSolve {
  Vector values;   // descending
  Matrix vectors;  // columns, matching values
};

RitzSolve solve_tridiagonal(const std::vector<double>& alpha, const std::vector<double>& beta,
                            Index m) {
  Vector diag(m);
  Vector sub(std::max<Index>(m - 1, 0));
  for (Index i = 0; i < m; ++i) diag[i] = alpha[i];
  for (Index i = 0; i + 1 < m; ++i) sub[i] = beta[i];
  RitzSolve out;
  if (m == 1) {
    out.values = diag;
    out.vectors = Matrix::Ones(1, 1);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

}  // namespace

SpectralDecomposition lanczos_topk(const LinearOperator& op, Index k, Index max_iters, double tol,
                                   RngStream& rng) {
  const Index n = op.dim;
  if (k < 1 || k >= n) {
    throw ValidationError("lanczos_topk: need 1 <= k < dim, got k=" + std::to_string(k) +
                          " dim=" + std::to_string(n));
  }
  if (max_iters < k) throw ValidationError("lanczos_topk: max_iters must be >= k");
  const Index m_max = std::min(max_iters, n);

  Matrix basis(n, m_max);
  std::vector<double> alpha(static_cast<std::size_t>(m_max), 0.0);
  std::vector<double> beta(static_cast<std::size_t>(m_max), 0.0);
  std::vector<double> best_residuals(static_cast<std::size_t>(k),
                                     std::numeric_limits<double>::infinity());

  Vector q = standard_normal(n, rng);
  q.normalize();

  for (Index j = 0; j < m_max; ++j) {
    basis.col(j) = q;
    Vector w = op(q);
    if (w.size() != n) throw ValidationError("lanczos_topk: operator returned wrong dimension");
    const double a = q.dot(w);
    alpha[j] = a;
    w -= a * q;
    if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
    const Index m = j + 1;
    reorthogonalize(basis, m, w);
    const double b = w.norm();

    if (m >= k) {
      const RitzSolve ritz = solve_tridiagonal(alpha, beta, m);
      const double scale = std::max(std::abs(ritz.values[0]), 0.0);
      const double threshold = scale > 0.0 ? tol * scale : tol;
      bool estimates_ok = true;
      for (Index i = 0; i < k; ++i) {
        if (std::abs(b * ritz.vectors(m - 1, i)) > 0.5 * threshold) estimates_ok = false;
      }
      if (estimates_ok || m == n || m == m_max) {
        SpectralDecomposition out;
        out.eigenvalues = ritz.values.head(k);
        out.eigenvectors = basis.leftCols(m) * ritz.vectors.leftCols(k);
        out.residuals.resize(static_cast<std::size_t>(k));
        bool converged = true;
        for (Index i = 0; i < k; ++i) {
          out.eigenvectors.col(i).normalize();
          const Vector u = out.eigenvectors.col(i);
          const double r = (op(u) - out.eigenvalues[i] * u).norm();
          out.residuals[static_cast<std::size_t>(i)] = r;
          best_residuals[static_cast<std::size_t>(i)] =
              std::min(best_residuals[static_cast<std::size_t>(i)], r);
          if (r > threshold) converged = false;
        }
        if (converged) return out;
      }
    }

    if (m == m_max) break;
    // Invariant subspace found: continue from a fresh direction orthogonal to the basis.
    if (b <= 1e-12 * std::max(std::abs(a), 1.0) || b == 0.0) {
      Vector r = standard_normal(n, rng);
      reorthogonalize(basis, m, r);
      const double rn = r.norm();
      if (rn < 1e-10) break;
      q = r / rn;
      beta[j] = 0.0;
    } else {
      q = w / b;
      beta[j] = b;
    }
  }
  throw ConvergenceError("lanczos_topk: no convergence within " + std::to_string(m_max) +
                             " iterations",
                         best_residuals);
}

Vector gaussian_vector(const Vector& mean, const LinearOperator& cov_sqrt, RngStream& rng) {
  if (mean.size() != cov_sqrt.dim) {
    throw ValidationError("gaussian_vector: mean has dimension " + std::to_string(mean.size()) +
                          " but covariance root has " + std::to_string(cov_sqrt.dim));
  }
  const Vector z = standard_normal(cov_sqrt.dim, rng);
  return mean + cov_sqrt(z);
}

Matrix psd_sqrt(const SymMatrix& a) {
  SpectralDecomposition eig = sym_eig_dense(a);
  clamp_psd(eig);
  const Vector roots = eig.eigenvalues.cwiseSqrt();
  return eig.eigenvectors * roots.asDiagonal() * eig.eigenvectors.transpose();
}

}  // namespace noisegeom
