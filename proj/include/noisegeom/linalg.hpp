#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "noisegeom/rng.hpp"

namespace noisegeom {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Row-major storage for sample-by-feature arrays (one sample per row).
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Largest dimension handled by dense p x p routines.
inline constexpr Index kDenseLimit = 2048;
/// Eigenvalues in [-kPsdTolerance, 0) are clamped to zero for Gram-type operators.
inline constexpr double kPsdTolerance = 1e-10;

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// Dense symmetric matrix. Construction validates symmetry and finiteness.
class SymMatrix {
 public:
  explicit SymMatrix(Matrix entries);

  Index dim() const { return entries_.rows(); }
  const Matrix& matrix() const { return entries_; }
  Vector operator*(const Vector& v) const { return entries_ * v; }

 private:
  Matrix entries_;
};

/// Matrix-free symmetric operator.
struct LinearOperator {
  Index dim = 0;
  std::function<Vector(const Vector&)> apply;

  Vector operator()(const Vector& v) const { return apply(v); }
};

LinearOperator dense_operator(const Matrix& a);
LinearOperator diagonal_operator(const Vector& diag);

/// Eigenpairs sorted by descending eigenvalue; eigenvectors are the columns.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;
  /// Max residual ||A u - lambda u|| over the returned pairs (0 for dense solves).
  std::vector<double> residuals;

  Index k() const { return eigenvalues.size(); }
  Vector eigenvector(Index j) const { return eigenvectors.col(j); }
};

/// Full eigendecomposition of a symmetric matrix of dimension <= dense_limit.
SpectralDecomposition sym_eig_dense(const SymMatrix& a, Index dense_limit = kDenseLimit);

/// Clamp eigenvalues in [-kPsdTolerance, 0) to 0; throws NumericalError below that.
void clamp_psd(SpectralDecomposition& decomposition);

/// Top-k Ritz pairs of a symmetric PSD operator by Lanczos with full
/// reorthogonalization. Every returned pair satisfies
/// ||op(u) - lambda u|| <= tol * lambda_1.
SpectralDecomposition lanczos_topk(const LinearOperator& op, Index k, Index max_iters, double tol,
                                   RngStream& rng);

/// mean + S^{1/2} z with z ~ N(0, I) drawn from rng.
Vector gaussian_vector(const Vector& mean, const LinearOperator& cov_sqrt, RngStream& rng);

Vector standard_normal(Index dim, RngStream& rng);

/// Symmetric square root of a PSD matrix via its eigendecomposition.
Matrix psd_sqrt(const SymMatrix& a);

}  // namespace noisegeom
