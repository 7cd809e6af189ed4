#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "noisegeom/linalg.hpp"

namespace oracle {

using noisegeom::Index;
using noisegeom::Matrix;
using noisegeom::Vector;

// Number of eigenvalues of a below sigma: negative pivots of the LDL^T of a - sigma I.
inline Index count_below(const Matrix& a, double sigma) {
  Matrix m = a;
  const Index n = m.rows();
  for (Index i = 0; i < n; ++i) m(i, i) -= sigma;
  Index neg = 0;
  for (Index k = 0; k < n; ++k) {
    double pivot = m(k, k);
    if (pivot == 0.0) pivot = 1e-300;
    if (pivot < 0.0) ++neg;
    for (Index i = k + 1; i < n; ++i) {
      const double f = m(i, k) / pivot;
      for (Index j = k + 1; j < n; ++j) m(i, j) -= f * m(k, j);
    }
  }
  return neg;
}

// Eigenvalues in descending order by bisection on the inertia count.
inline std::vector<double> bisection_eigenvalues(const Matrix& a) {
  const Index n = a.rows();
  double bound = 0.0;
  for (Index i = 0; i < n; ++i) bound = std::max(bound, a.row(i).cwiseAbs().sum());
  std::vector<double> out;
  for (Index j = n - 1; j >= 0; --j) {
    double lo = -bound - 1.0;
    double hi = bound + 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (count_below(a, mid) > j) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    out.push_back(0.5 * (lo + hi));
  }
  return out;
}

// Central differences of a scalar function.
inline Vector finite_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector a = x;
    Vector b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace oracle
