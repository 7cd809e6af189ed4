#pragma once

#include <string>
#include <variant>
#include <vector>

#include "noisegeom/linalg.hpp"

namespace noisegeom {

/// Flat parameter vector theta. Layout is defined per family (see Model).
using Params = Vector;

/// f(x; w) = w^T x.
struct LinearFamily {
  Index d = 0;
};

/// f(x; alpha, beta) = sum_j (alpha_j^2 - beta_j^2) x_j. theta = (alpha, beta).
struct DiagLinearNetFamily {
  Index d = 0;
};

/// f(x) = x^T W_1 W_2 ... W_L with W_l of shape widths[l-1] x widths[l].
/// widths.front() is the input dimension and widths.back() is 1.
/// theta stores W_1, ..., W_L consecutively, each row-major.
struct DeepLinearNetFamily {
  std::vector<Index> widths;
};

/// f(x) = sum_k a_k phi(b_k^T x) with Leaky-ReLU phi(z) = max(slope z, z).
/// theta = (b_1, ..., b_m) and, when train_head is set, (a_1, ..., a_m) appended.
struct TwoLayerFamily {
  Index d = 0;
  Index m = 0;
  std::vector<double> head;  // a_k in {+1, -1}; initial values when train_head
  double slope = 0.1;
  bool train_head = false;
};

/// f(x; w) = (w_2 / sqrt(w_1^2 + 1)) x on scalar inputs.
struct ClrToyFamily {};

using ModelFamily =
    std::variant<LinearFamily, DiagLinearNetFamily, DeepLinearNetFamily, TwoLayerFamily, ClrToyFamily>;

/// A differentiable scalar-output predictor. Immutable value type.
class Model {
 public:
  static Model linear(Index d);
  static Model diag_linear_net(Index d);
  /// Widths (d, hidden..., 1).
  static Model deep_linear_net(std::vector<Index> widths);
  /// Balanced head signs: first half +1, second half -1.
  static Model two_layer(Index d, Index m, double slope = 0.1, bool train_head = false);
  static Model two_layer(Index d, std::vector<double> head, double slope, bool train_head);
  static Model clr_toy();

  const ModelFamily& family() const { return family_; }
  Index input_dim() const { return input_dim_; }
  Index param_dim() const { return param_dim_; }
  bool is_olm() const;
  std::string family_name() const;
  /// Single-token description, e.g. "deep_linear_net(widths=50,64,1)".
  std::string descriptor() const;
  /// Inverse of descriptor().
  static Model from_descriptor(const std::string& text);

 private:
  explicit Model(ModelFamily family);

  ModelFamily family_;
  Index input_dim_ = 0;
  Index param_dim_ = 0;
};

double predict(const Model& model, const Params& theta, const Vector& x);
/// Exact gradient of predict with respect to theta.
Vector per_sample_grad(const Model& model, const Params& theta, const Vector& x);

/// Predictions for every row of inputs.
Vector predict_batch(const Model& model, const Params& theta, const RowMatrix& inputs);

/// Per-sample gradients, one row per input row (n x p).
RowMatrix per_sample_grads(const Model& model, const Params& theta, const RowMatrix& inputs);

/// F(theta) with predict = F(theta)^T x. OLM families only.
Vector olm_feature_map(const Model& model, const Params& theta);
/// dF/dtheta, shape d x p. OLM families only.
Matrix olm_jacobian(const Model& model, const Params& theta);

/// Leaky-ReLU derivative used by the two-layer family; phi'(0) is the slope.
inline double leaky_relu_derivative(double z, double slope) { return z > 0.0 ? 1.0 : slope; }
inline double leaky_relu(double z, double slope) { return z > 0.0 ? z : slope * z; }

/// Writes "<descriptor>\n<theta values>\n".
std::string serialize_params(const Model& model, const Params& theta);
/// Parses the format written by serialize_params.
std::pair<Model, Params> parse_params(const std::string& text);

}  // namespace noisegeom
