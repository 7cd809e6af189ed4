#include "noisegeom/models.hpp"

#include <cmath>
#include <sstream>

#include "noisegeom/error.hpp"
#include "noisegeom/io.hpp"

namespace noisegeom {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_theta(const Model& model, const Params& theta) {
  if (theta.size() != model.param_dim()) {
    throw ValidationError(model.family_name() + ": theta has length " +
                          std::to_string(theta.size()) + ", expected " +
                          std::to_string(model.param_dim()));
  }
}

void check_input(const Model& model, Index size) {
  if (size != model.input_dim()) {
    throw ValidationError(model.family_name() + ": input has dimension " + std::to_string(size) +
                          ", expected " + std::to_string(model.input_dim()));
  }
}

// Matrix view of layer l (1-based) inside a deep linear theta.
using ConstRowMap = Eigen::Map<const RowMatrix>;

std::vector<ConstRowMap> layer_views(const DeepLinearNetFamily& f, const Params& theta) {
  std::vector<ConstRowMap> layers;
  Index offset = 0;
  for (std::size_t l = 1; l < f.widths.size(); ++l) {
    const Index rows = f.widths[l - 1];
    const Index cols = f.widths[l];
    layers.emplace_back(theta.data() + offset, rows, cols);
    offset += rows * cols;
  }
  return layers;
}

// s_l = W_{l+1} ... W_L as column vectors; suffix[L] = [1].
std::vector<Vector> deep_suffixes(const std::vector<ConstRowMap>& layers) {
  const std::size_t depth = layers.size();
  std::vector<Vector> suffix(depth + 1);
  suffix[depth] = Vector::Ones(1);
  for (std::size_t l = depth; l-- > 0;) suffix[l] = layers[l] * suffix[l + 1];
  return suffix;
}

double head_value(const TwoLayerFamily& f, const Params& theta, Index k) {
  return f.train_head ? theta[f.m * f.d + k] : f.head[static_cast<std::size_t>(k)];
}

double clr_scale(const Params& w) { return 1.0 / std::sqrt(w[0] * w[0] + 1.0); }

}  // namespace

Model::Model(ModelFamily family) : family_(std::move(family)) {
  std::visit(Overloaded{
                 [&](const LinearFamily& f) {
                   input_dim_ = f.d;
                   param_dim_ = f.d;
                 },
                 [&](const DiagLinearNetFamily& f) {
                   input_dim_ = f.d;
                   param_dim_ = 2 * f.d;
                 },
                 [&](const DeepLinearNetFamily& f) {
                   input_dim_ = f.widths.front();
                   param_dim_ = 0;
                   for (std::size_t l = 1; l < f.widths.size(); ++l)
                     param_dim_ += f.widths[l - 1] * f.widths[l];
                 },
                 [&](const TwoLayerFamily& f) {
                   input_dim_ = f.d;
                   param_dim_ = f.m * f.d + (f.train_head ? f.m : 0);
                 },
                 [&](const ClrToyFamily&) {
                   input_dim_ = 1;
                   param_dim_ = 2;
                 },
             },
             family_);
}

Model Model::linear(Index d) {
  if (d < 1) throw ValidationError("linear: d must be positive");
  return Model(LinearFamily{d});
}

Model Model::diag_linear_net(Index d) {
  if (d < 1) throw ValidationError("diag_linear_net: d must be positive");
  return Model(DiagLinearNetFamily{d});
}

Model Model::deep_linear_net(std::vector<Index> widths) {
  if (widths.size() < 2) throw ValidationError("deep_linear_net: need at least one layer");
  if (widths.back() != 1) throw ValidationError("deep_linear_net: last width must be 1");
  for (Index w : widths) {
    if (w < 1) throw ValidationError("deep_linear_net: widths must be positive");
  }
  return Model(DeepLinearNetFamily{std::move(widths)});
}

Model Model::two_layer(Index d, Index m, double slope, bool train_head) {
  if (m < 1) throw ValidationError("two_layer: m must be positive");
  std::vector<double> head(static_cast<std::size_t>(m));
  for (Index k = 0; k < m; ++k) head[static_cast<std::size_t>(k)] = (2 * k < m) ? 1.0 : -1.0;
  return two_layer(d, std::move(head), slope, train_head);
}

Model Model::two_layer(Index d, std::vector<double> head, double slope, bool train_head) {
  if (d < 1 || head.empty()) throw ValidationError("two_layer: d and m must be positive");
  if (slope < 0.0 || slope > 1.0) throw ValidationError("two_layer: slope must lie in [0, 1]");
  for (double a : head) {
    if (a != 1.0 && a != -1.0) throw ValidationError("two_layer: head signs must be +1 or -1");
  }
  const Index m = static_cast<Index>(head.size());
  return Model(TwoLayerFamily{d, m, std::move(head), slope, train_head});
}

Model Model::clr_toy() { return Model(ClrToyFamily{}); }

bool Model::is_olm() const {
  return !std::holds_alternative<TwoLayerFamily>(family_);
}

std::string Model::family_name() const {
  return std::visit(Overloaded{
                        [](const LinearFamily&) { return std::string("linear"); },
                        [](const DiagLinearNetFamily&) { return std::string("diag_linear_net"); },
                        [](const DeepLinearNetFamily&) { return std::string("deep_linear_net"); },
                        [](const TwoLayerFamily&) { return std::string("two_layer"); },
                        [](const ClrToyFamily&) { return std::string("clr_toy"); },
                    },
                    family_);
}

std::string Model::descriptor() const {
  std::ostringstream out;
  std::visit(Overloaded{
                 [&](const LinearFamily& f) { out << "linear(d=" << f.d << ")"; },
                 [&](const DiagLinearNetFamily& f) { out << "diag_linear_net(d=" << f.d << ")"; },
                 [&](const DeepLinearNetFamily& f) {
                   out << "deep_linear_net(widths=";
                   for (std::size_t l = 0; l < f.widths.size(); ++l)
                     out << (l ? "," : "") << f.widths[l];
                   out << ")";
                 },
                 [&](const TwoLayerFamily& f) {
                   out << "two_layer(d=" << f.d << ",m=" << f.m
                       << ",slope=" << format_number(f.slope)
                       << ",train_head=" << (f.train_head ? 1 : 0) << ",head=";
                   for (std::size_t k = 0; k < f.head.size(); ++k)
                     out << (k ? "," : "") << (f.head[k] > 0 ? "+1" : "-1");
                   out << ")";
                 },
                 [&](const ClrToyFamily&) { out << "clr_toy"; },
             },
             family_);
  return out.str();
}

Model Model::from_descriptor(const std::string& text) {
  if (text == "clr_toy") return clr_toy();
  const auto open = text.find('(');
  if (open == std::string::npos || text.back() != ')') {
    throw ValidationError("unrecognized model descriptor '" + text + "'");
  }
  const std::string name = text.substr(0, open);
  const std::string body = text.substr(open + 1, text.size() - open - 2);
  auto value_of = [&](const std::string& key) -> std::string {
    const std::string needle = key + "=";
    auto pos = body.rfind(needle, 0) == 0 ? 0 : body.find("," + needle);
    if (pos == std::string::npos) throw ValidationError("model descriptor missing '" + key + "'");
    pos += needle.size() + (pos == 0 ? 0 : 1);
    if (key == "head" || key == "widths") return body.substr(pos);
    return body.substr(pos, body.find(',', pos) - pos);
  };
  if (name == "linear") return linear(parse_integer(value_of("d")));
  if (name == "diag_linear_net") return diag_linear_net(parse_integer(value_of("d")));
  if (name == "deep_linear_net") {
    std::vector<Index> widths;
    for (const auto& w : split(value_of("widths"), ',')) widths.push_back(parse_integer(w));
    return deep_linear_net(std::move(widths));
  }
  if (name == "two_layer") {
    std::vector<double> head;
    for (const auto& a : split(value_of("head"), ',')) head.push_back(parse_number(a));
    return two_layer(parse_integer(value_of("d")), std::move(head),
                     parse_number(value_of("slope")), parse_integer(value_of("train_head")) != 0);
  }
  throw ValidationError("unrecognized model family '" + name + "'");
}

double predict(const Model& model, const Params& theta, const Vector& x) {
  check_theta(model, theta);
  check_input(model, x.size());
  return std::visit(
      Overloaded{
          [&](const LinearFamily&) { return theta.dot(x); },
          [&](const DiagLinearNetFamily& f) {
            const auto alpha = theta.head(f.d);
            const auto beta = theta.tail(f.d);
            return (alpha.cwiseProduct(alpha) - beta.cwiseProduct(beta)).dot(x);
          },
          [&](const DeepLinearNetFamily& f) {
            const auto layers = layer_views(f, theta);
            Eigen::RowVectorXd a = x.transpose();
            for (const auto& w : layers) a = a * w;
            return a[0];
          },
          [&](const TwoLayerFamily& f) {
            double out = 0.0;
            for (Index k = 0; k < f.m; ++k) {
              const double z = theta.segment(k * f.d, f.d).dot(x);
              out += head_value(f, theta, k) * leaky_relu(z, f.slope);
            }
            return out;
          },
          [&](const ClrToyFamily&) { return theta[1] * clr_scale(theta) * x[0]; },
      },
      model.family());
}

Vector per_sample_grad(const Model& model, const Params& theta, const Vector& x) {
  check_theta(model, theta);
  check_input(model, x.size());
  return std::visit(
      Overloaded{
          [&](const LinearFamily&) -> Vector { return x; },
          [&](const DiagLinearNetFamily& f) -> Vector {
            Vector g(2 * f.d);
            g.head(f.d) = 2.0 * theta.head(f.d).cwiseProduct(x);
            g.tail(f.d) = -2.0 * theta.tail(f.d).cwiseProduct(x);
            return g;
          },
          [&](const DeepLinearNetFamily& f) -> Vector {
            const auto layers = layer_views(f, theta);
            const auto suffix = deep_suffixes(layers);
            Vector g(model.param_dim());
            Eigen::RowVectorXd prefix = x.transpose();
            Index offset = 0;
            for (std::size_t l = 0; l < layers.size(); ++l) {
              const Index rows = layers[l].rows();
              const Index cols = layers[l].cols();
              Eigen::Map<RowMatrix> block(g.data() + offset, rows, cols);
              block = prefix.transpose() * suffix[l + 1].transpose();
              offset += rows * cols;
              prefix = prefix * layers[l];
            }
            return g;
          },
          [&](const TwoLayerFamily& f) -> Vector {
            Vector g(model.param_dim());
            for (Index k = 0; k < f.m; ++k) {
              const double z = theta.segment(k * f.d, f.d).dot(x);
              g.segment(k * f.d, f.d) =
                  head_value(f, theta, k) * leaky_relu_derivative(z, f.slope) * x;
              if (f.train_head) g[f.m * f.d + k] = leaky_relu(z, f.slope);
            }
            return g;
          },
          [&](const ClrToyFamily&) -> Vector {
            const double s = clr_scale(theta);
            Vector g(2);
            g[0] = -theta[1] * theta[0] * s * s * s * x[0];
            g[1] = s * x[0];
            return g;
          },
      },
      model.family());
}

Vector predict_batch(const Model& model, const Params& theta, const RowMatrix& inputs) {
  check_theta(model, theta);
  check_input(model, inputs.cols());
  const Index n = inputs.rows();
  Vector out(n);
  if (model.is_olm()) {
    // Same dot-product path for every OLM so teacher targets reproduce bit-exactly.
    const Vector feature = olm_feature_map(model, theta);
    for (Index i = 0; i < n; ++i) out[i] = inputs.row(i).dot(feature);
    return out;
  }
  for (Index i = 0; i < n; ++i) out[i] = predict(model, theta, inputs.row(i).transpose());
  return out;
}

RowMatrix per_sample_grads(const Model& model, const Params& theta, const RowMatrix& inputs) {
  check_theta(model, theta);
  check_input(model, inputs.cols());
  const Index n = inputs.rows();
  if (std::holds_alternative<LinearFamily>(model.family())) return inputs;
  if (model.is_olm()) {
    // grad f(x) = J^T x for OLMs.
    const Matrix jac = olm_jacobian(model, theta);
    return inputs * jac;
  }
  RowMatrix out(n, model.param_dim());
  for (Index i = 0; i < n; ++i) {
    out.row(i) = per_sample_grad(model, theta, inputs.row(i).transpose()).transpose();
  }
  return out;
}

Vector olm_feature_map(const Model& model, const Params& theta) {
  check_theta(model, theta);
  return std::visit(
      Overloaded{
          [&](const LinearFamily&) -> Vector { return theta; },
          [&](const DiagLinearNetFamily& f) -> Vector {
            return theta.head(f.d).cwiseProduct(theta.head(f.d)) -
                   theta.tail(f.d).cwiseProduct(theta.tail(f.d));
          },
          [&](const DeepLinearNetFamily& f) -> Vector {
            const auto layers = layer_views(f, theta);
            return deep_suffixes(layers)[0];
          },
          [&](const TwoLayerFamily&) -> Vector {
            throw UnsupportedFamilyError("olm_feature_map: two_layer is not an OLM");
          },
          [&](const ClrToyFamily&) -> Vector {
            Vector f(1);
            f[0] = theta[1] * clr_scale(theta);
            return f;
          },
      },
      model.family());
}

Matrix olm_jacobian(const Model& model, const Params& theta) {
  check_theta(model, theta);
  return std::visit(
      Overloaded{
          [&](const LinearFamily& f) -> Matrix { return Matrix::Identity(f.d, f.d); },
          [&](const DiagLinearNetFamily& f) -> Matrix {
            Matrix jac = Matrix::Zero(f.d, 2 * f.d);
            for (Index j = 0; j < f.d; ++j) {
              jac(j, j) = 2.0 * theta[j];
              jac(j, f.d + j) = -2.0 * theta[f.d + j];
            }
            return jac;
          },
          [&](const DeepLinearNetFamily& f) -> Matrix {
            const auto layers = layer_views(f, theta);
            const auto suffix = deep_suffixes(layers);
            const Index d = f.widths.front();
            Matrix jac(d, model.param_dim());
            Matrix prefix = Matrix::Identity(d, d);  // W_1 ... W_{l-1}
            Index offset = 0;
            for (std::size_t l = 0; l < layers.size(); ++l) {
              const Index rows = layers[l].rows();
              const Index cols = layers[l].cols();
              for (Index i = 0; i < rows; ++i) {
                for (Index j = 0; j < cols; ++j) {
                  jac.col(offset + i * cols + j) = prefix.col(i) * suffix[l + 1][j];
                }
              }
              offset += rows * cols;
              prefix = prefix * layers[l];
            }
            return jac;
          },
          [&](const TwoLayerFamily&) -> Matrix {
            throw UnsupportedFamilyError("olm_jacobian: two_layer is not an OLM");
          },
          [&](const ClrToyFamily&) -> Matrix {
            const double s = clr_scale(theta);
            Matrix jac(1, 2);
            jac(0, 0) = -theta[1] * theta[0] * s * s * s;
            jac(0, 1) = s;
            return jac;
          },
      },
      model.family());
}

std::string serialize_params(const Model& model, const Params& theta) {
  check_theta(model, theta);
  std::string out = model.descriptor() + "\n";
  for (Index i = 0; i < theta.size(); ++i) {
    if (i) out += ' ';
    out += format_number17(theta[i]);
  }
  out += "\n";
  return out;
}

std::pair<Model, Params> parse_params(const std::string& text) {
  const auto newline = text.find('\n');
  if (newline == std::string::npos) throw ValidationError("params: missing family header line");
  Model model = Model::from_descriptor(text.substr(0, newline));
  const auto tokens = split_whitespace(std::string_view(text).substr(newline + 1));
  if (static_cast<Index>(tokens.size()) != model.param_dim()) {
    throw ValidationError("params: expected " + std::to_string(model.param_dim()) +
                          " values, found " + std::to_string(tokens.size()));
  }
  Params theta(model.param_dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) theta[static_cast<Index>(i)] = parse_number(tokens[i]);
  if (!theta.allFinite()) throw ValidationError("params: non-finite value");
  return {std::move(model), std::move(theta)};
}

}  // namespace noisegeom
