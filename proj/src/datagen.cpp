#include "noisegeom/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "noisegeom/error.hpp"
#include "noisegeom/io.hpp"

namespace noisegeom {

namespace {

void validate_spectrum(const Vector& spectrum) {
  if (spectrum.size() == 0) throw ValidationError("covariance spectrum is empty");
  if (!spectrum.allFinite()) throw ValidationError("covariance spectrum has non-finite entries");
  if (spectrum.minCoeff() < 0.0) throw ValidationError("covariance spectrum has negative entries");
  if (spectrum.maxCoeff() <= 0.0) throw ValidationError("covariance is the zero matrix");
}

std::string join_numbers(const Vector& v, char sep) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += format_number17(v[i]);
  }
  return out;
}

Vector parse_number_list(const std::string& text) {
  const auto parts = split(text, ',');
  Vector v(static_cast<Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Index>(i)] = parse_number(parts[i]);
  return v;
}

}  // namespace

CovarianceSpec CovarianceSpec::isotropic(Index d) {
  if (d < 1) throw ValidationError("isotropic covariance: d must be positive");
  CovarianceSpec spec(Kind::isotropic, d);
  spec.spectrum_ = Vector::Ones(d);
  return spec;
}

CovarianceSpec CovarianceSpec::diagonal(Vector spectrum) {
  validate_spectrum(spectrum);
  CovarianceSpec spec(Kind::diagonal, spectrum.size());
  spec.spectrum_ = std::move(spectrum);
  return spec;
}

CovarianceSpec CovarianceSpec::explicit_matrix(SymMatrix s) {
  SpectralDecomposition eig = sym_eig_dense(s);
  clamp_psd(eig);
  validate_spectrum(eig.eigenvalues);
  CovarianceSpec spec(Kind::explicit_matrix, s.dim());
  spec.spectrum_ = eig.eigenvalues;
  spec.sqrt_ = eig.eigenvectors * eig.eigenvalues.cwiseSqrt().asDiagonal() *
               eig.eigenvectors.transpose();
  spec.matrix_ = s.matrix();
  return spec;
}

Vector CovarianceSpec::eigenvalues() const {
  Vector values = spectrum_;
  std::sort(values.data(), values.data() + values.size(), std::greater<>());
  return values;
}

Matrix CovarianceSpec::dense() const {
  if (kind_ == Kind::explicit_matrix) return *matrix_;
  return spectrum_.asDiagonal();
}

LinearOperator CovarianceSpec::sqrt_operator() const {
  switch (kind_) {
    case Kind::isotropic:
      return {dim_, [](const Vector& v) -> Vector { return v; }};
    case Kind::diagonal:
      return diagonal_operator(spectrum_.cwiseSqrt());
    case Kind::explicit_matrix:
      return dense_operator(*sqrt_);
  }
  throw ValidationError("unknown covariance kind");
}

LinearOperator CovarianceSpec::apply_operator() const {
  switch (kind_) {
    case Kind::isotropic:
      return {dim_, [](const Vector& v) -> Vector { return v; }};
    case Kind::diagonal:
      return diagonal_operator(spectrum_);
    case Kind::explicit_matrix:
      return dense_operator(*matrix_);
  }
  throw ValidationError("unknown covariance kind");
}

std::string CovarianceSpec::describe() const {
  switch (kind_) {
    case Kind::isotropic:
      return "isotropic(d=" + std::to_string(dim_) + ")";
    case Kind::diagonal:
      return "diagonal(D=" + std::to_string(dim_) + ")";
    case Kind::explicit_matrix:
      return "explicit(d=" + std::to_string(dim_) + ")";
  }
  return "unknown";
}

double effective_rank(const CovarianceSpec& spec) {
  const Vector lambda = spec.eigenvalues();
  if (lambda[0] <= 0.0) throw ValidationError("effective_rank: zero matrix");
  if (spec.kind() == CovarianceSpec::Kind::isotropic) return static_cast<double>(spec.dim());
  CompensatedSum trace;
  for (Index i = 0; i < lambda.size(); ++i) trace += lambda[i];
  return trace.value() / lambda[0];
}

double effective_input_dim(const CovarianceSpec& spec) {
  const Vector lambda = spec.eigenvalues();
  if (lambda[0] <= 0.0) throw ValidationError("effective_input_dim: zero matrix");
  if (spec.kind() == CovarianceSpec::Kind::isotropic) return static_cast<double>(spec.dim());
  CompensatedSum squares;
  for (Index i = 0; i < lambda.size(); ++i) squares += lambda[i] * lambda[i];
  const double srk_sq = squares.value() / (lambda[0] * lambda[0]);
  return std::min(effective_rank(spec), srk_sq);
}

CovarianceSpec power_law_spec(double target_srk) {
  if (!(target_srk > 1.0)) throw ValidationError("power_law_spec: target srk must exceed 1");
  constexpr Index kMaxDim = 10'000'000;
  CompensatedSum total;
  Index dim = 0;
  while (total.value() < target_srk) {
    if (dim >= kMaxDim) {
      throw CapacityError("power_law_spec: target srk unreachable within D <= 1e7");
    }
    ++dim;
    total += 1.0 / std::sqrt(static_cast<double>(dim));
  }
  Vector spectrum(dim);
  for (Index k = 0; k < dim; ++k) spectrum[k] = 1.0 / std::sqrt(static_cast<double>(k + 1));
  CovarianceSpec spec = CovarianceSpec::diagonal(std::move(spectrum));
  const double srk = effective_rank(spec);
  const double deff = effective_input_dim(spec);
  spec.add_note("power-law spectrum matched on srk(S)=" + format_number(srk) + " (target " +
                format_number(target_srk) + "); d_eff=min(srk(S),srk(S^2))=" +
                format_number(deff) + " cannot reach the target at feasible D");
  return spec;
}

std::string teacher_descriptor(const Teacher& teacher) {
  if (std::holds_alternative<ZeroTeacher>(teacher)) return "zero";
  if (std::holds_alternative<RandomLinearTeacher>(teacher)) return "random_linear";
  if (const auto* lin = std::get_if<LinearTeacher>(&teacher)) return "linear:" + join_numbers(lin->w, ',');
  const auto& mt = std::get<ModelTeacher>(teacher);
  return "model:" + mt.model.descriptor() + "|" + join_numbers(mt.theta, ',');
}

Teacher parse_teacher(const std::string& token) {
  if (token == "zero") return ZeroTeacher{};
  if (token == "random_linear") return RandomLinearTeacher{};
  if (token.rfind("linear:", 0) == 0) return LinearTeacher{parse_number_list(token.substr(7))};
  if (token.rfind("model:", 0) == 0) {
    const auto bar = token.find('|');
    if (bar == std::string::npos) throw ValidationError("model teacher: missing parameters");
    Model model = Model::from_descriptor(token.substr(6, bar - 6));
    Vector theta = parse_number_list(token.substr(bar + 1));
    if (theta.size() != model.param_dim()) throw ValidationError("model teacher: wrong theta length");
    return ModelTeacher{std::move(model), std::move(theta)};
  }
  throw ValidationError("unrecognized teacher '" + token + "'");
}

Vector teacher_targets(const Teacher& teacher, const RowMatrix& inputs) {
  const Index d = inputs.cols();
  if (std::holds_alternative<ZeroTeacher>(teacher)) return Vector::Zero(inputs.rows());
  if (std::holds_alternative<RandomLinearTeacher>(teacher)) {
    throw ValidationError("teacher_targets: random_linear teacher must be resolved first");
  }
  if (const auto* lin = std::get_if<LinearTeacher>(&teacher)) {
    if (lin->w.size() != d) {
      throw ValidationError("linear teacher has dimension " + std::to_string(lin->w.size()) +
                            " but inputs have " + std::to_string(d));
    }
    return predict_batch(Model::linear(d), lin->w, inputs);
  }
  const auto& mt = std::get<ModelTeacher>(teacher);
  if (mt.model.input_dim() != d) throw ValidationError("model teacher input dimension mismatch");
  return predict_batch(mt.model, mt.theta, inputs);
}

Dataset make_dataset(RowMatrix inputs, Vector targets, Teacher teacher, std::uint64_t seed) {
  if (inputs.rows() < 1 || inputs.cols() < 1) throw ValidationError("dataset: empty inputs");
  if (targets.size() != inputs.rows()) throw ValidationError("dataset: targets length mismatch");
  if (!inputs.allFinite() || !targets.allFinite()) throw ValidationError("dataset: non-finite entry");
  Dataset data;
  data.inputs = std::move(inputs);
  data.targets = std::move(targets);
  data.teacher = std::move(teacher);
  data.seed = seed;
  return data;
}

Dataset sample_dataset(const CovarianceSpec& spec, Index n, const Teacher& teacher, RngStream& rng) {
  if (n < 1) throw ValidationError("sample_dataset: n must be positive");
  const Index d = spec.dim();
  Teacher resolved = teacher;
  if (std::holds_alternative<RandomLinearTeacher>(teacher)) {
    resolved = LinearTeacher{standard_normal(d, rng)};
  }
  const LinearOperator root = spec.sqrt_operator();
  RowMatrix inputs(n, d);
  for (Index i = 0; i < n; ++i) inputs.row(i) = root(standard_normal(d, rng)).transpose();
  Vector targets = teacher_targets(resolved, inputs);
  Dataset data = make_dataset(std::move(inputs), std::move(targets), std::move(resolved), rng.seed());
  data.notes = spec.notes();
  return data;
}

Index figure1_sample_count(double d_eff) {
  if (!(d_eff > 1.0)) throw ValidationError("figure1_sample_count: d_eff must exceed 1");
  return static_cast<Index>(std::ceil(5.0 * std::log(d_eff)));
}

std::string serialize_dataset(const Dataset& data) {
  std::string out;
  out += std::to_string(data.d()) + " " + std::to_string(data.n()) + " " +
         teacher_descriptor(data.teacher) + " " + std::to_string(data.seed) + "\n";
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.d(); ++j) {
      out += format_number17(data.inputs(i, j));
      out += ' ';
    }
    out += format_number17(data.targets[i]);
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset: missing header");
  const auto header = split_whitespace(line);
  if (header.size() != 4) throw ValidationError("dataset: header must have 4 fields");
  const Index d = parse_integer(header[0]);
  const Index n = parse_integer(header[1]);
  if (d < 1 || n < 1) throw ValidationError("dataset: d and n must be positive");
  Teacher teacher = parse_teacher(header[2]);
  const auto seed = static_cast<std::uint64_t>(std::stoull(header[3]));
  RowMatrix inputs(n, d);
  Vector targets(n);
  for (Index i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw ValidationError("dataset: fewer rows than header states");
    const auto fields = split_whitespace(line);
    if (static_cast<Index>(fields.size()) != d + 1) {
      throw ValidationError("dataset: row " + std::to_string(i) + " has " +
                            std::to_string(fields.size()) + " fields");
    }
    for (Index j = 0; j < d; ++j) inputs(i, j) = parse_number(fields[static_cast<std::size_t>(j)]);
    targets[i] = parse_number(fields[static_cast<std::size_t>(d)]);
  }
  return make_dataset(std::move(inputs), std::move(targets), std::move(teacher), seed);
}

}  // namespace noisegeom
