#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "noisegeom/linalg.hpp"
#include "noisegeom/models.hpp"
#include "noisegeom/rng.hpp"

namespace noisegeom {

/// Input covariance S: isotropic, diagonal, or an explicit symmetric PSD matrix.
class CovarianceSpec {
 public:
  enum class Kind { isotropic, diagonal, explicit_matrix };

  static CovarianceSpec isotropic(Index d);
  static CovarianceSpec diagonal(Vector spectrum);
  static CovarianceSpec explicit_matrix(SymMatrix s);

  Kind kind() const { return kind_; }
  Index dim() const { return dim_; }
  /// Eigenvalues of S in descending order.
  Vector eigenvalues() const;
  Matrix dense() const;
  /// x -> S^{1/2} x.
  LinearOperator sqrt_operator() const;
  /// x -> S x.
  LinearOperator apply_operator() const;
  /// Provenance notes (e.g. which quantity a power-law spectrum was matched on).
  const std::vector<std::string>& notes() const { return notes_; }
  void add_note(std::string note) { notes_.push_back(std::move(note)); }
  /// Compact single-token description for metadata.
  std::string describe() const;

 private:
  CovarianceSpec(Kind kind, Index dim) : kind_(kind), dim_(dim) {}

  Kind kind_;
  Index dim_;
  Vector spectrum_;               // diagonal
  std::optional<Matrix> matrix_;  // explicit
  std::optional<Matrix> sqrt_;    // explicit, cached
  std::vector<std::string> notes_;
};

/// srk(S) = tr(S) / ||S||_2.
double effective_rank(const CovarianceSpec& spec);
/// min{srk(S), srk(S^2)}.
double effective_input_dim(const CovarianceSpec& spec);
/// lambda_k = 1/sqrt(k) with the smallest D such that srk(S) >= target_srk.
CovarianceSpec power_law_spec(double target_srk);

/// Target generator. RandomLinear is resolved to Linear when a dataset is sampled.
struct ZeroTeacher {};
struct LinearTeacher {
  Vector w;
};
struct RandomLinearTeacher {};
struct ModelTeacher {
  Model model;
  Params theta;
};
using Teacher = std::variant<ZeroTeacher, LinearTeacher, RandomLinearTeacher, ModelTeacher>;

/// Whitespace-free teacher token for dataset headers.
std::string teacher_descriptor(const Teacher& teacher);
Teacher parse_teacher(const std::string& token);

/// Targets for a resolved teacher; identical to predict_batch of the teacher model.
Vector teacher_targets(const Teacher& teacher, const RowMatrix& inputs);

struct Dataset {
  RowMatrix inputs;  // n x d
  Vector targets;    // n
  Teacher teacher;
  std::uint64_t seed = 0;
  std::vector<std::string> notes;

  Index n() const { return inputs.rows(); }
  Index d() const { return inputs.cols(); }
};

/// Builds a dataset from explicit arrays; validates shape and finiteness.
Dataset make_dataset(RowMatrix inputs, Vector targets, Teacher teacher, std::uint64_t seed = 0);

/// n i.i.d. N(0, S) inputs and teacher targets. A RandomLinear teacher draws
/// w* ~ N(0, I_d) from rng before the inputs.
Dataset sample_dataset(const CovarianceSpec& spec, Index n, const Teacher& teacher, RngStream& rng);

/// n = ceil(5 ln d_eff).
Index figure1_sample_count(double d_eff);

/// Columnar text: header "d n teacher seed", then one row "x_1 ... x_d y" per sample.
std::string serialize_dataset(const Dataset& data);
Dataset parse_dataset(const std::string& text);

}  // namespace noisegeom
