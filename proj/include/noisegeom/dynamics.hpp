#pragma once

#include <functional>
#include <string>
#include <vector>

#include "noisegeom/datagen.hpp"
#include "noisegeom/models.hpp"
#include "noisegeom/rng.hpp"

namespace noisegeom {

enum class Waveform { triangular, cosine };

/// Constant or cyclical learning rate.
struct LRSchedule {
  enum class Kind { constant, cyclical };

  static LRSchedule constant(double eta);
  /// Starts at eta_min, peaks at eta_max at half period.
  static LRSchedule cyclical(double eta_min, double eta_max, Index period,
                             Waveform waveform = Waveform::triangular);

  Kind kind = Kind::constant;
  double eta_min = 0.0;
  double eta_max = 0.0;
  Index period = 0;
  Waveform waveform = Waveform::triangular;

  std::string describe() const;
};

double lr_at(const LRSchedule& schedule, Index t);

enum class Method { sgd, gd };
enum class Sampling { with_replacement, without_replacement, exhaustive };

std::string to_string(Method method);
std::string to_string(Sampling sampling);
std::string to_string(Waveform waveform);

struct OptimizerConfig {
  Method method = Method::sgd;
  Index batch = 1;
  Sampling sampling = Sampling::with_replacement;
  LRSchedule schedule = LRSchedule::constant(0.01);
  Index steps = 0;
  RngStream rng{0, 2};
  /// Record every stride-th step (the final step is always recorded).
  Index stride = 1;
};

/// theta - eta (1/B) sum over B indices drawn uniformly with replacement.
/// Exhaustive sampling requires B == n and equals gd_step.
Params sgd_step(const Model& model, const Dataset& data, const Params& theta, double eta, Index batch,
                RngStream& rng, Sampling sampling = Sampling::with_replacement);
/// Same update over an explicit index list.
Params sgd_step_on(const Model& model, const Dataset& data, const Params& theta, double eta,
                   const std::vector<Index>& indices);
Params gd_step(const Model& model, const Dataset& data, const Params& theta, double eta);

/// Extra trajectory columns computed from (t, theta) at every recorded step.
struct Observer {
  std::vector<std::string> columns;
  std::function<std::vector<double>(Index, const Params&)> observe;
};

struct TrajectoryPoint {
  Index t = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::vector<double> values;
};

struct Trajectory {
  std::vector<std::string> columns;
  std::vector<TrajectoryPoint> points;
  Params final_theta;
  bool diverged = false;
  Index diverged_at = -1;
};

/// Applies the configured stepper config.steps times. Non-finite parameters or
/// loss stop the run with the divergence flag set.
Trajectory run(const Model& model, const Dataset& data, const Params& theta0, OptimizerConfig config,
               const std::vector<Observer>& observers = {});

/// Online training of an OLM on fresh N(0, S) inputs with targets F(theta_star)^T x.
/// SGD draws config.batch fresh inputs per step; GD follows the population gradient.
/// Recorded loss is the population loss.
Trajectory run_online(const Model& model, const CovarianceSpec& spec, const Params& theta_star,
                      const Params& theta0, OptimizerConfig config,
                      const std::vector<Observer>& observers = {});

/// CSV with header t,loss,lr followed by observer columns.
std::string trajectory_csv(const Trajectory& trajectory);

}  // namespace noisegeom
