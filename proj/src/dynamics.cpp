#include "noisegeom/dynamics.hpp"

#include <cmath>
#include <numbers>

#include "noisegeom/error.hpp"
#include "noisegeom/io.hpp"
#include "noisegeom/noisegeom.hpp"

namespace noisegeom {

namespace {

void validate_schedule(const LRSchedule& s) {
  if (s.kind == LRSchedule::Kind::constant) {
    if (!(s.eta_max > 0.0) || !std::isfinite(s.eta_max)) {
      throw ValidationError("learning rate must be positive and finite");
    }
    return;
  }
  if (!(s.eta_min > 0.0) || !std::isfinite(s.eta_max)) {
    throw ValidationError("cyclical schedule: rates must be positive and finite");
  }
  if (s.eta_min > s.eta_max) throw ValidationError("cyclical schedule: eta_min exceeds eta_max");
  if (s.period < 2) throw ValidationError("cyclical schedule: period must be at least 2");
}

void validate_config(const OptimizerConfig& config, Index n) {
  validate_schedule(config.schedule);
  if (config.steps < 0) throw ValidationError("steps must be nonnegative");
  if (config.stride < 1) throw ValidationError("stride must be positive");
  if (config.method == Method::sgd) {
    if (config.batch < 1) throw ValidationError("batch size must be positive");
    if (n > 0 && config.batch > n) throw ValidationError("batch size exceeds n");
    if (config.sampling == Sampling::exhaustive && n > 0 && config.batch != n) {
      throw ValidationError("exhaustive sampling requires batch == n");
    }
  }
}

// Mean over the given rows of u_i grad f_i.
Vector batch_gradient(const Model& model, const Dataset& data, const Params& theta,
                      const std::vector<Index>& indices) {
  Vector g = Vector::Zero(theta.size());
  for (Index i : indices) {
    const Vector x = data.inputs.row(i).transpose();
    const double u = predict(model, theta, x) - data.targets[i];
    g += u * per_sample_grad(model, theta, x);
  }
  return g / static_cast<double>(indices.size());
}

double dataset_loss(const Model& model, const Dataset& data, const Params& theta) {
  const Vector r = predict_batch(model, theta, data.inputs) - data.targets;
  CompensatedSum acc;
  for (Index i = 0; i < r.size(); ++i) acc += r[i] * r[i];
  return 0.5 * acc.value() / static_cast<double>(r.size());
}

// Without-replacement sampler: reshuffles at each epoch boundary.
class EpochSampler {
 public:
  EpochSampler(Index n, RngStream& rng) : rng_(rng), order_(static_cast<std::size_t>(n)) {
    for (Index i = 0; i < n; ++i) order_[static_cast<std::size_t>(i)] = i;
    pos_ = order_.size();
  }

  std::vector<Index> next(Index batch) {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(batch));
    while (static_cast<Index>(out.size()) < batch) {
      if (pos_ == order_.size()) shuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) {
      const std::size_t j = rng_.index(i);
      std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
  }

  RngStream& rng_;
  std::vector<Index> order_;
  std::size_t pos_ = 0;
};

bool finite(const Params& theta) { return theta.allFinite(); }

class Recorder {
 public:
  Recorder(const std::vector<Observer>& observers, Trajectory& traj) : observers_(observers), traj_(traj) {
    traj_.columns = {"t", "loss", "lr"};
    for (const auto& o : observers_) {
      traj_.columns.insert(traj_.columns.end(), o.columns.begin(), o.columns.end());
    }
  }

  void record(Index t, double loss, double lr, const Params& theta) {
    TrajectoryPoint point{t, loss, lr, {}};
    for (const auto& o : observers_) {
      const auto values = o.observe(t, theta);
      if (values.size() != o.columns.size()) {
        throw ValidationError("observer returned " + std::to_string(values.size()) +
                              " values for " + std::to_string(o.columns.size()) + " columns");
      }
      point.values.insert(point.values.end(), values.begin(), values.end());
    }
    traj_.points.push_back(std::move(point));
  }

 private:
  const std::vector<Observer>& observers_;
  Trajectory& traj_;
};

template <class StepFn, class LossFn>
Trajectory drive(const Params& theta0, OptimizerConfig& config, const std::vector<Observer>& observers,
                 StepFn step, LossFn loss_of) {
  Trajectory traj;
  Recorder recorder(observers, traj);
  Params theta = theta0;
  recorder.record(0, loss_of(theta), lr_at(config.schedule, 0), theta);
  for (Index t = 0; t < config.steps; ++t) {
    const double eta = lr_at(config.schedule, t);
    theta = step(theta, eta);
    const Index next = t + 1;
    const bool due = next % config.stride == 0 || next == config.steps;
    double loss = 0.0;
    bool ok = finite(theta);
    if (ok && due) {
      loss = loss_of(theta);
      ok = std::isfinite(loss);
    }
    if (!ok) {
      traj.diverged = true;
      traj.diverged_at = next;
      break;
    }
    if (due) recorder.record(next, loss, lr_at(config.schedule, next), theta);
  }
  traj.final_theta = theta;
  return traj;
}

}  // namespace

LRSchedule LRSchedule::constant(double eta) {
  LRSchedule s;
  s.kind = Kind::constant;
  s.eta_min = eta;
  s.eta_max = eta;
  validate_schedule(s);
  return s;
}

LRSchedule LRSchedule::cyclical(double eta_min, double eta_max, Index period, Waveform waveform) {
  LRSchedule s;
  s.kind = Kind::cyclical;
  s.eta_min = eta_min;
  s.eta_max = eta_max;
  s.period = period;
  s.waveform = waveform;
  validate_schedule(s);
  return s;
}

std::string LRSchedule::describe() const {
  if (kind == Kind::constant) return "constant(" + format_number(eta_max) + ")";
  return "cyclical(" + format_number(eta_min) + "," + format_number(eta_max) + "," +
         std::to_string(period) + "," + to_string(waveform) + ")";
}

double lr_at(const LRSchedule& s, Index t) {
  if (t < 0) throw ValidationError("lr_at: t must be nonnegative");
  if (s.kind == LRSchedule::Kind::constant) return s.eta_max;
  const double phase = static_cast<double>(t % s.period) / static_cast<double>(s.period);
  double shape = 0.0;
  if (s.waveform == Waveform::triangular) {
    shape = phase <= 0.5 ? 2.0 * phase : 2.0 * (1.0 - phase);
  } else {
    shape = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * phase));
  }
  return s.eta_min + (s.eta_max - s.eta_min) * shape;
}

std::string to_string(Method method) { return method == Method::sgd ? "sgd" : "gd"; }

std::string to_string(Sampling sampling) {
  switch (sampling) {
    case Sampling::with_replacement:
      return "with_replacement";
    case Sampling::without_replacement:
      return "without_replacement";
    case Sampling::exhaustive:
      return "exhaustive";
  }
  return "unknown";
}

std::string to_string(Waveform waveform) {
  return waveform == Waveform::triangular ? "triangular" : "cosine";
}

Params sgd_step_on(const Model& model, const Dataset& data, const Params& theta, double eta,
                   const std::vector<Index>& indices) {
  if (indices.empty()) throw ValidationError("sgd_step: empty batch");
  return theta - eta * batch_gradient(model, data, theta, indices);
}

Params sgd_step(const Model& model, const Dataset& data, const Params& theta, double eta, Index batch,
                RngStream& rng, Sampling sampling) {
  if (batch < 1) throw ValidationError("sgd_step: batch must be positive");
  if (batch > data.n()) throw ValidationError("sgd_step: batch exceeds n");
  switch (sampling) {
    case Sampling::exhaustive:
      if (batch != data.n()) throw ValidationError("sgd_step: exhaustive mode requires batch == n");
      return gd_step(model, data, theta, eta);
    case Sampling::without_replacement: {
      EpochSampler sampler(data.n(), rng);
      return sgd_step_on(model, data, theta, eta, sampler.next(batch));
    }
    case Sampling::with_replacement:
      break;
  }
  std::vector<Index> indices(static_cast<std::size_t>(batch));
  for (auto& i : indices) i = static_cast<Index>(rng.index(static_cast<std::uint64_t>(data.n())));
  return sgd_step_on(model, data, theta, eta, indices);
}

Params gd_step(const Model& model, const Dataset& data, const Params& theta, double eta) {
  return theta - eta * loss_gradient(sample_geometry(model, data, theta));
}

Trajectory run(const Model& model, const Dataset& data, const Params& theta0, OptimizerConfig config,
               const std::vector<Observer>& observers) {
  if (theta0.size() != model.param_dim()) throw ValidationError("run: theta0 length mismatch");
  if (model.input_dim() != data.d()) throw ValidationError("run: model and dataset dimensions differ");
  validate_config(config, data.n());
  auto loss_of = [&](const Params& theta) { return dataset_loss(model, data, theta); };
  if (config.method == Method::gd || config.sampling == Sampling::exhaustive) {
    return drive(theta0, config, observers,
                 [&](const Params& theta, double eta) { return gd_step(model, data, theta, eta); },
                 loss_of);
  }
  if (config.sampling == Sampling::without_replacement) {
    EpochSampler sampler(data.n(), config.rng);
    return drive(theta0, config, observers,
                 [&](const Params& theta, double eta) {
                   return sgd_step_on(model, data, theta, eta, sampler.next(config.batch));
                 },
                 loss_of);
  }
  return drive(theta0, config, observers,
               [&](const Params& theta, double eta) {
                 return sgd_step(model, data, theta, eta, config.batch, config.rng);
               },
               loss_of);
}

Trajectory run_online(const Model& model, const CovarianceSpec& spec, const Params& theta_star,
                      const Params& theta0, OptimizerConfig config,
                      const std::vector<Observer>& observers) {
  if (!model.is_olm()) throw UnsupportedFamilyError("run_online: " + model.family_name() + " is not an OLM");
  if (spec.dim() != model.input_dim()) throw ValidationError("run_online: covariance dimension mismatch");
  if (theta0.size() != model.param_dim() || theta_star.size() != model.param_dim()) {
    throw ValidationError("run_online: theta length mismatch");
  }
  validate_config(config, 0);
  const Vector f_star = olm_feature_map(model, theta_star);
  const LinearOperator root = spec.sqrt_operator();
  auto loss_of = [&](const Params& theta) {
    return population_geometry(model, spec, theta, f_star).loss;
  };
  if (config.method == Method::gd) {
    return drive(theta0, config, observers,
                 [&](const Params& theta, double eta) -> Params {
                   return theta - eta * population_geometry(model, spec, theta, f_star).grad;
                 },
                 loss_of);
  }
  const Index d = spec.dim();
  return drive(theta0, config, observers,
               [&](const Params& theta, double eta) -> Params {
                 const Vector r = olm_feature_map(model, theta) - f_star;
                 const Matrix jac = olm_jacobian(model, theta);
                 Vector g = Vector::Zero(theta.size());
                 for (Index b = 0; b < config.batch; ++b) {
                   const Vector x = root(standard_normal(d, config.rng));
                   g += r.dot(x) * (jac.transpose() * x);
                 }
                 return theta - eta * g / static_cast<double>(config.batch);
               },
               loss_of);
}

std::string trajectory_csv(const Trajectory& trajectory) {
  std::string out;
  for (std::size_t c = 0; c < trajectory.columns.size(); ++c) {
    if (c) out += ',';
    out += trajectory.columns[c];
  }
  out += '\n';
  for (const auto& p : trajectory.points) {
    out += std::to_string(p.t) + ',' + format_number(p.loss) + ',' + format_number(p.lr);
    for (double v : p.values) out += ',' + format_number(v);
    out += '\n';
  }
  return out;
}

}  // namespace noisegeom
