#include "noisegeom/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "noisegeom/config.hpp"
#include "noisegeom/error.hpp"
#include "noisegeom/experiments.hpp"
#include "noisegeom/io.hpp"
#include "noisegeom/verify.hpp"

namespace noisegeom {

namespace {

enum class Kind { integer, number, text, flag, numbers, integers, family };

struct Flag {
  std::string name;
  std::string block;
  std::string key;
  Kind kind;
  std::string help;
};

Json convert(const std::string& raw, Kind kind, const std::string& name) {
  try {
    switch (kind) {
      case Kind::integer: return parse_integer(raw);
      case Kind::number: return parse_number(raw);
      case Kind::text: return raw;
      case Kind::flag:
        if (raw == "true" || raw == "1") return true;
        if (raw == "false" || raw == "0") return false;
        throw ValidationError("expected true or false");
      case Kind::family: return Json::array({raw});
      case Kind::numbers: {
        Json list = Json::array();
        for (const auto& tok : split(raw, ',')) list.push_back(parse_number(tok));
        return list;
      }
      case Kind::integers: {
        Json list = Json::array();
        for (const auto& tok : split(raw, ',')) list.push_back(parse_integer(tok));
        return list;
      }
    }
  } catch (const ValidationError& e) {
    throw ValidationError("--" + name + ": " + e.what());
  }
  return nullptr;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

std::string num(double x) { return format_number(x); }
std::string num(Index x) { return std::to_string(x); }

struct Command {
  std::string name;
  std::string help;
  std::string default_preset;  // blocks copied from here when neither preset nor config is given
  std::vector<Flag> flags;
};

std::vector<Command> commands() {
  const Flag d{"d", "data", "d", Kind::integer, "input dimension"};
  const Flag n{"n", "data", "n", Kind::integer, "sample count"};
  const Flag covariance{"covariance", "data", "covariance", Kind::text, "isotropic, power_law or spike"};
  const Flag teacher{"teacher", "data", "teacher", Kind::text, "zero, random_linear or model"};
  const Flag model{"model", "model", "families", Kind::family, "model family"};
  const Flag m{"m", "model", "m", Kind::integer, "two-layer hidden width"};
  const Flag slope{"slope", "model", "slope", Kind::number, "Leaky-ReLU slope"};
  const Flag hidden{"hidden-width", "model", "hidden_width", Kind::integer, "deep linear hidden width"};
  const Flag depth{"depth", "model", "depth", Kind::integer, "deep linear depth"};
  const Flag thetas{"thetas", "metrics", "thetas", Kind::integer, "number of random theta"};
  return {
      {"gen-data", "sample a synthetic dataset", "",
       {d, n, covariance, teacher, model, m, slope,
        {"srk-target", "data", "srk_target", Kind::number, "power-law effective rank"}}},
      {"loss-align", "loss alignment mu at random theta", "fig1-iso",
       {d, n, covariance, teacher, model, m, slope, hidden, depth, thetas}},
      {"dir-align", "directional alignment g at random theta", "",
       {d, n, covariance, teacher, model, m, slope, hidden, depth, thetas,
        {"directions", "metrics", "directions", Kind::integer, "random directions per theta"},
        {"k", "metrics", "k", Kind::integer, "top-k eigen-directions per theta"}}},
      {"eigspec", "eigen-direction alignment of the linear model", "fig2-linear-limited",
       {d, thetas,
        {"regimes", "data", "regimes", Kind::integers, "comma-separated sample counts"},
        {"k", "metrics", "k", Kind::integer, "number of eigen-directions"},
        {"noise", "metrics", "noise", Kind::text, "sigma0 or sigma1"},
        {"mc-batch", "metrics", "mc_batch", Kind::integer, "Monte-Carlo batch (0 skips)"}}},
      {"escape", "escape from a minimum", "fig3-escape",
       {d, n, model, m, slope,
        {"srk-sq", "escape", "srk_sq", Kind::numbers, "comma-separated srk(G^2) values"},
        {"beta", "escape", "beta", Kind::number, "SGD step eta ||G||_F"},
        {"gd-beta", "escape", "gd_beta", Kind::number, "GD step multiplier"},
        {"k", "escape", "k", Kind::integer, "sharp subspace size"},
        {"steps", "escape", "steps", Kind::integer, "iterations"},
        {"c2", "escape", "c2", Kind::number, "burn-in constant"},
        {"slack", "escape", "slack", Kind::number, "component check slack"},
        {"init-scale", "escape", "init_scale", Kind::number, "nonlinear init scale"}}},
      {"clr-toy", "SGD and GD under a cyclical schedule on the toy OLM", "fig4-clr",
       {{"eta-min", "optimizer", "eta_min", Kind::number, "lower step size"},
        {"eta-max", "optimizer", "eta_max", Kind::number, "upper step size"},
        {"period", "optimizer", "period", Kind::integer, "cycle length"},
        {"waveform", "optimizer", "waveform", Kind::text, "triangular or cosine"},
        {"steps", "optimizer", "steps", Kind::integer, "iterations"},
        {"stride", "optimizer", "stride", Kind::integer, "recording stride"},
        {"theta0", "model", "theta0", Kind::numbers, "initial point w1,w2"}}},
      {"verify", "desk-scale theorem check", "",
       {{"theorem", "verify", "theorem", Kind::text, "3.1 3.2 3.3 4.1 4.2 5.1 5.2"},
        {"d", "verify", "d", Kind::integer, "input dimension"},
        {"n", "verify", "n", Kind::integer, "sample count"},
        {"thetas", "verify", "thetas", Kind::integer, "number of random theta"},
        {"epsilon", "verify", "epsilon", Kind::number, "nominal epsilon (0 picks the default)"},
        {"model", "verify", "model", Kind::text, "model family"},
        {"m", "verify", "m", Kind::integer, "two-layer hidden width"},
        {"slope", "verify", "slope", Kind::number, "Leaky-ReLU slope"},
        {"directions", "verify", "directions", Kind::integer, "random directions"},
        {"k", "verify", "k", Kind::integer, "eigen-directions"},
        {"escape-d", "verify", "escape_d", Kind::integer, "escape dimension"},
        {"escape-n", "verify", "escape_n", Kind::integer, "escape sample count"},
        {"srk-sq", "verify", "srk_sq", Kind::number, "escape srk(G^2)"},
        {"beta", "verify", "beta", Kind::number, "escape step eta ||G||_F"},
        {"steps", "verify", "steps", Kind::integer, "escape iterations"},
        {"t-from", "verify", "t_from", Kind::integer, "first step checked"},
        {"escape-slack", "verify", "escape_slack", Kind::number, "fraction of the bound ratio"}}},
      {"one-step", "expected loss after one SGD step", "",
       {d, n, covariance, teacher,
        {"pairs", "metrics", "pairs", Kind::integer, "random (theta, eta) pairs"},
        {"eta-max", "metrics", "eta_max", Kind::number, "eta drawn uniformly from (0, eta-max)"}}},
  };
}

Json default_blocks(const std::string& command) {
  Json b = Json::object();
  if (command == "gen-data") {
    b["data"] = {{"covariance", "isotropic"}, {"d", 50}, {"n", 20}, {"teacher", "random_linear"}};
    b["model"] = {{"families", {"linear"}}};
  } else if (command == "dir-align") {
    b["data"] = {{"covariance", "isotropic"}, {"d", 50}, {"n", 500}, {"teacher", "random_linear"}};
    b["model"] = {{"families", {"linear"}}};
    b["metrics"] = {{"thetas", 20}, {"directions", 10}, {"k", 5}};
  } else if (command == "verify") {
    b["verify"] = Json::object();
  } else if (command == "one-step") {
    b["data"] = {{"covariance", "isotropic"}, {"d", 10}, {"n", 50}, {"teacher", "random_linear"}};
    b["model"] = {{"families", {"linear"}}};
    b["metrics"] = {{"pairs", 20}, {"eta_max", 0.5}};
  }
  return b;
}

std::vector<std::string> families(const Json& blocks) {
  auto list = block_value<std::vector<std::string>>(blocks, "model", "families", {"linear"});
  if (list.empty()) throw ValidationError("model.families is empty");
  return list;
}

Index data_dim(const Json& blocks) { return covariance_from_blocks(blocks).dim(); }

// Outputs -------------------------------------------------------------------

struct Outputs {
  Table table;
  Json report = Json::object();
  std::string summary;
};

struct Context {
  ExperimentConfig config;
  std::string run_id;
  std::string dir;
};

Json metadata(const Context& ctx) {
  Json meta;
  meta["tool"] = kToolName;
  meta["version"] = kToolVersion;
  meta["command"] = ctx.config.command;
  meta["run_id"] = ctx.run_id;
  meta["seed"] = ctx.config.seed;
  meta["config"] = ctx.config.to_json();
  return meta;
}

std::string render_csv(const Context& ctx, const Table& table) {
  std::ostringstream os;
  os << "# tool: " << kToolName << " " << kToolVersion << "\n";
  os << "# command: " << ctx.config.command << "\n";
  os << "# run_id: " << ctx.run_id << "\n";
  os << "# seed: " << ctx.config.seed << "\n";
  os << "# config: " << ctx.config.to_json().dump() << "\n";
  for (std::size_t i = 0; i < table.header.size(); ++i) os << (i ? "," : "") << table.header[i];
  os << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  return os.str();
}

void write_outputs(const Context& ctx, const Outputs& outputs, std::ostream& out) {
  const Json meta = metadata(ctx);
  const std::string config_path = ctx.dir + "/config.json";
  const std::string results_path = ctx.dir + "/results.csv";
  const std::string report_path = ctx.dir + "/report.json";
  write_file(config_path, meta.dump(2) + "\n");
  write_file(results_path, render_csv(ctx, outputs.table));
  Json report;
  report["metadata"] = meta;
  report["report"] = outputs.report;
  write_file(report_path, report.dump(2) + "\n");
  out << config_path << ": resolved config for " << ctx.run_id << "\n";
  out << results_path << ": " << outputs.table.rows.size() << " rows\n";
  out << report_path << ": " << outputs.summary << "\n";
}

// Commands ------------------------------------------------------------------

Outputs gen_data(const ExperimentConfig& c) {
  const Json& b = c.blocks;
  const Index d = data_dim(b);
  const Index n = block_value<Index>(b, "data", "n", 20);
  const Model model = model_from_blocks(families(b).front(), d, b);
  const Dataset data = dataset_from_blocks(b, model, n, c.seed);
  Outputs o;
  o.table.header = {"i", "y"};
  for (Index j = 0; j < d; ++j) o.table.header.push_back("x" + std::to_string(j));
  for (Index i = 0; i < n; ++i) {
    std::vector<std::string> row{num(i), num(data.targets[i])};
    for (Index j = 0; j < d; ++j) row.push_back(num(data.inputs(i, j)));
    o.table.add(std::move(row));
  }
  const CovarianceSpec spec = covariance_from_blocks(b);
  o.report["n"] = n;
  o.report["d"] = d;
  o.report["covariance"] = spec.describe();
  o.report["effective_input_dim"] = effective_input_dim(spec);
  o.report["teacher"] = teacher_descriptor(data.teacher);
  o.report["notes"] = data.notes;
  o.summary = "dataset n=" + num(n) + " d=" + num(d);
  return o;
}

Outputs loss_align(const ExperimentConfig& c) {
  const Json& b = c.blocks;
  const Index d = data_dim(b);
  const Index n = block_value<Index>(b, "data", "n", figure1_sample_count(static_cast<double>(d)));
  const Index thetas = block_value<Index>(b, "metrics", "thetas", 20);
  Outputs o;
  o.table.header = {"family", "theta", "mu", "gamma1", "gamma1_bar", "loss", "fisher_fro_norm", "by_convention",
                    "estimator"};
  Json fams = Json::array();
  std::string summary;
  for (const auto& family : families(b)) {
    const Model model = model_from_blocks(family, d, b);
    const Dataset data = dataset_from_blocks(b, model, n, c.seed);
    const AlignmentSweep sweep = loss_alignment_sweep(model, data, thetas, c.seed);
    for (std::size_t i = 0; i < sweep.reports.size(); ++i) {
      const auto& r = sweep.reports[i];
      o.table.add({family, num(static_cast<Index>(i)), num(r.mu), num(r.gamma1), num(r.gamma1_bar), num(r.loss),
                   num(r.fisher_fro_norm), r.by_convention ? "1" : "0", r.estimator});
    }
    fams.push_back({{"family", family},
                    {"p", sweep.p},
                    {"mu_mean", sweep.mu.mean},
                    {"mu_min", sweep.mu.min},
                    {"mu_max", sweep.mu.max}});
    summary += (summary.empty() ? "" : ", ") + family + " mean mu " + num(sweep.mu.mean);
  }
  o.report["n"] = n;
  o.report["d"] = d;
  o.report["thetas"] = thetas;
  o.report["families"] = fams;
  o.summary = summary;
  return o;
}

Outputs dir_align(const ExperimentConfig& c) {
  const Json& b = c.blocks;
  const Index d = data_dim(b);
  const Index n = block_value<Index>(b, "data", "n", 500);
  const Index thetas = block_value<Index>(b, "metrics", "thetas", 20);
  const Index directions = block_value<Index>(b, "metrics", "directions", 10);
  const Index k = block_value<Index>(b, "metrics", "k", 5);
  Outputs o;
  o.table.header = {"family", "theta", "kind", "index", "g", "numerator", "denominator", "by_convention"};
  Json fams = Json::array();
  std::string summary;
  for (const auto& family : families(b)) {
    const Model model = model_from_blocks(family, d, b);
    const Dataset data = dataset_from_blocks(b, model, n, c.seed);
    const auto samples = sample_thetas(model.param_dim(), thetas, c.seed);
    RngStream dir_rng = RngStream(c.seed, kThetaStream).substream(0x40000);
    RngStream solver = RngStream(c.seed, kThetaStream).substream(0x40001);
    std::vector<double> gs;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const SampleGeometry geom = sample_geometry(model, data, samples[i]);
      const auto random = sample_directions(model.param_dim(), directions, dir_rng);
      const Index kk = std::min(k, model.param_dim());
      const EigenAlignment eig = eigen_alignment(model, data, samples[i], kk, solver);
      auto emit = [&](const std::string& kind, Index j, const Vector& v) {
        const DirectionalReport r = directional_alignment_g(geom, v);
        gs.push_back(r.g);
        o.table.add({family, num(static_cast<Index>(i)), kind, num(j), num(r.g), num(r.numerator),
                     num(r.denominator), r.by_convention ? "1" : "0"});
      };
      for (Index j = 0; j < directions; ++j) emit("random", j, random[static_cast<std::size_t>(j)]);
      for (Index j = 0; j < eig.directions.cols(); ++j) emit("eigen", j, eig.directions.col(j));
    }
    const Summary s = summarize(gs);
    fams.push_back({{"family", family}, {"g_mean", s.mean}, {"g_min", s.min}, {"g_max", s.max}});
    summary += (summary.empty() ? "" : ", ") + family + " g in [" + num(s.min) + ", " + num(s.max) + "]";
  }
  o.report["n"] = n;
  o.report["d"] = d;
  o.report["families"] = fams;
  o.summary = summary;
  return o;
}

Outputs eigspec(const ExperimentConfig& c) {
  const Json& b = c.blocks;
  const Index d = block_value<Index>(b, "data", "d", 2000);
  auto regimes = block_value<std::vector<Index>>(b, "data", "regimes", {});
  if (regimes.empty()) regimes.push_back(block_value<Index>(b, "data", "n", d / 8));
  const Index k = block_value<Index>(b, "metrics", "k", 20);
  const Index thetas = block_value<Index>(b, "metrics", "thetas", 1);
  const NoiseKind noise = parse_noise_kind(block_value<std::string>(b, "metrics", "noise", "sigma0"));
  const Index mc_batch = block_value<Index>(b, "metrics", "mc_batch", 0);
  Outputs o;
  o.table.header = {"n", "theta", "index", "lambda", "alpha", "ratio"};
  Json regs = Json::array();
  double lo = INFINITY;
  double hi = -INFINITY;
  for (Index n : regimes) {
    const EigenSweep sweep = eigen_sweep(d, n, k, thetas, noise, c.seed);
    std::vector<double> ratios;
    for (std::size_t i = 0; i < sweep.results.size(); ++i) {
      const auto& r = sweep.results[i];
      for (Index j = 0; j < r.lambda.size(); ++j) {
        ratios.push_back(r.ratio[j]);
        o.table.add({num(n), num(static_cast<Index>(i)), num(j), num(r.lambda[j]), num(r.alpha[j]), num(r.ratio[j])});
      }
    }
    const Summary s = summarize(ratios);
    lo = std::min(lo, s.min);
    hi = std::max(hi, s.max);
    Json entry = {{"n", n}, {"ratio_min", s.min}, {"ratio_max", s.max}, {"ratio_mean", s.mean},
                  {"solver", sweep.results.empty() ? "" : sweep.results.front().solver}};
    if (mc_batch > 0) {
      const McFidelity f = mc_fidelity(d, n, k, mc_batch, c.seed);
      entry["mc_batch"] = mc_batch;
      entry["mc_max_relative_error"] = f.max_relative_error;
    }
    regs.push_back(entry);
  }
  o.report["d"] = d;
  o.report["k"] = k;
  o.report["noise"] = to_string(noise);
  o.report["regimes"] = regs;
  o.summary = "alpha/lambda in [" + num(lo) + ", " + num(hi) + "]";
  return o;
}

Outputs escape_linear(const ExperimentConfig& c) {
  const Json& b = c.blocks;
  EscapeSettings s;
  s.d = block_value<Index>(b, "data", "d", s.d);
  s.n = block_value<Index>(b, "data", "n", s.n);
  s.beta = block_value<double>(b, "escape", "beta", s.beta);
  s.gd_beta = block_value<double>(b, "escape", "gd_beta", s.gd_beta);
  s.k = block_value<Index>(b, "escape", "k", s.k);
  s.steps = block_value<Index>(b, "escape", "steps", s.steps);
  s.reps = c.reps;
  s.c2 = block_value<double>(b, "escape", "c2", s.c2);
  s.slack = block_value<double>(b, "escape", "slack", s.slack);
  s.alignment_thetas = block_value<Index>(b, "escape", "alignment_thetas", s.alignment_thetas);
  s.alignment_k = block_value<Index>(b, "escape", "alignment_k", s.alignment_k);
  const auto srks = block_value<std::vector<double>>(b, "escape", "srk_sq", {5.0});
  Outputs o;
  o.table.header = {"srk_sq", "mode", "t", "X", "Y", "D", "P"};
  Json studies = Json::array();
  std::string summary;
  for (std::size_t j = 0; j < srks.size(); ++j) {
    s.srk_sq = srks[j];
    const EscapeStudy st = escape_study(s, c.seed, j);
    for (const auto* trace : {&st.sgd, &st.gd}) {
      const std::string mode = trace == &st.sgd ? "sgd" : "gd";
      for (Index t = 0; t < trace->length(); ++t) {
        const auto u = static_cast<std::size_t>(t);
        o.table.add({num(st.srk_sq), mode, num(t), num(trace->x[u]), num(trace->y[u]), num(trace->d[u]),
                     num(trace->p[u])});
      }
    }
    Json entry;
    entry["srk_sq"] = st.srk_sq;
    entry["eta"] = st.eta;
    entry["gd_eta"] = st.gd_eta;
    entry["beta"] = st.bound.beta;
    entry["bound_ratio"] = st.bound.ratio;
    entry["burn_in"] = st.bound.burn_in;
    entry["sgd"] = Json::parse(escape_sidecar_json(st.sgd));
    entry["gd"] = Json::parse(escape_sidecar_json(st.gd));
    entry["sgd_final_D"] = st.sgd.d.back();
    entry["gd_final_D"] = st.gd.d.back();
    entry["alignment"] = {{"a1", st.constants.a1},
                          {"a2", st.constants.a2},
                          {"samples", st.constants.samples},
                          {"skipped", st.constants.skipped},
                          {"degenerate", st.constants.degenerate}};
    entry["component_check"] = {{"checked", st.check.checked},
                                {"x_violations", st.check.x_violations},
                                {"y_violations", st.check.y_violations},
                                {"worst_x", st.check.worst_x},
                                {"worst_y", st.check.worst_y},
                                {"alpha_k", st.check.alpha_k},
                                {"slack", st.check.slack}};
    studies.push_back(entry);
    summary += (summary.empty() ? "" : ", ") + std::string("srk ") + num(st.srk_sq) + " final D " +
               num(st.sgd.d.back());
  }
  o.report["studies"] = studies;
  o.summary = summary;
  return o;
}

Outputs escape_nonlinear(const ExperimentConfig& c) {
  const NonlinearEscapeSettings s = nonlinear_settings_from_blocks(c.blocks, c.reps);
  const NonlinearEscapeStudy st = nonlinear_escape_study(s, c.seed);
  Outputs o;
  o.table.header = {"mode", "t", "mean_abs_p", "mean_r"};
  const auto& t = st.sgd.front().t;
  for (const auto* mode : {"sgd", "gd"}) {
    const bool sgd = std::string(mode) == "sgd";
    const Vector& p = sgd ? st.sgd_mean_p : st.gd_mean_p;
    const Vector& r = sgd ? st.sgd_mean_r : st.gd_mean_r;
    for (Index i = 0; i < p.size(); ++i) o.table.add({mode, num(t[static_cast<std::size_t>(i)]), num(p[i]), num(r[i])});
  }
  o.report["eta"] = st.eta;
  o.report["lambda1"] = st.lambda1;
  o.report["k"] = s.k;
  o.report["reps"] = s.reps;
  o.report["sgd_ratio"] = st.sgd_ratio;
  o.report["gd_ratio"] = st.gd_ratio;
  o.summary = "final r/|p| sgd " + num(st.sgd_ratio) + " gd " + num(st.gd_ratio);
  return o;
}

Outputs escape(const ExperimentConfig& c) {
  return families(c.blocks).front() == "two_layer" ? escape_nonlinear(c) : escape_linear(c);
}

Outputs clr_toy(const ExperimentConfig& c) {
  const ClrSettings s = clr_settings_from_blocks(c.blocks, c.reps);
  const ClrStudy st = clr_toy_study(s, c.seed);
  Outputs o;
  o.table.header = {"mode", "t", "lr", "mean_loss", "mean_w1_sq", "mean_w2_sq"};
  for (const auto* runs : {&st.sgd, &st.gd}) {
    const std::string mode = runs == &st.sgd ? "sgd" : "gd";
    const auto& first = runs->front().points;
    for (std::size_t i = 0; i < first.size(); ++i) {
      CompensatedSum loss;
      CompensatedSum w1;
      CompensatedSum w2;
      std::size_t count = 0;
      for (const auto& traj : *runs) {
        if (i >= traj.points.size()) continue;
        const auto& pt = traj.points[i];
        loss += pt.loss;
        w1 += pt.values[0] * pt.values[0];
        w2 += pt.values[1] * pt.values[1];
        ++count;
      }
      const double k = static_cast<double>(count);
      o.table.add({mode, num(first[i].t), num(first[i].lr), num(loss.value() / k), num(w1.value() / k),
                   num(w2.value() / k)});
    }
  }
  o.report["seeds"] = s.seeds;
  o.report["schedule"] = LRSchedule::cyclical(s.eta_min, s.eta_max, s.period, s.waveform).describe();
  o.report["initial_w1_sq"] = st.initial_w1_sq;
  o.report["sgd_mean_final_w1_sq"] = st.sgd_mean_final_w1_sq;
  o.report["gd_mean_final_w1_sq"] = st.gd_mean_final_w1_sq;
  o.report["sgd_growth"] = st.sgd_growth;
  o.report["gd_growth"] = st.gd_growth;
  o.summary = "w1^2 growth sgd " + num(st.sgd_growth) + " gd " + num(st.gd_growth);
  return o;
}

Outputs verify(const ExperimentConfig& c) {
  const Json& b = c.blocks;
  VerifySettings s;
  s.theorem = block_value<std::string>(b, "verify", "theorem", "");
  if (s.theorem.empty()) throw ValidationError("verify needs --theorem");
  s.d = block_value<Index>(b, "verify", "d", s.d);
  s.n = block_value<Index>(b, "verify", "n", s.n);
  s.thetas = block_value<Index>(b, "verify", "thetas", s.thetas);
  s.epsilon = block_value<double>(b, "verify", "epsilon", s.epsilon);
  s.model = block_value<std::string>(b, "verify", "model", s.model);
  s.m = block_value<Index>(b, "verify", "m", s.m);
  s.slope = block_value<double>(b, "verify", "slope", s.slope);
  s.directions = block_value<Index>(b, "verify", "directions", s.directions);
  s.k = block_value<Index>(b, "verify", "k", s.k);
  s.escape_d = block_value<Index>(b, "verify", "escape_d", s.escape_d);
  s.escape_n = block_value<Index>(b, "verify", "escape_n", s.escape_n);
  s.srk_sq = block_value<double>(b, "verify", "srk_sq", s.srk_sq);
  s.beta = block_value<double>(b, "verify", "beta", s.beta);
  s.steps = block_value<Index>(b, "verify", "steps", s.steps);
  s.t_from = block_value<Index>(b, "verify", "t_from", s.t_from);
  s.escape_slack = block_value<double>(b, "verify", "escape_slack", s.escape_slack);
  s.reps = c.reps > 1 ? c.reps : s.reps;
  s.seed = c.seed;
  const VerificationReport r = verify_theorem(s);
  Outputs o;
  o.table.header = {"index", r.metric};
  for (std::size_t i = 0; i < r.values.size(); ++i) o.table.add({num(static_cast<Index>(i)), num(r.values[i])});
  o.report = r.to_json();
  o.summary = "theorem " + r.theorem + " " + r.metric + " in [" + num(r.observed_min) + ", " +
              num(r.observed_max) + "] " + (r.pass ? "PASS" : "FAIL");
  return o;
}

Outputs one_step(const ExperimentConfig& c) {
  const Json& b = c.blocks;
  const Index d = data_dim(b);
  const Index n = block_value<Index>(b, "data", "n", 50);
  const Index pairs = block_value<Index>(b, "metrics", "pairs", 20);
  const double eta_max = block_value<double>(b, "metrics", "eta_max", 0.5);
  if (eta_max <= 0.0) throw ValidationError("metrics.eta_max must be positive");
  const Model model = model_from_blocks(families(b).front(), d, b);
  const Dataset data = dataset_from_blocks(b, model, n, c.seed);
  const auto samples = sample_thetas(model.param_dim(), pairs, c.seed);
  RngStream eta_rng = RngStream(c.seed, kThetaStream).substream(0x60000);
  Outputs o;
  o.table.header = {"pair", "eta", "exact", "gd_part", "noise_part", "closed_form", "relative_gap"};
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double eta = eta_max * (1.0 - eta_rng.uniform());
    const OneStepLoss r = expected_one_step_loss(model, data, samples[i], eta);
    const double gap = std::abs(r.exact - r.quadratic_closed_form) / std::max(std::abs(r.exact), 1e-300);
    worst = std::max(worst, gap);
    o.table.add({num(static_cast<Index>(i)), num(eta), num(r.exact), num(r.gd_part), num(r.noise_part),
                 num(r.quadratic_closed_form), num(gap)});
  }
  o.report["n"] = n;
  o.report["d"] = d;
  o.report["model"] = model.descriptor();
  o.report["pairs"] = pairs;
  o.report["max_relative_gap"] = worst;
  o.summary = "max relative gap to the quadratic closed form " + num(worst);
  return o;
}

const std::map<std::string, std::function<Outputs(const ExperimentConfig&)>>& handlers() {
  static const std::map<std::string, std::function<Outputs(const ExperimentConfig&)>> table = {
      {"gen-data", gen_data}, {"loss-align", loss_align}, {"dir-align", dir_align}, {"eigspec", eigspec},
      {"escape", escape},     {"clr-toy", clr_toy},       {"verify", verify},       {"one-step", one_step},
  };
  return table;
}

struct Parsed {
  std::optional<std::string> preset;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> outdir;
  std::optional<Index> reps;
  std::map<std::string, std::string> values;
};

ExperimentConfig resolve(const Command& cmd, const Parsed& p) {
  ExperimentConfig c;
  if (p.config) {
    if (p.preset) throw ValidationError("--preset and --config are exclusive");
    Json j;
    try {
      j = Json::parse(read_file(*p.config));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(*p.config + ": " + e.what());
    }
    if (p.seed && !j.contains("seed")) j["seed"] = *p.seed;
    c = ExperimentConfig::from_json(j);
  } else if (p.preset) {
    c = preset(*p.preset);
    if (!p.seed) throw ValidationError("a master --seed is required");
  } else {
    if (!p.seed) throw ValidationError("a master --seed is required");
    if (!cmd.default_preset.empty()) {
      const ExperimentConfig base = preset(cmd.default_preset);
      c.blocks = base.blocks;
      c.reps = base.reps;
      c.deviations = base.deviations;
    } else {
      c.blocks = default_blocks(cmd.name);
    }
  }
  c.command = cmd.name;
  if (p.seed) c.seed = *p.seed;
  if (p.outdir) c.outdir = *p.outdir;
  if (p.reps) {
    if (*p.reps < 1) throw ValidationError("--reps must be positive");
    c.reps = *p.reps;
  }
  for (const auto& flag : cmd.flags) {
    const auto it = p.values.find(flag.name);
    if (it == p.values.end()) continue;
    c.blocks[flag.block][flag.key] = convert(it->second, flag.kind, flag.name);
  }
  return c;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gradient-noise geometry toolkit", kToolName};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  const auto cmds = commands();
  std::vector<Parsed> parsed(cmds.size());
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto* sub = app.add_subcommand(cmds[i].name, cmds[i].help);
    auto& p = parsed[i];
    sub->add_option("--preset", p.preset, "named preset");
    sub->add_option("--config", p.config, "JSON config file");
    sub->add_option("--seed", p.seed, "master seed");
    sub->add_option("--outdir", p.outdir, "output directory (default runs)");
    sub->add_option("--reps", p.reps, "repetitions");
    for (const auto& flag : cmds[i].flags) {
      sub->add_option_function<std::string>(
          "--" + flag.name, [&p, name = flag.name](const std::string& v) { p.values[name] = v; }, flag.help);
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!app.got_subcommand(cmds[i].name)) continue;
    Context ctx;
    ctx.config = resolve(cmds[i], parsed[i]);
    ctx.run_id = ctx.config.run_id();
    ctx.dir = (std::filesystem::path(ctx.config.outdir) / ctx.run_id).string();
    const Outputs outputs = handlers().at(cmds[i].name)(ctx.config);
    write_outputs(ctx, outputs, out);
    return 0;
  }
  return 1;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run(args, out, err);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace noisegeom
