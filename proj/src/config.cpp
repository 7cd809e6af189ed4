#include "noisegeom/config.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

namespace noisegeom {

namespace {

ExperimentConfig fig1(bool anisotropic) {
  ExperimentConfig c;
  c.preset = anisotropic ? "fig1-aniso" : "fig1-iso";
  c.reps = 20;
  if (anisotropic) {
    c.blocks["data"] = {{"covariance", "power_law"}, {"srk_target", 50.0}, {"n", 20}, {"teacher", "random_linear"}};
  } else {
    c.blocks["data"] = {{"covariance", "isotropic"}, {"d", 50}, {"n", 20}, {"teacher", "random_linear"}};
  }
  c.blocks["model"] = {{"families", {"linear", "deep_linear_net", "two_layer"}},
                       {"hidden_width", 64},
                       {"depth", 4},
                       {"m", 100},
                       {"slope", 0.0},
                       {"train_head", true}};
  c.blocks["metrics"] = {{"thetas", 20}, {"theta_law", "standard_normal"}};
  c.deviations = {
      "n = ceil(5 ln d_eff) with the natural log, rounded up (d_eff = 50 gives n = 20)",
      "theta ~ N(0, I_p) is assumed; the distribution is stated only for the eigen-direction experiment",
      "deep linear net widths (d, 64, 64, 64, 1): only the depth is given",
      "two-layer ReLU width m = 100 with both layers trainable: the width is not given",
  };
  if (anisotropic) {
    c.deviations.push_back(
        "power-law spectrum matched on srk(S) = 50; min{srk(S), srk(S^2)} = 50 is unreachable since srk(S^2) grows logarithmically in D");
  }
  return c;
}

ExperimentConfig fig2() {
  ExperimentConfig c;
  c.preset = "fig2-linear-limited";
  c.reps = 1;
  c.blocks["data"] = {{"covariance", "isotropic"}, {"d", 2000}, {"regimes", {250, 61}}, {"teacher", "random_linear"}};
  c.blocks["model"] = {{"families", {"linear"}}};
  c.blocks["metrics"] = {{"thetas", 1}, {"k", 20}, {"noise", "sigma0"}, {"mc_batch", 40}};
  c.deviations = {
      "d = 10^4 scaled to d = 2000; regimes n = d/8 = 250 and n = ceil(8 ln d) = 61 keep the same ratios",
      "alpha_k uses the centered noise covariance Sigma_0; which covariance the figure uses is not stated",
  };
  return c;
}

ExperimentConfig fig3() {
  ExperimentConfig c;
  c.preset = "fig3-escape";
  c.reps = 50;
  c.blocks["data"] = {{"covariance", "spike"}, {"d", 1000}, {"n", 10000}, {"input_scale", "inverse_d"}, {"teacher", "zero"}};
  c.blocks["model"] = {{"families", {"linear"}}};
  c.blocks["escape"] = {{"srk_sq", {2.0, 5.0, 10.0}},
                        {"beta", 1.2},
                        {"gd_beta", 4.0},
                        {"k", 1},
                        {"steps", 50},
                        {"init_variance", "exp(-10)/d"},
                        {"noise", "sgd"},
                        {"c2", 1.0},
                        {"slack", 1.5},
                        {"alignment_thetas", 10},
                        {"alignment_k", 10}};
  c.deviations = {
      "n = 10^5 scaled to n = 10^4 for desk runtime",
      "T = 50 steps; the horizon is not stated",
      "burn-in constant c2 = 1; the constant is not given",
  };
  return c;
}

ExperimentConfig fig4() {
  ExperimentConfig c;
  c.preset = "fig4-clr";
  c.reps = 20;
  c.blocks["data"] = {{"covariance", "isotropic"}, {"d", 1}, {"online", true}};
  c.blocks["model"] = {{"families", {"clr_toy"}}, {"theta_star", {0.0, 0.0}}, {"theta0", {0.5, 0.01}}};
  c.blocks["optimizer"] = {{"schedule", "cyclical"},
                           {"eta_min", 0.01},
                           {"eta_max", 7.5},
                           {"period", 200},
                           {"waveform", "triangular"},
                           {"steps", 2000},
                           {"batch", 1},
                           {"stride", 10}};
  c.deviations = {
      "CLR hyperparameters eta_min = 0.01, eta_max = 7.5, period = 200, T = 2000 are not given; chosen to show the qualitative behaviour",
      "initial point w_0 = (0.5, 0.01) is not given",
  };
  return c;
}

ExperimentConfig fig5() {
  ExperimentConfig c;
  c.preset = "fig5-nonlinear-escape";
  c.reps = 50;
  c.blocks["data"] = {{"covariance", "isotropic"}, {"d", 20}, {"n", 200}, {"teacher", "model"}};
  c.blocks["model"] = {{"families", {"two_layer"}}, {"m", 10}, {"slope", 0.1}, {"train_head", false}};
  c.blocks["escape"] = {{"k", 5}, {"gd_beta", 2.2}, {"steps", 20}, {"init_scale", 1e-3}};
  c.deviations = {
      "two-layer Leaky-ReLU network (d = 20, m = 10, n = 200) on a realizable teacher replaces the CIFAR-10 VGG/ResNet runs",
      "eta = 2.2 / lambda_1(G(theta*)) shared by SGD and GD; the large-scale runs use eta = 0.1",
  };
  return c;
}

const std::map<std::string, std::function<ExperimentConfig()>>& registry() {
  static const std::map<std::string, std::function<ExperimentConfig()>> table = {
      {"fig1-iso", [] { return fig1(false); }},
      {"fig1-aniso", [] { return fig1(true); }},
      {"fig2-linear-limited", fig2},
      {"fig3-escape", fig3},
      {"fig4-clr", fig4},
      {"fig5-nonlinear-escape", fig5},
  };
  return table;
}

}  // namespace

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

ExperimentConfig preset(const std::string& name) {
  const auto& table = registry();
  const auto it = table.find(name);
  if (it == table.end()) {
    std::string list;
    for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw ValidationError("unknown preset '" + name + "'; available: " + list);
  }
  return it->second();
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["command"] = command;
  j["seed"] = seed;
  j["outdir"] = outdir;
  j["reps"] = reps;
  if (!preset.empty() && blocks == noisegeom::preset(preset).blocks) {
    j["preset"] = preset;
  } else {
    j["blocks"] = blocks;
    if (!preset.empty()) j["based_on"] = preset;
  }
  j["deviations"] = deviations;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  const bool has_preset = j.contains("preset") && !j.at("preset").is_null();
  const bool has_blocks = j.contains("blocks") && !j.at("blocks").is_null();
  if (has_preset == has_blocks) throw ValidationError("config needs exactly one of 'preset' and 'blocks'");
  if (!j.contains("seed")) throw ValidationError("config needs a master 'seed'");
  ExperimentConfig c;
  try {
    if (has_preset) {
      c = noisegeom::preset(j.at("preset").get<std::string>());
    } else {
      c.blocks = j.at("blocks");
      if (!c.blocks.is_object()) throw ValidationError("'blocks' must be an object");
      if (j.contains("based_on")) c.preset = j.at("based_on").get<std::string>();
    }
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("command")) c.command = j.at("command").get<std::string>();
    if (j.contains("outdir")) c.outdir = j.at("outdir").get<std::string>();
    if (j.contains("reps")) c.reps = j.at("reps").get<Index>();
    if (j.contains("deviations")) c.deviations = j.at("deviations").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (c.reps < 1) throw ValidationError("config: reps must be positive");
  return c;
}

std::string ExperimentConfig::run_id() const {
  Json resolved = to_json();
  resolved.erase("outdir");
  char digest[9];
  std::snprintf(digest, sizeof digest, "%08llx",
                static_cast<unsigned long long>(fnv1a(resolved.dump()) & 0xffffffffULL));
  return command + "-" + (preset.empty() ? std::string("custom") : preset) + "-s" + std::to_string(seed) +
         "-" + digest;
}

}  // namespace noisegeom
