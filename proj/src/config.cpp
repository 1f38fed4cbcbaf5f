#include "mvbi/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "mvbi/error.hpp"

namespace mvbi {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 2) fail("batch_size must be >= 2 (batch normalization needs two samples)");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be a finite value >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must lie in [0,1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(gamma > 1.0) || !std::isfinite(gamma)) fail("gamma must be > 1, got " + std::to_string(gamma));
  if (s && *s < 1) fail("s must be >= 1");
  if (use_view_nets) {
    if (view_hidden.empty()) fail("view_hidden must list at least one width");
    for (int w : view_hidden)
      if (w <= 0) fail("view_hidden widths must be positive");
  }
  for (int w : head_hidden)
    if (w <= 0) fail("head_hidden widths must be positive");
  if (use_bilinear && d_B <= 0) fail("d_B must be positive");
  if (alpha_update_period < 1) fail("alpha_update_period must be >= 1");
  if (precision != "float64") fail("precision '" + precision + "' unsupported; only float64 is available");
  if (patience < 1) fail("patience must be >= 1");
  double total = 0.0;
  for (double r : split_ratios) {
    if (!(r >= 0.0)) fail("split ratios must be nonnegative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) fail("split ratios must sum to 1");
}

void TrainConfig::validate_for(int num_views) const {
  validate();
  const int sv = sparsity(num_views);
  if (sv < 1 || sv > num_views) {
    throw ConfigError("s=" + std::to_string(sv) + " outside [1," + std::to_string(num_views) + "]");
  }
}

json to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["gamma"] = c.gamma;
  j["s"] = c.s ? json(*c.s) : json(nullptr);
  j["view_hidden"] = c.view_hidden;
  j["d_B"] = c.d_B;
  j["head_hidden"] = c.head_hidden;
  j["seed"] = c.seed;
  j["alpha_update_period"] = c.alpha_update_period;
  j["alpha_schedule"] = c.alpha_schedule == AlphaSchedule::Epoch ? "epoch" : "batch";
  j["predict_weighting"] = c.predict_weighting == PredictWeighting::Alpha ? "alpha" : "alpha_gamma";
  j["standardize"] = c.standardize;
  j["precision"] = c.precision;
  j["patience"] = c.patience;
  j["split_ratios"] = c.split_ratios;
  j["interaction_batchnorm"] = c.interaction_batchnorm;
  j["use_view_nets"] = c.use_view_nets;
  j["use_bilinear"] = c.use_bilinear;
  j["adaptive_alpha"] = c.adaptive_alpha;
  return j;
}

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps", "gamma", "s",
      "view_hidden", "d_B", "head_hidden", "seed", "alpha_update_period", "alpha_schedule",
      "predict_weighting", "standardize", "precision", "patience", "split_ratios",
      "interaction_batchnorm", "use_view_nets", "use_bilinear", "adaptive_alpha"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  TrainConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lr", c.lr);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("adam_eps", c.adam_eps);
    get("gamma", c.gamma);
    if (j.contains("s") && !j.at("s").is_null()) c.s = j.at("s").get<int>();
    get("view_hidden", c.view_hidden);
    get("d_B", c.d_B);
    get("head_hidden", c.head_hidden);
    get("seed", c.seed);
    get("alpha_update_period", c.alpha_update_period);
    if (j.contains("alpha_schedule")) {
      const auto v = j.at("alpha_schedule").get<std::string>();
      if (v == "epoch") c.alpha_schedule = AlphaSchedule::Epoch;
      else if (v == "batch") c.alpha_schedule = AlphaSchedule::Batch;
      else throw ConfigError("alpha_schedule must be 'epoch' or 'batch', got '" + v + "'");
    }
    if (j.contains("predict_weighting")) {
      const auto v = j.at("predict_weighting").get<std::string>();
      if (v == "alpha") c.predict_weighting = PredictWeighting::Alpha;
      else if (v == "alpha_gamma") c.predict_weighting = PredictWeighting::AlphaGamma;
      else throw ConfigError("predict_weighting must be 'alpha' or 'alpha_gamma', got '" + v + "'");
    }
    get("standardize", c.standardize);
    get("precision", c.precision);
    get("patience", c.patience);
    get("split_ratios", c.split_ratios);
    get("interaction_batchnorm", c.interaction_batchnorm);
    get("use_view_nets", c.use_view_nets);
    get("use_bilinear", c.use_bilinear);
    get("adaptive_alpha", c.adaptive_alpha);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config value: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace mvbi
