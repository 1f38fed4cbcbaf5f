#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mvbi {

enum class PredictWeighting { Alpha, AlphaGamma };
enum class AlphaSchedule { Epoch, Batch };

/// Every knob of a training run. Defaults follow the published setup where
/// one exists (widths 400/200, head 300, d_B 200, Adam 1e-3 / 0.5 / 0.9,
/// batch 64); the rest are engineering defaults.
struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double adam_eps = 1e-8;

  double gamma = 5.0;
  /// Number of views with nonzero weight; unset means all views.
  std::optional<int> s;

  std::vector<int> view_hidden = {400, 200};
  int d_B = 200;
  std::vector<int> head_hidden = {300};

  std::uint64_t seed = 0;
  int alpha_update_period = 1;
  AlphaSchedule alpha_schedule = AlphaSchedule::Epoch;
  PredictWeighting predict_weighting = PredictWeighting::Alpha;
  bool standardize = true;
  std::string precision = "float64";
  int patience = 10;
  std::array<double, 3> split_ratios = {0.7, 0.2, 0.1};

  /// Batch norm on each pair's interaction vector before concatenation.
  bool interaction_batchnorm = false;

  // Ablation switches.
  bool use_view_nets = true;
  bool use_bilinear = true;
  /// When false, α stays uniform over all views for the whole run.
  bool adaptive_alpha = true;

  /// d: width of every view embedding.
  int embed_width() const { return view_hidden.empty() ? 0 : view_hidden.back(); }
  /// s resolved against the number of views.
  int sparsity(int num_views) const { return s.value_or(num_views); }

  /// Checks ranges that do not depend on the dataset. Throws ConfigError.
  void validate() const;
  /// Additionally checks s against M.
  void validate_for(int num_views) const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::string& path);

}  // namespace mvbi
