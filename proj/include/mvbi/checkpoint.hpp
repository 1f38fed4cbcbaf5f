#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "mvbi/data.hpp"
#include "mvbi/fusion.hpp"
#include "mvbi/model.hpp"

namespace mvbi {

/// Everything needed to evaluate a trained model on raw data.
struct Checkpoint {
  MvNNBiInModel model;
  ViewWeights weights;
  PredictWeighting predict_weighting = PredictWeighting::Alpha;
  std::optional<Standardizer> standardizer;
  /// Split used at training time, re-applied to datasets without split.txt.
  std::uint64_t split_seed = 0;
  std::array<double, 3> split_ratios = {0.7, 0.2, 0.1};
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (all little-endian): magic `MVBICKPT`, u32 version, architecture
/// header, split/fusion metadata, then named tensors as
/// (u32 name length, name, u32 rows, u32 cols, rows·cols f64).
void save_checkpoint(const std::filesystem::path& file, Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace mvbi
