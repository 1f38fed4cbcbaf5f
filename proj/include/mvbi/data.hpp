#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvbi/matrix.hpp"
#include "mvbi/rng.hpp"

namespace mvbi {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Aligned per-view features (row = sample) with integer labels.
struct MultiViewDataset {
  std::string name;
  std::vector<std::string> view_names;
  std::vector<Matrix> views;
  std::vector<int> labels;
  int num_classes = 0;
  /// Empty until assigned by split_dataset or a split file.
  std::vector<Split> split;

  std::size_t num_views() const { return views.size(); }
  std::size_t num_samples() const { return labels.size(); }
  std::vector<std::size_t> view_dims() const;
  std::vector<std::size_t> indices(Split s) const;
  /// Checks alignment, label range and (if split) train coverage. Throws DataError.
  void validate() const;
  /// Sub-dataset holding the listed rows (split assignment dropped).
  MultiViewDataset subset(const std::vector<std::size_t>& rows) const;
};

struct MultiViewBatch {
  std::vector<Matrix> views;
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

MultiViewBatch make_batch(const MultiViewDataset& ds, const std::vector<std::size_t>& rows);

// ---- file formats ----------------------------------------------------------

/// Values are rounded to float32, matching the binary format.
Matrix read_csv_matrix(const std::filesystem::path& file);
void write_csv_matrix(const std::filesystem::path& file, const Matrix& m);
/// `MVBIN1`, u32 rows, u32 cols, then float32 row-major, all little-endian.
Matrix read_mvbin(const std::filesystem::path& file);
void write_mvbin(const std::filesystem::path& file, const Matrix& m);

MultiViewDataset load_dataset(const std::filesystem::path& dir);
/// Writes manifest.json, one file per view, labels.txt and (if assigned) split.txt.
void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir,
                  const std::string& format = "mvbin");

// ---- splitting / standardization / batching -------------------------------

/// Stratified per class: each class is shuffled and cut at rounded
/// cumulative ratios. Classes with fewer than 3 samples are rejected.
void split_dataset(MultiViewDataset& ds, std::array<double, 3> ratios, std::uint64_t seed);

struct Standardizer {
  std::vector<Matrix> mean;  // per view, 1×d_v
  std::vector<Matrix> std;   // per view, 1×d_v, floored at 1e-8

  static constexpr double kStdFloor = 1e-8;
  void apply(MultiViewDataset& ds) const;
  Matrix apply_view(std::size_t v, const Matrix& x) const;
};

/// Fits on the train split (or all rows if no split) and transforms every split.
Standardizer standardize_fit_apply(MultiViewDataset& ds);

/// Visits every sample of a split once per epoch in shuffled order; a final
/// batch with fewer than two samples is dropped.
class BatchIterator {
 public:
  BatchIterator(const MultiViewDataset& ds, Split split, std::size_t batch_size,
                std::optional<std::uint64_t> shuffle_seed);
  bool next(MultiViewBatch& out);
  std::size_t num_batches() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const MultiViewDataset* ds_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t pos_ = 0;
};

// ---- synthetic generator -----------------------------------------------

enum class SynthMode {
  /// Each informative view carries a class-dependent mean.
  ClassMeans,
  /// Label depends on the sign pattern of the product of the first two
  /// views' latent coordinates; each view alone is uninformative.
  Product,
};

struct SynthSpec {
  int num_views = 3;
  int num_classes = 4;
  int num_samples = 1000;
  std::vector<int> view_dims;  // empty: 8 per view
  std::vector<int> noise_views;  // 0-based view indices with pure noise
  std::uint64_t seed = 0;
  /// Class-mean pairwise distance in units of the noise σ (ClassMeans mode).
  double separation = 4.0;
  int latent_dim = 4;
  SynthMode mode = SynthMode::ClassMeans;
};

MultiViewDataset synth_generate(const SynthSpec& spec);

}  // namespace mvbi
