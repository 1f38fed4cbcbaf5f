#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvbi/config.hpp"
#include "mvbi/data.hpp"
#include "mvbi/rng.hpp"
#include "mvbi/tape.hpp"

namespace mvbi {

/// Architecture header: everything needed to rebuild an untrained model.
struct ModelSpec {
  std::size_t num_views = 0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> view_dims;
  /// Hidden widths of every view network; the last one is d.
  std::vector<std::size_t> view_hidden;
  std::size_t d_B = 0;
  std::vector<std::size_t> head_hidden;
  bool use_view_nets = true;
  bool use_bilinear = true;
  bool interaction_batchnorm = false;

  /// Width d of each view embedding. Without view networks the raw views are
  /// zero-padded to the widest one.
  std::size_t embed_width() const;
  /// Head input width d + (M−1)·d_B.
  std::size_t head_input_width() const;
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

ModelSpec make_spec(const TrainConfig& cfg, std::span<const std::size_t> view_dims,
                    std::size_t num_classes);

/// affine, optionally followed by batch norm and ReLU.
struct DenseBlock {
  Parameter weight;  // out×in
  Parameter bias;    // 1×out
  bool norm_relu = true;
  Parameter bn_gamma;
  Parameter bn_beta;
  BatchNormStats stats;

  DenseBlock() = default;
  DenseBlock(const std::string& prefix, std::size_t in, std::size_t out, bool norm_relu, Rng& rng);
  Tape::Id forward(Tape& tape, Tape::Id x, Mode mode);
  std::size_t in_width() const { return weight.value.cols(); }
  std::size_t out_width() const { return weight.value.rows(); }
};

/// f_v: a stack of affine → batch norm → ReLU blocks.
struct ViewNet {
  std::size_t input_width = 0;
  std::vector<DenseBlock> layers;

  Tape::Id forward(Tape& tape, Tape::Id x, Mode mode);
  std::size_t output_width() const;
};

/// Parameters of one unordered view pair; `first < second` is the left operand.
struct PairInteraction {
  std::size_t first = 0;
  std::size_t second = 0;
  Parameter metrics;  // (d_B·d)×d, block p holds B_p
  Parameter bias;     // 1×d_B
  // Only used when interaction batch norm is enabled.
  Parameter bn_gamma;
  Parameter bn_beta;
  BatchNormStats stats;
};

/// The bilinear function set: one entry per unordered pair of views.
class BilinearSet {
 public:
  BilinearSet() = default;
  BilinearSet(std::size_t num_views, std::size_t d, std::size_t d_B, bool batchnorm, Rng& rng);

  std::size_t num_views() const { return num_views_; }
  std::size_t width() const { return d_; }
  std::size_t d_B() const { return d_B_; }
  bool batchnorm() const { return batchnorm_; }
  std::size_t num_pairs() const { return pairs_.size(); }

  /// Same storage for (v,w) and (w,v).
  PairInteraction& pair(std::size_t v, std::size_t w);
  const PairInteraction& pair(std::size_t v, std::size_t w) const;
  std::vector<PairInteraction>& pairs() { return pairs_; }
  const std::vector<PairInteraction>& pairs() const { return pairs_; }

  /// x_B for one pair, smaller view index on the left.
  Tape::Id pair_forward(Tape& tape, std::span<const Tape::Id> feats, std::size_t v, std::size_t w,
                        Mode mode);
  /// x_B^{Γ_v}: interactions of view v with every other view, ascending.
  std::vector<Tape::Id> interaction_forward(Tape& tape, std::span<const Tape::Id> feats,
                                            std::size_t v, Mode mode);

 private:
  std::size_t index(std::size_t v, std::size_t w) const;

  std::size_t num_views_ = 0;
  std::size_t d_ = 0;
  std::size_t d_B_ = 0;
  bool batchnorm_ = false;
  std::vector<PairInteraction> pairs_;
};

/// φ: hidden blocks with batch norm and ReLU, then a plain affine to C logits.
struct SharedHead {
  std::vector<DenseBlock> layers;
  Tape::Id forward(Tape& tape, Tape::Id x, Mode mode);
};

class MvNNBiInModel {
 public:
  MvNNBiInModel() = default;
  MvNNBiInModel(ModelSpec spec, Rng& rng);

  const ModelSpec& spec() const { return spec_; }
  std::size_t num_views() const { return spec_.num_views; }

  std::vector<ViewNet>& view_nets() { return views_; }
  BilinearSet& bilinear() { return bilinear_; }
  const BilinearSet& bilinear() const { return bilinear_; }
  SharedHead& head() { return head_; }

  /// x_f^v for every view.
  std::vector<Tape::Id> embed(Tape& tape, std::span<const Matrix> views, Mode mode);
  /// One logit node z^v per view; head input is Con[x_f^v, x_B^{Γ_v}].
  std::vector<Tape::Id> forward(Tape& tape, std::span<const Matrix> views, Mode mode);
  /// Convenience: logits as plain matrices.
  std::vector<Matrix> logits(std::span<const Matrix> views, Mode mode);

  /// Every learnable tensor in a fixed order.
  std::vector<Parameter*> parameters();
  /// Running statistics of every batch norm, named for checkpoints.
  std::vector<std::pair<std::string, BatchNormStats*>> batchnorm_stats();
  void zero_grad();

 private:
  ModelSpec spec_;
  std::vector<ViewNet> views_;
  BilinearSet bilinear_;
  SharedHead head_;
};

MvNNBiInModel init_model(const ModelSpec& spec, Rng& rng);

/// Uniform Glorot bound sqrt(6/(fan_in+fan_out)).
double glorot_bound(std::size_t fan_in, std::size_t fan_out);

}  // namespace mvbi
