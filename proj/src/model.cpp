#include "mvbi/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mvbi/error.hpp"

namespace mvbi {

std::size_t ModelSpec::embed_width() const {
  if (use_view_nets) return view_hidden.empty() ? 0 : view_hidden.back();
  return view_dims.empty() ? 0 : *std::max_element(view_dims.begin(), view_dims.end());
}

std::size_t ModelSpec::head_input_width() const {
  const std::size_t inter = (use_bilinear && num_views > 1) ? (num_views - 1) * d_B : 0;
  return embed_width() + inter;
}

void ModelSpec::validate() const {
  if (num_views < 1) throw ConfigError("model needs at least one view");
  if (num_classes < 1) throw ConfigError("model needs at least one class");
  if (view_dims.size() != num_views) throw ConfigError("model: one input width per view required");
  for (auto w : view_dims)
    if (w == 0) throw ConfigError("model: view input widths must be positive");
  if (use_view_nets) {
    if (view_hidden.empty()) throw ConfigError("model: view networks need at least one layer");
    for (auto w : view_hidden)
      if (w == 0) throw ConfigError("model: view hidden widths must be positive");
  }
  for (auto w : head_hidden)
    if (w == 0) throw ConfigError("model: head hidden widths must be positive");
  if (use_bilinear && d_B == 0) throw ConfigError("model: d_B must be positive");
}

ModelSpec make_spec(const TrainConfig& cfg, std::span<const std::size_t> view_dims,
                    std::size_t num_classes) {
  auto positive = [](int w, const char* what) {
    if (w <= 0) throw ConfigError(std::string(what) + " must be positive, got " + std::to_string(w));
    return static_cast<std::size_t>(w);
  };
  ModelSpec s;
  s.num_views = view_dims.size();
  s.num_classes = num_classes;
  s.view_dims.assign(view_dims.begin(), view_dims.end());
  s.use_view_nets = cfg.use_view_nets;
  s.use_bilinear = cfg.use_bilinear;
  s.interaction_batchnorm = cfg.interaction_batchnorm;
  if (cfg.use_view_nets)
    for (int w : cfg.view_hidden) s.view_hidden.push_back(positive(w, "view hidden width"));
  if (cfg.use_bilinear) s.d_B = positive(cfg.d_B, "d_B");
  for (int w : cfg.head_hidden) s.head_hidden.push_back(positive(w, "head hidden width"));
  s.validate();
  return s;
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

DenseBlock::DenseBlock(const std::string& prefix, std::size_t in, std::size_t out, bool nr, Rng& rng)
    : weight(prefix + ".weight", rng.uniform_matrix(out, in, -glorot_bound(in, out), glorot_bound(in, out))),
      bias(prefix + ".bias", Matrix(1, out)),
      norm_relu(nr) {
  if (norm_relu) {
    bn_gamma = Parameter(prefix + ".bn_gamma", Matrix(1, out, 1.0));
    bn_beta = Parameter(prefix + ".bn_beta", Matrix(1, out, 0.0));
    stats = BatchNormStats(out);
  }
}

Tape::Id DenseBlock::forward(Tape& tape, Tape::Id x, Mode mode) {
  Tape::Id h = tape.affine(x, tape.param(weight), tape.param(bias));
  if (!norm_relu) return h;
  h = tape.batchnorm(h, tape.param(bn_gamma), tape.param(bn_beta), stats, mode);
  return tape.relu(h);
}

Tape::Id ViewNet::forward(Tape& tape, Tape::Id x, Mode mode) {
  for (auto& layer : layers) x = layer.forward(tape, x, mode);
  return x;
}

std::size_t ViewNet::output_width() const {
  return layers.empty() ? input_width : layers.back().out_width();
}

BilinearSet::BilinearSet(std::size_t num_views, std::size_t d, std::size_t d_B, bool batchnorm, Rng& rng)
    : num_views_(num_views), d_(d), d_B_(d_B), batchnorm_(batchnorm) {
  const double bound = glorot_bound(d * d, 1);
  for (std::size_t a = 0; a < num_views; ++a) {
    for (std::size_t b = a + 1; b < num_views; ++b) {
      PairInteraction p;
      p.first = a;
      p.second = b;
      const std::string prefix = "pair" + std::to_string(a) + "_" + std::to_string(b);
      p.metrics = Parameter(prefix + ".metrics", rng.uniform_matrix(d_B * d, d, -bound, bound));
      p.bias = Parameter(prefix + ".bias", Matrix(1, d_B));
      if (batchnorm) {
        p.bn_gamma = Parameter(prefix + ".bn_gamma", Matrix(1, d_B, 1.0));
        p.bn_beta = Parameter(prefix + ".bn_beta", Matrix(1, d_B, 0.0));
        p.stats = BatchNormStats(d_B);
      }
      pairs_.push_back(std::move(p));
    }
  }
}

std::size_t BilinearSet::index(std::size_t v, std::size_t w) const {
  if (v == w || v >= num_views_ || w >= num_views_) {
    throw DimensionError("bilinear pair (" + std::to_string(v) + "," + std::to_string(w) +
                         ") invalid for " + std::to_string(num_views_) + " views");
  }
  const std::size_t a = std::min(v, w), b = std::max(v, w);
  // Row-major enumeration of the strict upper triangle.
  return a * num_views_ - a * (a + 1) / 2 + (b - a - 1);
}

PairInteraction& BilinearSet::pair(std::size_t v, std::size_t w) { return pairs_[index(v, w)]; }
const PairInteraction& BilinearSet::pair(std::size_t v, std::size_t w) const {
  return pairs_[index(v, w)];
}

Tape::Id BilinearSet::pair_forward(Tape& tape, std::span<const Tape::Id> feats, std::size_t v,
                                   std::size_t w, Mode mode) {
  PairInteraction& p = pair(v, w);
  Tape::Id out = tape.bilinear(feats[p.first], feats[p.second], tape.param(p.metrics), tape.param(p.bias));
  if (batchnorm_) out = tape.batchnorm(out, tape.param(p.bn_gamma), tape.param(p.bn_beta), p.stats, mode);
  return out;
}

std::vector<Tape::Id> BilinearSet::interaction_forward(Tape& tape, std::span<const Tape::Id> feats,
                                                       std::size_t v, Mode mode) {
  if (feats.size() != num_views_) throw DimensionError("interaction: expected one feature per view");
  std::vector<Tape::Id> out;
  for (std::size_t w = 0; w < num_views_; ++w)
    if (w != v) out.push_back(pair_forward(tape, feats, v, w, mode));
  return out;
}

Tape::Id SharedHead::forward(Tape& tape, Tape::Id x, Mode mode) {
  for (auto& layer : layers) x = layer.forward(tape, x, mode);
  return x;
}

MvNNBiInModel::MvNNBiInModel(ModelSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.use_view_nets) {
    for (std::size_t v = 0; v < spec_.num_views; ++v) {
      ViewNet net;
      net.input_width = spec_.view_dims[v];
      std::size_t in = net.input_width;
      for (std::size_t l = 0; l < spec_.view_hidden.size(); ++l) {
        const std::string prefix = "view" + std::to_string(v) + ".layer" + std::to_string(l);
        net.layers.emplace_back(prefix, in, spec_.view_hidden[l], true, rng);
        in = spec_.view_hidden[l];
      }
      views_.push_back(std::move(net));
    }
  }
  if (spec_.use_bilinear && spec_.num_views > 1) {
    bilinear_ = BilinearSet(spec_.num_views, spec_.embed_width(), spec_.d_B, spec_.interaction_batchnorm, rng);
  }
  std::size_t in = spec_.head_input_width();
  for (std::size_t l = 0; l < spec_.head_hidden.size(); ++l) {
    head_.layers.emplace_back("head.layer" + std::to_string(l), in, spec_.head_hidden[l], true, rng);
    in = spec_.head_hidden[l];
  }
  head_.layers.emplace_back("head.layer" + std::to_string(spec_.head_hidden.size()), in,
                            spec_.num_classes, false, rng);
}

MvNNBiInModel init_model(const ModelSpec& spec, Rng& rng) { return MvNNBiInModel(spec, rng); }

std::vector<Tape::Id> MvNNBiInModel::embed(Tape& tape, std::span<const Matrix> views, Mode mode) {
  if (views.size() != spec_.num_views) {
    throw DataError("model expects " + std::to_string(spec_.num_views) + " views, batch has " +
                    std::to_string(views.size()) +
                    (views.size() < spec_.num_views ? "; missing view " + std::to_string(views.size()) : ""));
  }
  const std::size_t n = views.front().rows();
  const std::size_t d = spec_.embed_width();
  std::vector<Tape::Id> feats;
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].cols() != spec_.view_dims[v]) {
      throw DimensionError("view " + std::to_string(v) + ": expected width " +
                           std::to_string(spec_.view_dims[v]) + ", got " + views[v].shape_str());
    }
    if (views[v].rows() != n) throw DimensionError("views disagree on batch size");
    Tape::Id x = tape.input(views[v]);
    if (spec_.use_view_nets) {
      feats.push_back(views_[v].forward(tape, x, mode));
    } else if (views[v].cols() < d) {
      const Tape::Id parts[] = {x, tape.input(Matrix(n, d - views[v].cols()))};
      feats.push_back(tape.concat(parts));
    } else {
      feats.push_back(x);
    }
  }
  return feats;
}

std::vector<Tape::Id> MvNNBiInModel::forward(Tape& tape, std::span<const Matrix> views, Mode mode) {
  const std::vector<Tape::Id> feats = embed(tape, views, mode);
  const std::size_t M = spec_.num_views;
  const bool interact = spec_.use_bilinear && M > 1;

  // Each undirected pair is evaluated once and shared by both of its views.
  std::map<std::pair<std::size_t, std::size_t>, Tape::Id> pair_out;
  if (interact) {
    for (std::size_t a = 0; a < M; ++a)
      for (std::size_t b = a + 1; b < M; ++b) pair_out[{a, b}] = bilinear_.pair_forward(tape, feats, a, b, mode);
  }

  std::vector<Tape::Id> logits;
  for (std::size_t v = 0; v < M; ++v) {
    std::vector<Tape::Id> parts{feats[v]};
    if (interact) {
      for (std::size_t w = 0; w < M; ++w)
        if (w != v) parts.push_back(pair_out.at({std::min(v, w), std::max(v, w)}));
    }
    const Tape::Id head_in = parts.size() == 1 ? parts.front() : tape.concat(parts);
    logits.push_back(head_.forward(tape, head_in, mode));
  }
  return logits;
}

std::vector<Matrix> MvNNBiInModel::logits(std::span<const Matrix> views, Mode mode) {
  Tape tape;
  std::vector<Matrix> out;
  for (Tape::Id id : forward(tape, views, mode)) out.push_back(tape.value(id));
  return out;
}

std::vector<Parameter*> MvNNBiInModel::parameters() {
  std::vector<Parameter*> ps;
  auto add_block = [&](DenseBlock& b) {
    ps.push_back(&b.weight);
    ps.push_back(&b.bias);
    if (b.norm_relu) {
      ps.push_back(&b.bn_gamma);
      ps.push_back(&b.bn_beta);
    }
  };
  for (auto& net : views_)
    for (auto& l : net.layers) add_block(l);
  for (auto& p : bilinear_.pairs()) {
    ps.push_back(&p.metrics);
    ps.push_back(&p.bias);
    if (bilinear_.batchnorm()) {
      ps.push_back(&p.bn_gamma);
      ps.push_back(&p.bn_beta);
    }
  }
  for (auto& l : head_.layers) add_block(l);
  return ps;
}

std::vector<std::pair<std::string, BatchNormStats*>> MvNNBiInModel::batchnorm_stats() {
  std::vector<std::pair<std::string, BatchNormStats*>> out;
  auto add_block = [&](DenseBlock& b) {
    if (!b.norm_relu) return;
    const std::string prefix = b.weight.name.substr(0, b.weight.name.rfind('.'));
    out.emplace_back(prefix, &b.stats);
  };
  for (auto& net : views_)
    for (auto& l : net.layers) add_block(l);
  if (bilinear_.batchnorm()) {
    for (auto& p : bilinear_.pairs()) {
      out.emplace_back(p.metrics.name.substr(0, p.metrics.name.rfind('.')), &p.stats);
    }
  }
  for (auto& l : head_.layers) add_block(l);
  return out;
}

void MvNNBiInModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

}  // namespace mvbi
