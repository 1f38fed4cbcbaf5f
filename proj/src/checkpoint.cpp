#include "mvbi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "mvbi/error.hpp"

namespace mvbi {

namespace {

constexpr char kMagic[8] = {'M', 'V', 'B', 'I', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void sizes(const std::vector<std::size_t>& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (auto x : v) u32(static_cast<std::uint32_t>(x));
  }
  void tensor(const std::string& name, const Matrix& m) {
    u32(static_cast<std::uint32_t>(name.size()));
    out_.write(name.data(), static_cast<std::streamsize>(name.size()));
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) f64(v);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}
  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) throw DataError(file_ + ": truncated checkpoint");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<std::size_t> sizes() {
    const std::uint32_t n = u32();
    if (n > 1u << 20) throw DataError(file_ + ": implausible list length");
    std::vector<std::size_t> v(n);
    for (auto& x : v) x = u32();
    return v;
  }
  std::pair<std::string, Matrix> tensor() {
    const std::uint32_t len = u32();
    if (len > 4096) throw DataError(file_ + ": implausible tensor name length");
    std::string name(len, '\0');
    for (auto& c : name) c = static_cast<char>(u8());
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (auto& v : data) v = f64();
    return {std::move(name), Matrix(rows, cols, std::move(data))};
  }

 private:
  std::istream& in_;
  std::string file_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& file, Checkpoint& ckpt) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + file.string());
  Writer w(out);
  const ModelSpec& spec = ckpt.model.spec();
  out.write(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);

  w.u32(static_cast<std::uint32_t>(spec.num_views));
  w.u32(static_cast<std::uint32_t>(spec.num_classes));
  w.u32(static_cast<std::uint32_t>(spec.embed_width()));
  w.u32(static_cast<std::uint32_t>(spec.d_B));
  w.u32((spec.use_view_nets ? 1u : 0u) | (spec.use_bilinear ? 2u : 0u) | (spec.interaction_batchnorm ? 4u : 0u));
  w.sizes(spec.view_dims);
  w.sizes(spec.view_hidden);
  w.sizes(spec.head_hidden);

  w.u64(ckpt.split_seed);
  for (double r : ckpt.split_ratios) w.f64(r);
  w.u8(ckpt.predict_weighting == PredictWeighting::Alpha ? 0 : 1);
  w.f64(ckpt.weights.gamma);
  w.u32(static_cast<std::uint32_t>(ckpt.weights.s));

  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (Parameter* p : ckpt.model.parameters()) tensors.emplace_back(p->name, &p->value);
  for (auto& [prefix, stats] : ckpt.model.batchnorm_stats()) {
    tensors.emplace_back(prefix + ".running_mean", &stats->mean);
    tensors.emplace_back(prefix + ".running_var", &stats->var);
  }
  const Matrix alpha = Matrix::row_vector(ckpt.weights.alpha);
  tensors.emplace_back("fusion.alpha", &alpha);
  if (ckpt.standardizer) {
    for (std::size_t v = 0; v < ckpt.standardizer->mean.size(); ++v) {
      tensors.emplace_back("standardizer.view" + std::to_string(v) + ".mean", &ckpt.standardizer->mean[v]);
      tensors.emplace_back("standardizer.view" + std::to_string(v) + ".std", &ckpt.standardizer->std[v]);
    }
  }
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) w.tensor(name, *m);
  if (!out) throw DataError("failed writing checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + file.string());
  Reader r(in, file.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError(file.string() + ": not a model checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError(file.string() + ": unsupported checkpoint version " + std::to_string(version));

  ModelSpec spec;
  spec.num_views = r.u32();
  spec.num_classes = r.u32();
  const std::size_t d = r.u32();
  spec.d_B = r.u32();
  const std::uint32_t flags = r.u32();
  spec.use_view_nets = flags & 1u;
  spec.use_bilinear = flags & 2u;
  spec.interaction_batchnorm = flags & 4u;
  spec.view_dims = r.sizes();
  spec.view_hidden = r.sizes();
  spec.head_hidden = r.sizes();
  spec.validate();
  if (spec.embed_width() != d) throw DataError(file.string() + ": inconsistent embedding width in header");

  Checkpoint ck;
  ck.split_seed = r.u64();
  for (double& x : ck.split_ratios) x = r.f64();
  ck.predict_weighting = r.u8() == 0 ? PredictWeighting::Alpha : PredictWeighting::AlphaGamma;
  ck.weights.gamma = r.f64();
  ck.weights.s = static_cast<int>(r.u32());

  std::map<std::string, Matrix> tensors;
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) tensors.insert(r.tensor());

  auto take = [&](const std::string& name, Matrix& dst) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError(file.string() + ": missing tensor '" + name + "'");
    if (!dst.empty() || dst.rows() || dst.cols()) require_same_shape(dst, it->second, name.c_str());
    dst = std::move(it->second);
    tensors.erase(it);
  };

  Rng scratch(0);
  ck.model = MvNNBiInModel(spec, scratch);
  for (Parameter* p : ck.model.parameters()) take(p->name, p->value);
  for (auto& [prefix, stats] : ck.model.batchnorm_stats()) {
    take(prefix + ".running_mean", stats->mean);
    take(prefix + ".running_var", stats->var);
  }
  Matrix alpha(1, spec.num_views);
  take("fusion.alpha", alpha);
  ck.weights.alpha = alpha.data();
  if (tensors.contains("standardizer.view0.mean")) {
    Standardizer st;
    for (std::size_t v = 0; v < spec.num_views; ++v) {
      Matrix mu(1, spec.view_dims[v]), sd(1, spec.view_dims[v]);
      take("standardizer.view" + std::to_string(v) + ".mean", mu);
      take("standardizer.view" + std::to_string(v) + ".std", sd);
      st.mean.push_back(std::move(mu));
      st.std.push_back(std::move(sd));
    }
    ck.standardizer = std::move(st);
  }
  if (!tensors.empty()) throw DataError(file.string() + ": unexpected tensor '" + tensors.begin()->first + "'");
  return ck;
}

}  // namespace mvbi
