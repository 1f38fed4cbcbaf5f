#include "mvbi/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mvbi/error.hpp"

namespace mvbi {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + s + "' (expected train|val|test)");
}

std::vector<std::size_t> MultiViewDataset::view_dims() const {
  std::vector<std::size_t> dims;
  for (const auto& v : views) dims.push_back(v.cols());
  return dims;
}

std::vector<std::size_t> MultiViewDataset::indices(Split s) const {
  std::vector<std::size_t> idx;
  if (split.empty()) return idx;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) idx.push_back(i);
  return idx;
}

void MultiViewDataset::validate() const {
  if (views.empty()) throw DataError("dataset '" + name + "' has no views");
  if (num_classes < 1) throw DataError("dataset '" + name + "' has no classes");
  if (!view_names.empty() && view_names.size() != views.size())
    throw DataError("view name count does not match view count");
  const std::size_t n = labels.size();
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].rows() != n) {
      throw DataError("view " + std::to_string(v) + " has " + std::to_string(views[v].rows()) +
                      " rows but there are " + std::to_string(n) + " labels");
    }
    if (!views[v].all_finite()) throw DataError("view " + std::to_string(v) + " contains non-finite values");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                      " outside [0," + std::to_string(num_classes) + ")");
    }
  }
  if (!split.empty()) {
    if (split.size() != n) throw DataError("split assignment length does not match sample count");
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (std::size_t i = 0; i < n; ++i)
      if (split[i] == Split::Train) seen[static_cast<std::size_t>(labels[i])] = true;
    std::vector<bool> present(static_cast<std::size_t>(num_classes), false);
    for (int y : labels) present[static_cast<std::size_t>(y)] = true;
    for (int c = 0; c < num_classes; ++c) {
      const auto k = static_cast<std::size_t>(c);
      if (present[k] && !seen[k]) throw DataError("class " + std::to_string(c) + " is missing from the train split");
    }
  }
}

MultiViewDataset MultiViewDataset::subset(const std::vector<std::size_t>& rows) const {
  MultiViewDataset out;
  out.name = name;
  out.view_names = view_names;
  out.num_classes = num_classes;
  for (const auto& v : views) out.views.push_back(gather_rows(v, rows));
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  return out;
}

MultiViewBatch make_batch(const MultiViewDataset& ds, const std::vector<std::size_t>& rows) {
  MultiViewBatch b;
  for (const auto& v : ds.views) b.views.push_back(gather_rows(v, rows));
  for (std::size_t r : rows) b.labels.push_back(ds.labels.at(r));
  return b;
}

// ---- file formats ----------------------------------------------------------

Matrix read_csv_matrix(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  std::vector<double> data;
  std::size_t cols = 0, rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw DataError(file.string() + ":" + std::to_string(rows + 1) + ": malformed number");
      // Dataset files hold 32-bit values whatever the encoding.
      data.push_back(static_cast<float>(v));
      ++count;
      p = end;
      while (*p == ' ' || *p == '\t') ++p;
      if (*p == ',') {
        ++p;
        continue;
      }
      if (*p == '\0') break;
      throw DataError(file.string() + ":" + std::to_string(rows + 1) + ": unexpected character");
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw DataError(file.string() + ":" + std::to_string(rows + 1) + ": expected " +
                      std::to_string(cols) + " columns, found " + std::to_string(count));
    }
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

void write_csv_matrix(const fs::path& file, const Matrix& m) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out.precision(9);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      // Values are stored at float precision, matching the binary format.
      out << static_cast<float>(m(r, c));
    }
    out << '\n';
  }
}

namespace {

constexpr char kMvbinMagic[6] = {'M', 'V', 'B', 'I', 'N', '1'};

std::uint32_t load_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32le(std::uint32_t v, std::ostream& out) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

}  // namespace

Matrix read_mvbin(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  unsigned char header[14];
  if (!in.read(reinterpret_cast<char*>(header), sizeof header))
    throw DataError(file.string() + ": truncated mvbin header");
  if (std::memcmp(header, kMvbinMagic, 6) != 0) throw DataError(file.string() + ": bad mvbin magic");
  const std::uint32_t rows = load_u32le(header + 6);
  const std::uint32_t cols = load_u32le(header + 10);
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> raw(count * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw DataError(file.string() + ": truncated mvbin payload");
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(load_u32le(raw.data() + 4 * i)));
  }
  return Matrix(rows, cols, std::move(data));
}

void write_mvbin(const fs::path& file, const Matrix& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  out.write(kMvbinMagic, 6);
  store_u32le(static_cast<std::uint32_t>(m.rows()), out);
  store_u32le(static_cast<std::uint32_t>(m.cols()), out);
  for (double v : m.values()) store_u32le(std::bit_cast<std::uint32_t>(static_cast<float>(v)), out);
}

MultiViewDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("missing manifest " + manifest_path.string());
  json manifest;
  MultiViewDataset ds;
  std::vector<std::size_t> declared_dims;
  std::vector<std::pair<std::string, std::string>> files;
  std::string labels_file;
  try {
    in >> manifest;
    ds.name = manifest.value("name", dir.filename().string());
    ds.num_classes = manifest.at("num_classes").get<int>();
    labels_file = manifest.value("labels", std::string("labels.txt"));
    for (const auto& v : manifest.at("views")) {
      ds.view_names.push_back(v.at("name").get<std::string>());
      declared_dims.push_back(v.at("dim").get<std::size_t>());
      files.emplace_back(v.at("file").get<std::string>(), v.value("format", std::string("csv")));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  for (std::size_t v = 0; v < files.size(); ++v) {
    const auto& [file, format] = files[v];
    const fs::path path = dir / file;
    if (!fs::exists(path)) throw DataError("view '" + ds.view_names[v] + "': missing file " + path.string());
    Matrix m;
    if (format == "csv") m = read_csv_matrix(path);
    else if (format == "mvbin") m = read_mvbin(path);
    else throw DataError("view '" + ds.view_names[v] + "': unknown format '" + format + "'");
    if (m.cols() != declared_dims[v]) {
      throw DataError("view '" + ds.view_names[v] + "': manifest dim " + std::to_string(declared_dims[v]) +
                      " but file has " + std::to_string(m.cols()) + " columns");
    }
    ds.views.push_back(std::move(m));
  }

  const fs::path lp = dir / labels_file;
  std::ifstream lin(lp);
  if (!lin) throw DataError("missing labels file " + lp.string());
  std::string line;
  while (std::getline(lin, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    char* end = nullptr;
    const long y = std::strtol(line.c_str(), &end, 10);
    if (end == line.c_str() || *end != '\0') throw DataError(lp.string() + ": malformed label '" + line + "'");
    ds.labels.push_back(static_cast<int>(y));
  }

  const fs::path sp = dir / "split.txt";
  if (fs::exists(sp)) {
    std::ifstream sin(sp);
    while (std::getline(sin, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      ds.split.push_back(split_from_string(line));
    }
  }
  ds.validate();
  return ds;
}

void save_dataset(const MultiViewDataset& ds, const fs::path& dir, const std::string& format) {
  if (format != "csv" && format != "mvbin") throw DataError("unknown view format '" + format + "'");
  fs::create_directories(dir);
  json manifest;
  manifest["name"] = ds.name;
  manifest["num_classes"] = ds.num_classes;
  manifest["labels"] = "labels.txt";
  manifest["views"] = json::array();
  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    const std::string vname = v < ds.view_names.size() ? ds.view_names[v] : "view" + std::to_string(v);
    const std::string file = "view" + std::to_string(v) + (format == "csv" ? ".csv" : ".mvbin");
    if (format == "csv") write_csv_matrix(dir / file, ds.views[v]);
    else write_mvbin(dir / file, ds.views[v]);
    manifest["views"].push_back({{"name", vname}, {"dim", ds.views[v].cols()}, {"file", file}, {"format", format}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::ofstream lo(dir / "labels.txt");
  for (int y : ds.labels) lo << y << '\n';
  if (!ds.split.empty()) {
    std::ofstream so(dir / "split.txt");
    for (Split s : ds.split) so << to_string(s) << '\n';
  }
}

// ---- splitting / standardization / batching -------------------------------

void split_dataset(MultiViewDataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be nonnegative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.labels.size(); ++i) by_class[ds.labels[i]].push_back(i);

  Rng rng(seed);
  ds.split.assign(ds.labels.size(), Split::Test);
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 3) {
      throw DataError("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                      " samples; stratified splitting needs at least 3");
    }
    rng.shuffle(idx);
    const double n = static_cast<double>(idx.size());
    auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * n));
    auto n_trval = static_cast<std::size_t>(std::llround((ratios[0] + ratios[1]) * n));
    n_train = std::max<std::size_t>(n_train, 1);
    n_trval = std::clamp(n_trval, n_train, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      ds.split[idx[k]] = k < n_train ? Split::Train : (k < n_trval ? Split::Val : Split::Test);
    }
  }
}

Matrix Standardizer::apply_view(std::size_t v, const Matrix& x) const {
  if (v >= mean.size() || x.cols() != mean[v].cols())
    throw DimensionError("standardizer: view " + std::to_string(v) + " width mismatch");
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = (out(i, j) - mean[v][j]) / std[v][j];
  return out;
}

void Standardizer::apply(MultiViewDataset& ds) const {
  for (std::size_t v = 0; v < ds.views.size(); ++v) ds.views[v] = apply_view(v, ds.views[v]);
}

Standardizer standardize_fit_apply(MultiViewDataset& ds) {
  std::vector<std::size_t> rows = ds.indices(Split::Train);
  if (ds.split.empty()) {
    rows.resize(ds.num_samples());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  }
  if (rows.empty()) throw DataError("standardize: train split is empty");
  Standardizer st;
  const double n = static_cast<double>(rows.size());
  for (const auto& x : ds.views) {
    Matrix mu(1, x.cols()), sd(1, x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r : rows) s += x(r, j);
      const double m = s / n;
      double s2 = 0.0;
      for (std::size_t r : rows) s2 += (x(r, j) - m) * (x(r, j) - m);
      mu[j] = m;
      sd[j] = std::max(std::sqrt(s2 / n), Standardizer::kStdFloor);
    }
    st.mean.push_back(std::move(mu));
    st.std.push_back(std::move(sd));
  }
  st.apply(ds);
  return st;
}

BatchIterator::BatchIterator(const MultiViewDataset& ds, Split split, std::size_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed)
    : ds_(&ds), order_(ds.indices(split)), batch_size_(batch_size) {
  if (batch_size_ == 0) throw ConfigError("batch size must be positive");
  if (order_.empty()) throw DataError("split '" + to_string(split) + "' is empty");
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order_);
  }
}

std::size_t BatchIterator::num_batches() const {
  const std::size_t full = order_.size() / batch_size_;
  return full + (order_.size() % batch_size_ >= 2 ? 1 : 0);
}

bool BatchIterator::next(MultiViewBatch& out) {
  const std::size_t remaining = order_.size() - pos_;
  if (remaining < 2) return false;
  const std::size_t take = std::min(batch_size_, remaining);
  std::vector<std::size_t> rows(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                order_.begin() + static_cast<std::ptrdiff_t>(pos_ + take));
  pos_ += take;
  out = make_batch(*ds_, rows);
  return true;
}

// ---- synthetic generator -----------------------------------------------

MultiViewDataset synth_generate(const SynthSpec& spec) {
  if (spec.num_views < 2) throw ConfigError("synth: need at least 2 views");
  if (spec.num_classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (spec.num_samples < 1) throw ConfigError("synth: need at least 1 sample");
  if (spec.latent_dim < 1) throw ConfigError("synth: latent_dim must be positive");
  const auto M = static_cast<std::size_t>(spec.num_views);
  const auto C = static_cast<std::size_t>(spec.num_classes);
  const auto n = static_cast<std::size_t>(spec.num_samples);
  const auto k = static_cast<std::size_t>(spec.latent_dim);
  std::vector<std::size_t> dims(M, 8);
  if (!spec.view_dims.empty()) {
    if (spec.view_dims.size() != M) throw ConfigError("synth: view_dims must list one width per view");
    for (std::size_t v = 0; v < M; ++v) {
      if (spec.view_dims[v] < 1) throw ConfigError("synth: view widths must be positive");
      dims[v] = static_cast<std::size_t>(spec.view_dims[v]);
    }
  }
  std::vector<bool> noise(M, false);
  for (int v : spec.noise_views) {
    if (v < 0 || static_cast<std::size_t>(v) >= M) throw ConfigError("synth: noise view index out of range");
    noise[static_cast<std::size_t>(v)] = true;
  }

  Rng rng(spec.seed);
  MultiViewDataset ds;
  ds.name = "synthetic";
  ds.num_classes = spec.num_classes;
  for (std::size_t v = 0; v < M; ++v) ds.view_names.push_back("view" + std::to_string(v));

  // Random linear maps latent → observed, one per view.
  std::vector<Matrix> maps;
  for (std::size_t v = 0; v < M; ++v) maps.push_back(rng.normal_matrix(dims[v], k, 1.0 / std::sqrt(double(k))));

  Matrix means(C, k);
  if (spec.mode == SynthMode::ClassMeans) {
    // Fixed pattern rescaled so the closest pair sits exactly `separation` apart.
    means = rng.normal_matrix(C, k);
    double min_dist = INFINITY;
    for (std::size_t a = 0; a < C; ++a)
      for (std::size_t b = a + 1; b < C; ++b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < k; ++j) d2 += (means(a, j) - means(b, j)) * (means(a, j) - means(b, j));
        min_dist = std::min(min_dist, std::sqrt(d2));
      }
    means *= spec.separation / std::max(min_dist, 1e-12);
  }

  std::vector<Matrix> latents(M, Matrix(n, k));
  ds.labels.resize(n);
  if (spec.mode == SynthMode::ClassMeans) {
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(rng.below(C));
    for (std::size_t v = 0; v < M; ++v)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double mu = noise[v] ? 0.0 : means(static_cast<std::size_t>(ds.labels[i]), j);
          latents[v](i, j) = mu + rng.normal();
        }
  } else {
    for (std::size_t v = 0; v < M; ++v) latents[v] = rng.normal_matrix(n, k);
    std::vector<double> product(n);
    for (std::size_t i = 0; i < n; ++i) product[i] = latents[0](i, 0) * latents[1](i, 0);
    // Class boundaries at empirical quantiles of the product.
    std::vector<double> sorted = product;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cuts;
    for (std::size_t c = 1; c < C; ++c) cuts.push_back(sorted[c * n / C]);
    for (std::size_t i = 0; i < n; ++i) {
      ds.labels[i] = static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), product[i]) - cuts.begin());
    }
  }

  for (std::size_t v = 0; v < M; ++v) {
    Matrix x(n, dims[v]);
    if (noise[v]) {
      for (double& e : x.values()) e = rng.normal();
    } else {
      x = matmul_nt(latents[v], maps[v]);
      for (double& e : x.values()) e += 0.1 * rng.normal();
    }
    ds.views.push_back(std::move(x));
  }
  return ds;
}

}  // namespace mvbi
