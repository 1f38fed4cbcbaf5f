#include "mvbi/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvbi/baselines.hpp"
#include "mvbi/checkpoint.hpp"
#include "mvbi/error.hpp"
#include "mvbi/grad_check.hpp"
#include "mvbi/trainer.hpp"

namespace mvbi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kOpTolerance = 1e-5;
constexpr double kEndToEndTolerance = 1e-4;

int guarded(std::ostream& log, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    log << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const DimensionError& e) {
    log << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    log << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const fs::filesystem_error& e) {
    log << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const json::exception& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  }
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json read_json_file(const fs::path& p, const char* what) {
  std::ifstream in(p);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " " + p.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + " " + p.string() + " is not valid JSON: " + e.what());
  }
}

void write_alpha_csv(const fs::path& p, const std::vector<double>& alpha) {
  std::ofstream out(p);
  out << "view_index,weight\n";
  for (std::size_t v = 0; v < alpha.size(); ++v) out << v << ',' << fmt_double(alpha[v]) << '\n';
}

json epoch_json(const EpochReport& r) {
  json j = to_json(r);
  // Wall time goes to the log only so metrics files are reproducible.
  j.erase("wall_seconds");
  return j;
}

}  // namespace

int cmd_train(const std::optional<fs::path>& data, const std::optional<fs::path>& config,
              const std::optional<fs::path>& out, std::ostream& log) {
  return guarded(log, [&] {
    json raw = config ? read_json_file(*config, "config") : json::object();
    if (!raw.is_object()) throw ConfigError("config must be a JSON object");
    std::optional<fs::path> data_dir = data;
    std::optional<fs::path> out_dir = out;
    if (raw.contains("data")) {
      if (!data_dir) data_dir = raw.at("data").get<std::string>();
      raw.erase("data");
    }
    if (raw.contains("out")) {
      if (!out_dir) out_dir = raw.at("out").get<std::string>();
      raw.erase("out");
    }
    if (!data_dir) throw ConfigError("no dataset given (--data or \"data\" in the config)");
    if (!out_dir) throw ConfigError("no output directory given (--out or \"out\" in the config)");
    TrainConfig cfg = config_from_json(raw);

    MultiViewDataset ds = load_dataset(*data_dir);
    const int M = static_cast<int>(ds.num_views());
    cfg.s = cfg.sparsity(M);
    cfg.validate_for(M);
    std::optional<Standardizer> st = prepare_dataset(ds, cfg);

    fs::create_directories(*out_dir);
    json resolved = to_json(cfg);
    resolved["data"] = fs::absolute(*data_dir).string();
    resolved["out"] = fs::absolute(*out_dir).string();
    std::ofstream(*out_dir / "resolved_config.json") << resolved.dump(2) << '\n';

    FitResult res = fit(cfg, ds);

    std::ofstream metrics(*out_dir / "metrics.jsonl");
    std::ofstream history(*out_dir / "alpha_history.csv");
    history << "epoch,view_index,weight\n";
    for (const EpochReport& r : res.history) {
      metrics << epoch_json(r).dump() << '\n';
      for (std::size_t v = 0; v < r.alpha.size(); ++v)
        history << r.epoch << ',' << v << ',' << fmt_double(r.alpha[v]) << '\n';
      log << "epoch=" << r.epoch << " fused_objective=" << r.fused_objective << " val_top1=" << r.val_top1
          << " val_top5=" << r.val_top5 << " seconds=" << r.wall_seconds << '\n';
    }
    write_alpha_csv(*out_dir / "alpha.csv", res.weights.alpha);

    Checkpoint ck{std::move(res.model), res.weights, cfg.predict_weighting, st, cfg.seed, cfg.split_ratios};
    save_checkpoint(*out_dir / "model.ckpt", ck);
    log << "best_epoch=" << res.best_epoch << '\n';
    if (res.aborted) {
      log << "numeric error: " << res.error << " (best checkpoint so far was written)\n";
      return static_cast<int>(kNumericError);
    }
    return static_cast<int>(kOk);
  });
}

int cmd_eval(const fs::path& model, const fs::path& data, const std::string& split, std::ostream& out,
             std::ostream& log) {
  return guarded(log, [&] {
    const Split which = split_from_string(split);
    Checkpoint ck = load_checkpoint(model);
    MultiViewDataset ds = load_dataset(data);
    const ModelSpec& spec = ck.model.spec();
    if (ds.num_views() != spec.num_views) {
      throw DataError("checkpoint expects " + std::to_string(spec.num_views) + " views, dataset has " +
                      std::to_string(ds.num_views()));
    }
    const auto dims = ds.view_dims();
    for (std::size_t v = 0; v < dims.size(); ++v) {
      if (dims[v] != spec.view_dims[v]) {
        throw DataError("view " + std::to_string(v) + ": checkpoint expects width " +
                        std::to_string(spec.view_dims[v]) + ", dataset has " + std::to_string(dims[v]));
      }
    }
    if (static_cast<std::size_t>(ds.num_classes) != spec.num_classes) {
      throw DataError("checkpoint expects " + std::to_string(spec.num_classes) + " classes, dataset has " +
                      std::to_string(ds.num_classes));
    }
    if (ds.split.empty()) split_dataset(ds, ck.split_ratios, ck.split_seed);
    if (ck.standardizer) ck.standardizer->apply(ds);

    const TopK acc = evaluate(ck.model, ck.weights, ds, which, ck.predict_weighting);
    const std::vector<double> losses = split_view_losses(ck.model, ds, which);
    json j{{"split", split}, {"top1", acc.top1}, {"top5", acc.topk}, {"k", acc.k},
           {"per_view_losses", losses}, {"alpha", ck.weights.alpha}};
    out << j.dump() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_gradcheck(std::uint64_t seed, int num_seeds, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    if (num_seeds < 1) throw ConfigError("--seeds must be >= 1");
    bool ok = true;
    for (GradOp op : all_grad_ops()) {
      double worst = 0.0;
      for (int k = 0; k < num_seeds; ++k) worst = std::max(worst, grad_check(op, seed + static_cast<std::uint64_t>(k)).max_error);
      const bool pass = worst <= kOpTolerance;
      ok = ok && pass;
      out << json{{"check", grad_op_name(op)}, {"max_error", worst}, {"tolerance", kOpTolerance}, {"pass", pass}}.dump()
          << '\n';
    }
    const GradCheckResult e2e = end_to_end_grad_check(seed);
    const bool pass = e2e.max_error <= kEndToEndTolerance;
    ok = ok && pass;
    out << json{{"check", e2e.name}, {"max_error", e2e.max_error}, {"tolerance", kEndToEndTolerance}, {"pass", pass}}
               .dump()
        << '\n';
    return ok ? static_cast<int>(kOk) : static_cast<int>(kNumericError);
  });
}

int cmd_synth(const SynthSpec& spec, const fs::path& out, const std::string& format, std::ostream& log) {
  return guarded(log, [&] {
    const MultiViewDataset ds = synth_generate(spec);
    save_dataset(ds, out, format);
    log << "wrote " << ds.num_samples() << " samples, " << ds.num_views() << " views to " << out.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_baseline(const BaselineOptions& opts, const fs::path& data, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    MultiViewDataset ds = load_dataset(data);
    TrainConfig prep;
    prep.seed = opts.seed;
    prepare_dataset(ds, prep);
    json j{{"method", opts.method}};
    if (opts.method == "cca") {
      if (opts.view_a >= ds.num_views() || opts.view_b >= ds.num_views() || opts.view_a == opts.view_b)
        throw ConfigError("cca: --view-a/--view-b must name two distinct views");
      const auto rows = ds.indices(Split::Train);
      const CcaSolution sol = cca_fit(gather_rows(ds.views[opts.view_a], rows),
                                      gather_rows(ds.views[opts.view_b], rows), opts.r, opts.ridge.value_or(1e-4));
      j["r"] = opts.r;
      j["views"] = {opts.view_a, opts.view_b};
      j["correlations"] = sol.correlations;
    } else if (opts.method == "mvda") {
      const MvdaSolution sol = mvda_fit(ds, opts.r, opts.ridge.value_or(1e-6));
      j["r"] = opts.r;
      j["objective"] = sol.objective;
      j["eigenvalues"] = sol.eigenvalues;
      j["solver"] = "ratio-trace relaxation (generalized eigenproblem)";
      // Nearest class mean in the common space, projections averaged over views.
      const auto train = ds.indices(Split::Train);
      const auto test = ds.indices(Split::Test);
      const auto C = static_cast<std::size_t>(ds.num_classes);
      auto project = [&](std::size_t row) {
        Matrix y(1, opts.r);
        for (std::size_t v = 0; v < ds.num_views(); ++v) {
          y += matmul(slice_rows(ds.views[v], row, 1), sol.w[v]);
        }
        return y * (1.0 / static_cast<double>(ds.num_views()));
      };
      Matrix centroid(C, opts.r);
      std::vector<double> count(C, 0.0);
      for (std::size_t row : train) {
        const auto k = static_cast<std::size_t>(ds.labels[row]);
        const Matrix y = project(row);
        for (std::size_t c = 0; c < opts.r; ++c) centroid(k, c) += y[c];
        count[k] += 1.0;
      }
      for (std::size_t k = 0; k < C; ++k)
        for (std::size_t c = 0; c < opts.r; ++c) centroid(k, c) /= std::max(count[k], 1.0);
      std::size_t hit1 = 0, hitk = 0;
      const std::size_t topk = std::min<std::size_t>(5, C);
      for (std::size_t row : test) {
        const Matrix y = project(row);
        std::vector<double> dist(C);
        for (std::size_t k = 0; k < C; ++k)
          for (std::size_t c = 0; c < opts.r; ++c) dist[k] += (y[c] - centroid(k, c)) * (y[c] - centroid(k, c));
        const auto t = static_cast<std::size_t>(ds.labels[row]);
        std::size_t ahead = 0;
        for (std::size_t k = 0; k < C; ++k)
          if (dist[k] < dist[t] || (dist[k] == dist[t] && k < t)) ++ahead;
        hit1 += ahead == 0;
        hitk += ahead < topk;
      }
      j["test_top1"] = static_cast<double>(hit1) / static_cast<double>(test.size());
      j["test_top5"] = static_cast<double>(hitk) / static_cast<double>(test.size());
    } else if (opts.method == "concat") {
      const ConcatSoftmaxResult res = concat_softmax_fit(ds, {opts.epochs, opts.lr, 64, opts.seed});
      j["classifier"] = "multinomial softmax regression on concatenated views";
      j["test_top1"] = res.test.top1;
      j["test_top5"] = res.test.topk;
    } else {
      throw ConfigError("unknown baseline method '" + opts.method + "' (expected cca|mvda|concat)");
    }
    out << j.dump() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_sweep(const fs::path& data, const fs::path& grid, const std::optional<fs::path>& config, const fs::path& out,
              std::ostream& log) {
  return guarded(log, [&] {
    const TrainConfig base = config ? load_config(config->string()) : TrainConfig{};
    const json g = read_json_file(grid, "grid");
    if (!g.is_object()) throw ConfigError("grid must be a JSON object");
    for (const auto& [key, _] : g.items()) {
      if (key != "gamma" && key != "s" && key != "d_B") throw ConfigError("unknown grid key '" + key + "'");
    }
    MultiViewDataset ds = load_dataset(data);
    const int M = static_cast<int>(ds.num_views());
    prepare_dataset(ds, base);

    auto values = [&](const char* key, auto fallback) {
      using T = decltype(fallback);
      if (!g.contains(key)) return std::vector<T>{fallback};
      try {
        return g.at(key).get<std::vector<T>>();
      } catch (const json::exception& e) {
        throw ConfigError(std::string("grid key '") + key + "' must be a list: " + e.what());
      }
    };
    const auto gammas = values("gamma", base.gamma);
    const auto ss = values("s", base.sparsity(M));
    const auto dbs = values("d_B", base.d_B);

    struct Cell {
      double gamma;
      int s, d_B;
      double top1, top5;
      int best_epoch;
    };
    std::vector<Cell> cells;
    for (double gamma : gammas)
      for (int s : ss)
        for (int db : dbs) {
          TrainConfig cfg = base;
          cfg.gamma = gamma;
          cfg.s = s;
          cfg.d_B = db;
          cfg.validate_for(M);
          const FitResult r = fit(cfg, ds);
          const EpochReport* best = nullptr;
          for (const auto& e : r.history)
            if (e.epoch == r.best_epoch) best = &e;
          cells.push_back({gamma, s, db, best ? best->val_top1 : 0.0, best ? best->val_top5 : 0.0, r.best_epoch});
          log << "gamma=" << gamma << " s=" << s << " d_B=" << db << " val_top1=" << cells.back().top1 << '\n';
        }

    std::size_t best_idx = 0;
    for (std::size_t i = 1; i < cells.size(); ++i)
      if (cells[i].top1 > cells[best_idx].top1) best_idx = i;
    fs::create_directories(out);
    std::ofstream csv(out / "sweep.csv");
    csv << "gamma,s,d_B,val_top1,val_top5,best_epoch,best\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Cell& c = cells[i];
      csv << fmt_double(c.gamma) << ',' << c.s << ',' << c.d_B << ',' << fmt_double(c.top1) << ','
          << fmt_double(c.top5) << ',' << c.best_epoch << ',' << (i == best_idx ? 1 : 0) << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-view classification with bilinear view interaction and sparse view weighting"};
  app.require_subcommand(1);

  std::string data, config, out, model, split = "test", grid, format = "mvbin", mode = "means";
  std::uint64_t seed = 0;
  int seeds = 100;

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", data, "dataset directory");
  train->add_option("--config", config, "JSON run configuration");
  train->add_option("--out", out, "output directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--model", model, "checkpoint file")->required();
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--split", split, "train|val|test");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc->add_option("--seed", seed, "first seed");
  gc->add_option("--seeds", seeds, "number of seeds per op");

  SynthSpec synth;
  int noise_count = 0;
  std::vector<int> dims;
  auto* sy = app.add_subcommand("synth", "write a synthetic dataset");
  sy->add_option("--out", out, "output directory")->required();
  sy->add_option("--views", synth.num_views, "number of views");
  sy->add_option("--classes", synth.num_classes, "number of classes");
  sy->add_option("--samples", synth.num_samples, "number of samples");
  sy->add_option("--noise-views", noise_count, "number of trailing pure-noise views");
  sy->add_option("--seed", synth.seed, "generator seed");
  sy->add_option("--dims", dims, "per-view widths")->delimiter(',');
  sy->add_option("--separation", synth.separation, "class-mean separation in noise sigmas");
  sy->add_option("--latent-dim", synth.latent_dim, "latent dimension");
  sy->add_option("--mode", mode, "means|product")->check(CLI::IsMember({"means", "product"}));
  sy->add_option("--format", format, "mvbin|csv")->check(CLI::IsMember({"mvbin", "csv"}));

  BaselineOptions bopts;
  double ridge = -1.0;
  auto* bl = app.add_subcommand("baseline", "run a linear baseline");
  bl->add_option("--method", bopts.method, "cca|mvda|concat")->required();
  bl->add_option("--data", data, "dataset directory")->required();
  bl->add_option("--r", bopts.r, "number of projection directions");
  bl->add_option("--ridge", ridge, "ridge scale relative to trace/dim");
  bl->add_option("--view-a", bopts.view_a, "first view (cca)");
  bl->add_option("--view-b", bopts.view_b, "second view (cca)");
  bl->add_option("--epochs", bopts.epochs, "epochs (concat)");
  bl->add_option("--lr", bopts.lr, "learning rate (concat)");
  bl->add_option("--seed", bopts.seed, "split/shuffle seed");

  auto* sw = app.add_subcommand("sweep", "grid over gamma, s and d_B");
  sw->add_option("--data", data, "dataset directory")->required();
  sw->add_option("--grid", grid, "JSON grid file")->required();
  sw->add_option("--config", config, "base JSON configuration");
  sw->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(kConfigError);
  }

  auto opt_path = [](const std::string& s) { return s.empty() ? std::optional<fs::path>{} : fs::path(s); };
  if (*train) return cmd_train(opt_path(data), opt_path(config), opt_path(out), std::cerr);
  if (*eval) return cmd_eval(model, data, split, std::cout, std::cerr);
  if (*gc) return cmd_gradcheck(seed, seeds, std::cout, std::cerr);
  if (*sy) {
    if (noise_count < 0 || noise_count > synth.num_views) {
      std::cerr << "config error: --noise-views must lie in [0, views]\n";
      return kConfigError;
    }
    for (int v = synth.num_views - noise_count; v < synth.num_views; ++v) synth.noise_views.push_back(v);
    synth.view_dims = dims;
    synth.mode = mode == "product" ? SynthMode::Product : SynthMode::ClassMeans;
    return cmd_synth(synth, out, format, std::cerr);
  }
  if (*bl) {
    if (ridge >= 0.0) bopts.ridge = ridge;
    return cmd_baseline(bopts, data, std::cout, std::cerr);
  }
  if (*sw) return cmd_sweep(data, grid, opt_path(config), out, std::cerr);
  return kConfigError;
}

}  // namespace mvbi::cli
