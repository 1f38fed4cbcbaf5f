#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "mvbi/data.hpp"

namespace mvbi::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericError = 4 };

int cmd_train(const std::optional<std::filesystem::path>& data, const std::optional<std::filesystem::path>& config,
              const std::optional<std::filesystem::path>& out, std::ostream& log);

int cmd_eval(const std::filesystem::path& model, const std::filesystem::path& data, const std::string& split,
             std::ostream& out, std::ostream& log);

/// Every op over `num_seeds` seeds starting at `seed`, plus the end-to-end check.
int cmd_gradcheck(std::uint64_t seed, int num_seeds, std::ostream& out, std::ostream& log);

int cmd_synth(const SynthSpec& spec, const std::filesystem::path& out, const std::string& format, std::ostream& log);

struct BaselineOptions {
  std::string method;  // cca | mvda | concat
  std::size_t r = 1;
  std::optional<double> ridge;
  std::size_t view_a = 0;
  std::size_t view_b = 1;
  int epochs = 50;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

int cmd_baseline(const BaselineOptions& opts, const std::filesystem::path& data, std::ostream& out,
                 std::ostream& log);

int cmd_sweep(const std::filesystem::path& data, const std::filesystem::path& grid,
              const std::optional<std::filesystem::path>& config, const std::filesystem::path& out,
              std::ostream& log);

/// Parses argv and dispatches to the commands above.
int run(int argc, char** argv);

}  // namespace mvbi::cli
