#pragma once

#include "synthreg/panel.hpp"
#include "synthreg/strategies.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace synthreg::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2 };

struct SimulateOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 0;  // 0: hardware concurrency
  std::optional<std::filesystem::path> out;
};

struct FitOptions {
  std::filesystem::path panel;
  std::string strategy = "ftl";
  std::optional<std::filesystem::path> out;
};

struct TestOptions {
  std::filesystem::path panel;
  std::string strategy = "ftl";
  Index treatment_period = 0;
  double alpha = 0.05;
  double c_bound = 1.0;
  std::optional<std::filesystem::path> null_effects;
  std::optional<std::filesystem::path> out;
};

struct BoundsOptions {
  std::string kind;
  Index n = 0;
  Index t = 0;
  double c = 1.0;
  double k = 0.5;
  std::optional<double> hazan_n;
  std::optional<double> r;
  double a = 1.0;
  double b = 4.0;
  double d = 2.0;
};

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err);
int cmd_fit(const FitOptions& opts, std::ostream& out, std::ostream& err);
int cmd_test(const TestOptions& opts, std::ostream& out, std::ostream& err);
int cmd_bounds(const BoundsOptions& opts, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// A --strategy value: a path to a JSON file, inline JSON, or a bare kind name.
StrategyConfig parse_strategy_arg(const std::string& text);

/// One effect per period, one value per line; a non-numeric first line is a header.
Eigen::VectorXd read_vector_file(const std::filesystem::path& path);

/// Seed from SYNTHREG_SEED, if set and valid.
std::optional<std::uint64_t> env_seed();

}  // namespace synthreg::cli
