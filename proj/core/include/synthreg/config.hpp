#pragma once

#include "synthreg/adversary.hpp"
#include "synthreg/strategies.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace synthreg {

// JSON records. Unknown keys are rejected so that typos surface as errors;
// every failure is an Error of kind `parse`.

StrategyConfig strategy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StrategyConfig& config);

GeneratorSpec generator_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GeneratorSpec& spec);

/// Hazards are described as {"type": "constant", "rate": r} or
/// {"type": "logistic", "intercept": a, "slope": b}.
TimingSpec timing_from_json(const nlohmann::json& j);

/// regret_bound: regret against the strategy's theoretical bound (weighted
/// regret for weighted FTL). expected_loss: the pi-weighted loss inequality.
/// regret_at_most: regret <= limit, written {"regret_at_most": limit}.
enum class CheckKind { regret_bound, expected_loss, regret_at_most };

struct Check {
  CheckKind kind = CheckKind::regret_bound;
  double limit = 0.0;
};

struct ExperimentConfig {
  std::optional<GeneratorSpec> generator;
  std::optional<std::filesystem::path> panel_path;
  std::vector<StrategyConfig> strategies;
  TimingSpec timing;
  int replications = 1;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> report_path;
  std::optional<std::filesystem::path> curves_path;
  std::vector<Check> checks;
  bool adaptive = false;
};

/// Relative paths in the document resolve against `base_dir`.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace synthreg
