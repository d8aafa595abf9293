#pragma once

#include "synthreg/panel.hpp"
#include "synthreg/simplex.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>

namespace synthreg {

enum class GeneratorKind { iid_bounded, factor_model, piecewise_shift, anti_fixed_theta, ar1_clipped };

std::string_view to_string(GeneratorKind kind) noexcept;
std::optional<GeneratorKind> parse_generator_kind(std::string_view name) noexcept;

/// Panel generator parameters. Every output is clipped to [-1, 1] last.
///   iid_bounded:      every entry U[-1, 1]
///   factor_model:     y_it = scale * lambda_i'f_t + noise * e_it, rank-r normal factors
///   piecewise_shift:  iid controls; y0_t = theta_a'y_t up to `shift`, theta_b'y_t after
///   anti_fixed_theta: fixed_adversary_response(theta, eps, T)
///   ar1_clipped:      y_it = ar * y_i,t-1 + sqrt(1 - ar^2) * noise * e_it
struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::iid_bounded;
  Index units = 2;
  Index periods = 50;
  std::uint64_t seed = 0;

  Index rank = 2;
  double noise = 0.1;
  double scale = 0.5;

  /// 1-based last period of regime A; defaults to T/2.
  std::optional<Index> shift;
  std::optional<Eigen::VectorXd> theta_a;  // default e_1
  std::optional<Eigen::VectorXd> theta_b;  // default e_2 (e_1 when N = 1)

  std::optional<Eigen::VectorXd> theta;  // anti_fixed_theta target, default e_1
  double eps = 5e-5;

  double ar = 0.8;
};

void validate(const GeneratorSpec& spec);

/// Deterministic in the spec. Entry (unit, period) draws from its own counter,
/// so a shorter horizon with the same seed yields a prefix of a longer one.
Panel generate_panel(const GeneratorSpec& spec);

/// Treatment hazard r_t evaluated on the panel restricted to periods before t
/// (0-based t; `history.periods() == t`).
using HazardFn = std::function<double(Index t, const Panel& history)>;

enum class TimingKind { uniform, bounded_density, hazard_regime };

std::string_view to_string(TimingKind kind) noexcept;
std::optional<TimingKind> parse_timing_kind(std::string_view name) noexcept;

/// Distribution of the treatment period S.
///   uniform:         pi_t = 1/T
///   bounded_density: a random density shrunk toward uniform just enough that
///                    1/(CT) <= pi_t <= C/T
///   hazard_regime:   pi_t = r_t prod_{s<t} (1 - r_s), truncated at T and renormalized
struct TimingSpec {
  TimingKind kind = TimingKind::uniform;
  double C = 1.0;
  std::uint64_t seed = 0;
  /// Log-normal spread of the raw density in bounded_density.
  double spread = 1.0;
  HazardFn hazard;
};

Eigen::VectorXd generate_timing(const TimingSpec& spec, Index horizon, const Panel* panel = nullptr);

/// Smallest C >= 1 with 1/(CT) <= pi_t <= C/T for every t; infinity when
/// some pi_t is zero.
double timing_constant(const Eigen::Ref<const Eigen::VectorXd>& pi);

/// Constant hazard r.
HazardFn constant_hazard(double rate);
/// Logistic hazard in the previous period's mean control outcome:
/// r_t = 1 / (1 + exp(-(intercept + slope * mean(y_{t-1})))), r_1 uses mean 0.
HazardFn logistic_hazard(double intercept, double slope);

/// Inverse-CDF draw of a 1-based treatment period.
Index sample_treatment_time(const Eigen::Ref<const Eigen::VectorXd>& pi, std::uint64_t seed,
                            std::uint64_t draw = 0);

}  // namespace synthreg
