#include "synthreg/adversary.hpp"

#include "synthreg/random.hpp"
#include "synthreg/strategies.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace synthreg {

namespace {

constexpr std::array<std::pair<GeneratorKind, std::string_view>, 5> kGeneratorNames{{
    {GeneratorKind::iid_bounded, "iid_bounded"},
    {GeneratorKind::factor_model, "factor_model"},
    {GeneratorKind::piecewise_shift, "piecewise_shift"},
    {GeneratorKind::anti_fixed_theta, "anti_fixed_theta"},
    {GeneratorKind::ar1_clipped, "ar1_clipped"},
}};

constexpr std::array<std::pair<TimingKind, std::string_view>, 3> kTimingNames{{
    {TimingKind::uniform, "uniform"},
    {TimingKind::bounded_density, "bounded_density"},
    {TimingKind::hazard_regime, "hazard_regime"},
}};

// Streams: unit u (0 = treated) uses stream u; factors use kFactorStream + k.
constexpr std::uint64_t kFactorStream = 1ULL << 32;
constexpr std::uint64_t kLoadingStream = 1ULL << 33;

double clip(double v) { return std::clamp(v, -1.0, 1.0); }

Eigen::VectorXd unit_vector(Index n, Index i) { return Eigen::VectorXd::Unit(n, std::min(i, n - 1)); }

void check_simplex_vector(const std::optional<Eigen::VectorXd>& v, Index n, const char* name) {
  if (!v) return;
  if (v->size() != n) throw Error(ErrorKind::dimension_mismatch, std::string(name) + " must have N entries");
  validate(Weights{*v, std::nullopt});
}

Panel iid_bounded(const GeneratorSpec& s, const CounterRng& rng) {
  Eigen::VectorXd treated(s.periods);
  Eigen::MatrixXd controls(s.units, s.periods);
  for (Index t = 0; t < s.periods; ++t) {
    const auto c = static_cast<std::uint64_t>(t);
    treated[t] = rng.substream(0).uniform(c, -1.0, 1.0);
    for (Index i = 0; i < s.units; ++i) {
      controls(i, t) = rng.substream(static_cast<std::uint64_t>(i + 1)).uniform(c, -1.0, 1.0);
    }
  }
  return make_panel(std::move(treated), std::move(controls), 1.0);
}

Panel factor_model(const GeneratorSpec& s, const CounterRng& rng) {
  const Index units = s.units + 1;
  Eigen::MatrixXd loadings(units, s.rank);
  const double norm = s.rank > 0 ? 1.0 / std::sqrt(static_cast<double>(s.rank)) : 0.0;
  for (Index u = 0; u < units; ++u) {
    for (Index k = 0; k < s.rank; ++k) {
      loadings(u, k) = norm * rng.substream(kLoadingStream + static_cast<std::uint64_t>(u))
                                  .normal(static_cast<std::uint64_t>(k));
    }
  }
  Eigen::MatrixXd all(units, s.periods);
  Eigen::VectorXd f(s.rank);
  for (Index t = 0; t < s.periods; ++t) {
    const auto c = static_cast<std::uint64_t>(t);
    for (Index k = 0; k < s.rank; ++k) f[k] = rng.substream(kFactorStream + static_cast<std::uint64_t>(k)).normal(c);
    for (Index u = 0; u < units; ++u) {
      const double structure = s.rank > 0 ? s.scale * loadings.row(u).dot(f) : 0.0;
      const double e = s.noise > 0.0 ? s.noise * rng.substream(static_cast<std::uint64_t>(u)).normal(c) : 0.0;
      all(u, t) = clip(structure + e);
    }
  }
  return make_panel(all.row(0).transpose(), all.bottomRows(s.units), 1.0);
}

Panel piecewise_shift(const GeneratorSpec& s, const CounterRng& rng) {
  const Eigen::VectorXd a = s.theta_a.value_or(unit_vector(s.units, 0));
  const Eigen::VectorXd b = s.theta_b.value_or(unit_vector(s.units, 1));
  const Index shift = s.shift.value_or(s.periods / 2);
  Panel p = iid_bounded(s, rng);
  for (Index t = 0; t < s.periods; ++t) {
    p.treated[t] = clip((t < shift ? a : b).dot(p.controls.col(t)));
  }
  return p;
}

Panel ar1_clipped(const GeneratorSpec& s, const CounterRng& rng) {
  const Index units = s.units + 1;
  const double innovation = std::sqrt(std::max(0.0, 1.0 - s.ar * s.ar)) * s.noise;
  Eigen::MatrixXd all(units, s.periods);
  for (Index u = 0; u < units; ++u) {
    const CounterRng stream = rng.substream(static_cast<std::uint64_t>(u));
    // Start from the stationary distribution (before clipping).
    double state = s.noise * stream.normal(0);
    for (Index t = 0; t < s.periods; ++t) {
      if (t > 0) state = s.ar * state + innovation * stream.normal(static_cast<std::uint64_t>(t));
      state = clip(state);
      all(u, t) = state;
    }
  }
  return make_panel(all.row(0).transpose(), all.bottomRows(s.units), 1.0);
}

}  // namespace

std::string_view to_string(GeneratorKind kind) noexcept {
  for (const auto& [k, name] : kGeneratorNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<GeneratorKind> parse_generator_kind(std::string_view name) noexcept {
  for (const auto& [k, n] : kGeneratorNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(TimingKind kind) noexcept {
  for (const auto& [k, name] : kTimingNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<TimingKind> parse_timing_kind(std::string_view name) noexcept {
  for (const auto& [k, n] : kTimingNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

void validate(const GeneratorSpec& s) {
  if (s.units < 1) throw Error(ErrorKind::invalid_input, "generator needs N >= 1");
  if (s.periods < 1) throw Error(ErrorKind::invalid_input, "generator needs T >= 1");
  switch (s.kind) {
    case GeneratorKind::factor_model:
      if (s.rank < 0) throw Error(ErrorKind::invalid_input, "factor rank must be nonnegative");
      if (!(s.noise >= 0.0) || !(s.scale >= 0.0)) {
        throw Error(ErrorKind::invalid_input, "factor noise and scale must be nonnegative");
      }
      break;
    case GeneratorKind::piecewise_shift:
      if (s.shift && (*s.shift < 0 || *s.shift > s.periods)) {
        throw Error(ErrorKind::invalid_input, "shift must lie in [0, T]");
      }
      check_simplex_vector(s.theta_a, s.units, "theta_a");
      check_simplex_vector(s.theta_b, s.units, "theta_b");
      break;
    case GeneratorKind::anti_fixed_theta:
      if (s.units < 2) throw Error(ErrorKind::invalid_input, "anti_fixed_theta needs N >= 2");
      if (!(s.eps > 0.0 && s.eps < 1e-4)) throw Error(ErrorKind::invalid_input, "eps must lie in (0, 1e-4)");
      check_simplex_vector(s.theta, s.units, "theta");
      break;
    case GeneratorKind::ar1_clipped:
      if (!(std::abs(s.ar) < 1.0)) throw Error(ErrorKind::invalid_input, "ar coefficient must lie in (-1, 1)");
      if (!(s.noise >= 0.0)) throw Error(ErrorKind::invalid_input, "noise must be nonnegative");
      break;
    case GeneratorKind::iid_bounded:
      break;
  }
}

Panel generate_panel(const GeneratorSpec& spec) {
  validate(spec);
  const CounterRng rng(spec.seed, static_cast<std::uint64_t>(spec.kind));
  switch (spec.kind) {
    case GeneratorKind::iid_bounded:
      return iid_bounded(spec, rng);
    case GeneratorKind::factor_model:
      return factor_model(spec, rng);
    case GeneratorKind::piecewise_shift:
      return piecewise_shift(spec, rng);
    case GeneratorKind::anti_fixed_theta:
      return fixed_adversary_response(Weights{spec.theta.value_or(unit_vector(spec.units, 0)), std::nullopt},
                                      spec.eps, spec.periods);
    case GeneratorKind::ar1_clipped:
      return ar1_clipped(spec, rng);
  }
  throw Error(ErrorKind::invalid_input, "unknown generator kind");
}

double timing_constant(const Eigen::Ref<const Eigen::VectorXd>& pi) {
  if (pi.size() == 0) throw Error(ErrorKind::empty_panel, "timing vector is empty");
  const double T = static_cast<double>(pi.size());
  const double lo = pi.minCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return std::max({1.0, T * pi.maxCoeff(), 1.0 / (T * lo)});
}

HazardFn constant_hazard(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error(ErrorKind::invalid_input, "hazard rate must lie in [0, 1]");
  return [rate](Index, const Panel&) { return rate; };
}

HazardFn logistic_hazard(double intercept, double slope) {
  return [intercept, slope](Index t, const Panel& history) {
    const double x = t == 0 ? 0.0 : history.controls.col(t - 1).mean();
    return 1.0 / (1.0 + std::exp(-(intercept + slope * x)));
  };
}

Eigen::VectorXd generate_timing(const TimingSpec& spec, Index horizon, const Panel* panel) {
  if (horizon < 1) throw Error(ErrorKind::invalid_input, "horizon must be positive");
  if (!(spec.C >= 1.0)) throw Error(ErrorKind::invalid_input, "C must be at least 1");
  const double T = static_cast<double>(horizon);
  const double flat = 1.0 / T;
  switch (spec.kind) {
    case TimingKind::uniform:
      return Eigen::VectorXd::Constant(horizon, flat);
    case TimingKind::bounded_density: {
      const CounterRng rng(spec.seed, 0x7131);
      Eigen::VectorXd q(horizon);
      for (Index t = 0; t < horizon; ++t) q[t] = std::exp(spec.spread * rng.normal(static_cast<std::uint64_t>(t)));
      q /= q.sum();
      // Largest mixing weight toward q that keeps every pi_t in [1/(CT), C/T].
      double lambda = 1.0;
      for (Index t = 0; t < horizon; ++t) {
        if (q[t] > flat) lambda = std::min(lambda, (spec.C * flat - flat) / (q[t] - flat));
        if (q[t] < flat) lambda = std::min(lambda, (flat - flat / spec.C) / (flat - q[t]));
      }
      Eigen::VectorXd pi = (flat + lambda * (q.array() - flat)).matrix();
      return pi / pi.sum();
    }
    case TimingKind::hazard_regime: {
      if (!spec.hazard) throw Error(ErrorKind::invalid_input, "hazard_regime needs a hazard function");
      if (!panel || panel->periods() < horizon) {
        throw Error(ErrorKind::invalid_input, "hazard_regime needs the panel history");
      }
      Eigen::VectorXd pi(horizon);
      double survival = 1.0;
      Panel history;
      history.bound = panel->bound;
      for (Index t = 0; t < horizon; ++t) {
        // Built directly: the history before the first period is empty.
        history.treated = panel->treated.head(t);
        history.controls = panel->controls.leftCols(t);
        const double r = spec.hazard(t, history);
        if (!(r >= 0.0 && r <= 1.0)) {
          throw Error(ErrorKind::invalid_input, "hazard at t=" + std::to_string(t + 1) + " is outside [0, 1]");
        }
        pi[t] = survival * r;
        survival *= 1.0 - r;
      }
      const double total = pi.sum();
      if (!(total > 0.0)) throw Error(ErrorKind::invalid_input, "hazard never triggers treatment within T");
      return pi / total;
    }
  }
  throw Error(ErrorKind::invalid_input, "unknown timing kind");
}

Index sample_treatment_time(const Eigen::Ref<const Eigen::VectorXd>& pi, std::uint64_t seed, std::uint64_t draw) {
  if (pi.size() == 0) throw Error(ErrorKind::invalid_input, "empty timing distribution");
  const double total = pi.sum();
  const double u = CounterRng(seed, 0x5a3).uniform(draw) * total;
  double cumulative = 0.0;
  for (Index t = 0; t < pi.size(); ++t) {
    cumulative += pi[t];
    if (u < cumulative) return t + 1;
  }
  // Rounding can leave u just above the last partial sum.
  Index last = pi.size() - 1;
  while (last > 0 && pi[last] <= 0.0) --last;
  return last + 1;
}

}  // namespace synthreg
