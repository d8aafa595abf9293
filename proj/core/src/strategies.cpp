#include "synthreg/strategies.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace synthreg {

namespace {

constexpr std::array<std::pair<StrategyKind, std::string_view>, 10> kKindNames{{
    {StrategyKind::ftl, "ftl"},
    {StrategyKind::weighted_ftl, "weighted_ftl"},
    {StrategyKind::ftrl, "ftrl"},
    {StrategyKind::differenced_sc, "differenced_sc"},
    {StrategyKind::demeaned_sc, "demeaned_sc"},
    {StrategyKind::first_diff_sc, "first_diff_sc"},
    {StrategyKind::fixed_weights, "fixed_weights"},
    {StrategyKind::uniform_did, "uniform_did"},
    {StrategyKind::twfe_fixed_w, "twfe_fixed_w"},
    {StrategyKind::flh, "flh"},
}};

// FTL / weighted FTL / FTRL on levels.
class LevelLeader final : public Strategy {
 public:
  LevelLeader(StrategyKind kind, Index units, Index horizon, std::optional<PenaltySpec> penalty, double scale,
              LossKind loss, std::optional<Eigen::VectorXd> timing)
      : Strategy(units),
        kind_(kind),
        stats_(units),
        penalty_(std::move(penalty)),
        scale_(scale),
        loss_(loss),
        timing_(std::move(timing)) {
    if (loss_ == LossKind::absolute) {
      targets_.resize(horizon);
      regressors_.resize(units, horizon);
      sample_weights_.resize(horizon);
    }
  }

  StrategyKind kind() const noexcept override { return kind_; }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<LevelLeader>(*this); }

 protected:
  Prediction do_predict(const Eigen::VectorXd& controls) override {
    if (!current_) current_ = solve();
    return {*current_, current_->predict(controls)};
  }

  void do_update(double treated, const Eigen::VectorXd& controls) override {
    const double weight = timing_ ? (*timing_)[observed()] : 1.0;
    if (loss_ == LossKind::absolute) {
      const Index s = observed();
      if (s >= targets_.size()) {
        const Index grow = std::max<Index>(2 * targets_.size(), 16);
        targets_.conservativeResize(grow);
        regressors_.conservativeResize(Eigen::NoChange, grow);
        sample_weights_.conservativeResize(grow);
      }
      targets_[s] = treated;
      regressors_.col(s) = controls;
      sample_weights_[s] = weight;
    } else {
      stats_.add(treated, controls, weight);
    }
    if (current_) warm_ = std::move(current_);
    current_.reset();
  }

 private:
  Weights solve() const {
    SolveOptions opt;
    opt.penalty = penalty_;
    opt.loss_scale = scale_;
    opt.warm_start = warm_;
    if (loss_ == LossKind::absolute) {
      const Index s = observed();
      return solve_simplex_absolute(targets_.head(s), regressors_.leftCols(s), sample_weights_.head(s), opt)
          .weights;
    }
    return solve_simplex_ls(stats_, opt).weights;
  }

  StrategyKind kind_;
  LeastSquaresStats stats_;
  std::optional<PenaltySpec> penalty_;
  double scale_;
  LossKind loss_;
  std::optional<Eigen::VectorXd> timing_;
  Eigen::VectorXd targets_;
  Eigen::MatrixXd regressors_;
  Eigen::VectorXd sample_weights_;
  std::optional<Weights> current_;
  std::optional<Weights> warm_;
};

// Synthetic control on data differenced against historical means.
class DifferencedLeader final : public Strategy {
 public:
  explicit DifferencedLeader(Index units)
      : Strategy(units), stats_(units), control_sums_(Eigen::VectorXd::Zero(units)) {}

  StrategyKind kind() const noexcept override { return StrategyKind::differenced_sc; }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<DifferencedLeader>(*this); }

 protected:
  Prediction do_predict(const Eigen::VectorXd& controls) override {
    if (!current_) {
      SolveOptions opt;
      opt.warm_start = warm_;
      current_ = solve_simplex_ls(stats_, opt).weights;
    }
    return {*current_, offset() + current_->theta.dot(differenced(controls))};
  }

  void do_update(double treated, const Eigen::VectorXd& controls) override {
    stats_.add(treated - offset(), differenced(controls));
    treated_sum_ += treated;
    control_sums_ += controls;
    if (current_) warm_ = std::move(current_);
    current_.reset();
  }

 private:
  double offset() const {
    return observed() == 0 ? 0.0 : treated_sum_ / static_cast<double>(observed());
  }
  Eigen::VectorXd differenced(const Eigen::VectorXd& controls) const {
    if (observed() == 0) return controls;
    return controls - control_sums_ / static_cast<double>(observed());
  }

  LeastSquaresStats stats_;
  double treated_sum_ = 0.0;
  Eigen::VectorXd control_sums_;
  std::optional<Weights> current_;
  std::optional<Weights> warm_;
};

// Synthetic control with a bounded intercept.
class DemeanedLeader final : public Strategy {
 public:
  explicit DemeanedLeader(Index units) : Strategy(units), stats_(units + 1), row_(units + 1) { row_[0] = 1.0; }

  StrategyKind kind() const noexcept override { return StrategyKind::demeaned_sc; }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<DemeanedLeader>(*this); }

 protected:
  Prediction do_predict(const Eigen::VectorXd& controls) override {
    if (!current_) {
      SolveOptions opt;
      opt.warm_start = warm_;
      current_ = solve_affine_ls(stats_, opt).weights;
    }
    return {*current_, current_->predict(controls)};
  }

  void do_update(double treated, const Eigen::VectorXd& controls) override {
    row_.tail(units()) = controls;
    stats_.add(treated, row_);
    if (current_) warm_ = std::move(current_);
    current_.reset();
  }

 private:
  LeastSquaresStats stats_;
  Eigen::VectorXd row_;
  std::optional<Weights> current_;
  std::optional<Weights> warm_;
};

// Synthetic control on first differences; the first period keeps its level.
class FirstDiffLeader final : public Strategy {
 public:
  explicit FirstDiffLeader(Index units)
      : Strategy(units), stats_(units), previous_controls_(Eigen::VectorXd::Zero(units)) {}

  StrategyKind kind() const noexcept override { return StrategyKind::first_diff_sc; }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<FirstDiffLeader>(*this); }

 protected:
  Prediction do_predict(const Eigen::VectorXd& controls) override {
    if (!current_) {
      SolveOptions opt;
      opt.warm_start = warm_;
      current_ = solve_simplex_ls(stats_, opt).weights;
    }
    return {*current_, previous_treated_ + current_->theta.dot(controls - previous_controls_)};
  }

  void do_update(double treated, const Eigen::VectorXd& controls) override {
    stats_.add(treated - previous_treated_, controls - previous_controls_);
    previous_treated_ = treated;
    previous_controls_ = controls;
    if (current_) warm_ = std::move(current_);
    current_.reset();
  }

 private:
  LeastSquaresStats stats_;
  double previous_treated_ = 0.0;
  Eigen::VectorXd previous_controls_;
  std::optional<Weights> current_;
  std::optional<Weights> warm_;
};

class FixedWeights final : public Strategy {
 public:
  explicit FixedWeights(Weights w) : Strategy(w.theta.size()), w_(std::move(w)) {}

  StrategyKind kind() const noexcept override { return StrategyKind::fixed_weights; }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<FixedWeights>(*this); }

 protected:
  Prediction do_predict(const Eigen::VectorXd& controls) override { return {w_, w_.predict(controls)}; }
  void do_update(double, const Eigen::VectorXd&) override {}

 private:
  Weights w_;
};

// Weighted TWFE forecast with fixed unit weights, kept as running sums.
class FixedTwfe final : public Strategy {
 public:
  FixedTwfe(StrategyKind kind, Weights w)
      : Strategy(w.theta.size()), kind_(kind), w_(std::move(w)), control_sums_(Eigen::VectorXd::Zero(units())) {}

  StrategyKind kind() const noexcept override { return kind_; }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<FixedTwfe>(*this); }

 protected:
  Prediction do_predict(const Eigen::VectorXd& controls) override {
    if (observed() == 0) return {w_, w_.theta.dot(controls)};
    const double n = static_cast<double>(observed());
    return {w_, treated_sum_ / n + w_.theta.dot(controls - control_sums_ / n)};
  }

  void do_update(double treated, const Eigen::VectorXd& controls) override {
    treated_sum_ += treated;
    control_sums_ += controls;
  }

 private:
  StrategyKind kind_;
  Weights w_;
  double treated_sum_ = 0.0;
  Eigen::VectorXd control_sums_;
};

class LeadingHistory final : public Strategy {
 public:
  LeadingHistory(StrategyConfig base, Index units, Index horizon, double alpha)
      : Strategy(units), base_(std::move(base)), horizon_(horizon), weights_(alpha) {
    experts_.push_back(make_strategy(base_, units, horizon_));
  }

  LeadingHistory(const LeadingHistory& other)
      : Strategy(other), base_(other.base_), horizon_(other.horizon_), weights_(other.weights_),
        expert_predictions_(other.expert_predictions_) {
    experts_.reserve(other.experts_.size());
    for (const auto& e : other.experts_) experts_.push_back(e->clone());
  }

  StrategyKind kind() const noexcept override { return StrategyKind::flh; }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<LeadingHistory>(*this); }

  const FlhWeights& weights() const noexcept { return weights_; }

 protected:
  Prediction do_predict(const Eigen::VectorXd& controls) override {
    const Eigen::VectorXd p = weights_.probs();
    expert_predictions_.resize(static_cast<Index>(experts_.size()));
    Prediction out;
    out.weights.theta = Eigen::VectorXd::Zero(units());
    double intercept = 0.0;
    bool has_intercept = false;
    for (std::size_t j = 0; j < experts_.size(); ++j) {
      const Prediction e = experts_[j]->predict(controls);
      const auto jj = static_cast<Index>(j);
      expert_predictions_[jj] = e.value;
      out.weights.theta += p[jj] * e.weights.theta;
      if (e.weights.intercept) {
        has_intercept = true;
        intercept += p[jj] * *e.weights.intercept;
      }
      out.value += p[jj] * e.value;
    }
    if (has_intercept) out.weights.intercept = intercept;
    return out;
  }

  void do_update(double treated, const Eigen::VectorXd& controls) override {
    if (expert_predictions_.size() != static_cast<Index>(experts_.size())) do_predict(controls);
    const Eigen::VectorXd losses = 0.5 * (treated - expert_predictions_.array()).square().matrix();
    weights_.step(losses);
    for (auto& e : experts_) e->update(treated, controls);
    experts_.push_back(make_strategy(base_, units(), horizon_));
    expert_predictions_.resize(0);
  }

 private:
  StrategyConfig base_;
  Index horizon_;
  FlhWeights weights_;
  std::vector<std::unique_ptr<Strategy>> experts_;
  Eigen::VectorXd expert_predictions_;
};

Weights checked_weights(const StrategyConfig& config, Index units) {
  if (!config.weights) {
    throw Error(ErrorKind::invalid_input, std::string(to_string(config.kind)) + " needs fixed weights");
  }
  if (config.weights->size() != units) {
    throw Error(ErrorKind::dimension_mismatch, "fixed weights have " + std::to_string(config.weights->size()) +
                                                   " entries for " + std::to_string(units) + " controls");
  }
  Weights w{*config.weights, std::nullopt};
  validate(w);
  return w;
}

}  // namespace

std::string_view to_string(StrategyKind kind) noexcept {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<StrategyKind> parse_strategy_kind(std::string_view name) noexcept {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

void Strategy::check(const Eigen::Ref<const Eigen::VectorXd>& controls) const {
  if (controls.size() != units_) {
    throw Error(ErrorKind::dimension_mismatch, "strategy expects " + std::to_string(units_) + " controls, got " +
                                                   std::to_string(controls.size()));
  }
}

Prediction Strategy::predict(const Eigen::Ref<const Eigen::VectorXd>& controls) {
  check(controls);
  return do_predict(controls);
}

void Strategy::update(double treated, const Eigen::Ref<const Eigen::VectorXd>& controls) {
  check(controls);
  do_update(treated, controls);
  ++observed_;
}

double ftrl_loss_scale(LossKind loss) noexcept { return loss == LossKind::squared ? 0.5 : 1.0; }

PenaltySpec resolve_penalty(const StrategyConfig& config, Index units, Index horizon) {
  PenaltySpec p;
  p.kind = config.penalty;
  if (p.kind == PenaltyKind::none) return p;
  if (p.kind == PenaltyKind::quadratic) {
    p.H = config.H;
    p.X = config.X;
    p.x = config.x;
    validate(p, units);
    p = normalize_quadratic(std::move(p));
  }
  if (config.eta) {
    p.eta = *config.eta;
  } else {
    const double k = p.kind == PenaltyKind::quadratic ? penalty_range(p, units) : 0.5;
    // A zero range means the penalty is constant on the simplex.
    p.eta = p.kind == PenaltyKind::quadratic && !(k > 0.0) ? 1.0 : default_eta(p.kind, units, horizon, k);
  }
  validate(p, units);
  return p;
}

void validate(const StrategyConfig& config, Index units, Index horizon) {
  if (units < 1) throw Error(ErrorKind::invalid_input, "need at least one control unit");
  if (horizon < 1) throw Error(ErrorKind::invalid_input, "horizon must be positive");
  switch (config.kind) {
    case StrategyKind::weighted_ftl:
      if (!config.timing) throw Error(ErrorKind::invalid_input, "weighted_ftl needs timing weights");
      if (config.timing->size() < horizon) {
        throw Error(ErrorKind::dimension_mismatch, "weighted_ftl timing has " + std::to_string(config.timing->size()) +
                                                       " entries for horizon " + std::to_string(horizon));
      }
      for (Index t = 0; t < config.timing->size(); ++t) {
        const double v = (*config.timing)[t];
        if (!std::isfinite(v) || v < 0.0) {
          throw Error(ErrorKind::invalid_input, "timing weight at t=" + std::to_string(t + 1) + " is negative");
        }
      }
      break;
    case StrategyKind::ftrl:
      if (config.eta && !(*config.eta > 0.0)) throw Error(ErrorKind::invalid_penalty, "eta must be positive");
      resolve_penalty(config, units, horizon);
      break;
    case StrategyKind::fixed_weights:
    case StrategyKind::twfe_fixed_w:
      checked_weights(config, units);
      break;
    case StrategyKind::flh:
      if (!(config.alpha >= 0.0) || !std::isfinite(config.alpha)) {
        throw Error(ErrorKind::invalid_input, "flh alpha must be nonnegative");
      }
      if (config.base) {
        if (config.base->kind == StrategyKind::flh) throw Error(ErrorKind::invalid_input, "flh cannot nest flh");
        validate(*config.base, units, horizon);
      }
      break;
    default:
      break;
  }
}

std::unique_ptr<Strategy> make_strategy(const StrategyConfig& config, Index units, Index horizon) {
  validate(config, units, horizon);
  switch (config.kind) {
    case StrategyKind::ftl:
      return std::make_unique<LevelLeader>(config.kind, units, horizon, std::nullopt, 1.0, LossKind::squared,
                                           std::nullopt);
    case StrategyKind::weighted_ftl:
      return std::make_unique<LevelLeader>(config.kind, units, horizon, std::nullopt, 1.0, LossKind::squared,
                                           config.timing);
    case StrategyKind::ftrl: {
      PenaltySpec p = resolve_penalty(config, units, horizon);
      std::optional<PenaltySpec> penalty;
      if (p.kind != PenaltyKind::none) penalty = std::move(p);
      return std::make_unique<LevelLeader>(config.kind, units, horizon, std::move(penalty),
                                           ftrl_loss_scale(config.loss), config.loss, std::nullopt);
    }
    case StrategyKind::differenced_sc:
      return std::make_unique<DifferencedLeader>(units);
    case StrategyKind::demeaned_sc:
      return std::make_unique<DemeanedLeader>(units);
    case StrategyKind::first_diff_sc:
      return std::make_unique<FirstDiffLeader>(units);
    case StrategyKind::fixed_weights:
      return std::make_unique<FixedWeights>(checked_weights(config, units));
    case StrategyKind::uniform_did:
      return std::make_unique<FixedTwfe>(config.kind, Weights::uniform(units));
    case StrategyKind::twfe_fixed_w:
      return std::make_unique<FixedTwfe>(config.kind, checked_weights(config, units));
    case StrategyKind::flh:
      return std::make_unique<LeadingHistory>(config.base ? *config.base : StrategyConfig{}, units, horizon,
                                              config.alpha);
  }
  throw Error(ErrorKind::invalid_input, "unknown strategy kind");
}

// ---------------------------------------------------------------------------

FlhWeights::FlhWeights(double alpha) : alpha_(alpha), log_probs_(Eigen::VectorXd::Zero(1)) {}

void FlhWeights::step(const Eigen::Ref<const Eigen::VectorXd>& losses) {
  if (losses.size() != log_probs_.size()) {
    throw Error(ErrorKind::dimension_mismatch, "flh step needs one loss per expert");
  }
  if (!losses.allFinite()) throw Error(ErrorKind::invalid_input, "flh expert loss is not finite");
  Eigen::VectorXd updated = log_probs_ - alpha_ * losses;
  const double top = updated.maxCoeff();
  const double log_norm = top + std::log((updated.array() - top).exp().sum());
  updated.array() -= log_norm;

  const auto m = static_cast<double>(log_probs_.size());
  const Index n = log_probs_.size();
  log_probs_.resize(n + 1);
  log_probs_.head(n) = updated.array() + std::log(m / (m + 1.0));
  log_probs_[n] = -std::log(m + 1.0);
}

Eigen::VectorXd FlhWeights::probs() const {
  Eigen::VectorXd p = log_probs_.array().exp();
  return p / p.sum();
}

const FlhWeights& flh_weights(const Strategy& s) {
  const auto* flh = dynamic_cast<const LeadingHistory*>(&s);
  if (!flh) throw Error(ErrorKind::invalid_input, "strategy is not flh");
  return flh->weights();
}

// ---------------------------------------------------------------------------

Panel fixed_adversary_response(const Weights& theta, double eps, Index horizon) {
  const Index n = theta.theta.size();
  if (n < 2) throw Error(ErrorKind::invalid_input, "no adversary beats a fixed strategy when N = 1");
  if (!(eps > 0.0 && eps < 1e-4)) throw Error(ErrorKind::invalid_input, "eps must lie in (0, 1e-4)");
  if (horizon < 1) throw Error(ErrorKind::invalid_input, "horizon must be positive");
  validate(theta);

  // The vertex farthest from theta: |e_k - theta|_1 = 2 (1 - theta_k) >= 1 > sqrt(eps).
  Index k = 0;
  theta.theta.minCoeff(&k);
  const Eigen::VectorXd target = Eigen::VectorXd::Unit(n, k);
  const Eigen::VectorXd y = (target - theta.theta).unaryExpr([](double d) {
    return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  });
  Eigen::MatrixXd controls = y.replicate(1, horizon);
  Eigen::VectorXd treated = Eigen::VectorXd::Constant(horizon, target.dot(y));
  return make_panel(std::move(treated), std::move(controls), 1.0);
}

}  // namespace synthreg
