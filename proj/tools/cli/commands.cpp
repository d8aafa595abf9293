#include "commands.hpp"

#include "synthreg/adversary.hpp"
#include "synthreg/config.hpp"
#include "synthreg/inference.hpp"
#include "synthreg/parallel.hpp"
#include "synthreg/protocol.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

namespace synthreg::cli {

namespace {

constexpr double kCheckSlack = 1e-6;

struct Cell {
  std::size_t strategy = 0;
  std::uint64_t seed = 0;
  RegretReport report;
  Trajectory trajectory;
  OracleResult oracle;
  double timing_c = 1.0;
  std::optional<ExpectedLossCheck> expected;
};

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  return out;
}

// Writes to the file when given, otherwise to `fallback`.
template <typename Fn>
void emit(const std::optional<std::filesystem::path>& path, std::ostream& fallback, Fn&& fn) {
  if (!path) {
    fn(fallback);
    return;
  }
  std::ofstream out = open_output(*path);
  fn(out);
  if (!out) throw Error(ErrorKind::io, "failed writing " + path->string());
}

std::string curve_name(std::size_t index, const Cell& cell, const std::string& strategy) {
  std::string safe;
  for (char c : strategy) safe += std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ? c : '_';
  return "cell" + std::to_string(index) + "_" + safe + "_seed" + std::to_string(cell.seed) + ".csv";
}

Cell run_cell(const ExperimentConfig& cfg, const std::optional<Panel>& fixed, std::size_t strategy,
              std::uint64_t seed) {
  Cell cell;
  cell.strategy = strategy;
  cell.seed = seed;

  Panel panel;
  if (fixed) {
    panel = *fixed;
  } else {
    GeneratorSpec spec = *cfg.generator;
    spec.seed += seed;
    panel = generate_panel(spec);
  }
  const Index N = panel.units();
  const Index T = panel.periods();

  TimingSpec timing = cfg.timing;
  timing.seed += seed;
  const Eigen::VectorXd pi = generate_timing(timing, T, &panel);

  StrategyConfig sc = cfg.strategies[strategy];
  if (sc.kind == StrategyKind::weighted_ftl && !sc.timing) sc.timing = pi;
  const Eigen::VectorXd& weights = sc.kind == StrategyKind::weighted_ftl ? *sc.timing : pi;
  cell.timing_c = timing_constant(weights);

  cell.trajectory = run_protocol(sc, panel);
  const ComparatorClass comparator = default_comparator(sc.kind);
  cell.oracle = oracle_fixed_weights(panel, comparator, sc.loss);
  RegretReport& r = cell.report;
  r = compute_regret(cell.trajectory, cell.oracle, pi);
  r.strategy = sc.name();
  r.seed = seed;
  if (!panel.exceeds_unit_bound() && std::isfinite(cell.timing_c)) {
    r.bound = strategy_bound(sc, N, T, cell.timing_c);
  }
  if (sc.kind == StrategyKind::weighted_ftl) r.weighted_regret = weighted_regret(cell.trajectory, panel, weights);
  if (cfg.adaptive && sc.loss == LossKind::squared) {
    const AdaptiveRegret a = adaptive_regret(cell.trajectory, panel, comparator);
    r.adaptive_regret = a.value;
    r.adaptive_stride = a.stride;
  }
  for (const Check& check : cfg.checks) {
    if (check.kind == CheckKind::expected_loss) {
      const double c = timing_constant(pi);
      if (std::isfinite(c)) cell.expected = expected_loss_bound_check(cell.trajectory, pi, c, cell.oracle);
    }
  }
  return cell;
}

// Quantity compared with the bound: weighted regret for weighted FTL.
double checked_regret(const Cell& cell) {
  return cell.report.weighted_regret ? *cell.report.weighted_regret : cell.report.regret;
}

std::string describe_failure(const Cell& cell, std::string_view what, double lhs, double rhs) {
  std::ostringstream os;
  os << "check failed: " << what << " strategy=" << cell.report.strategy << " seed=" << cell.seed
     << " regret=" << format_double(lhs) << " bound=" << format_double(rhs);
  return os.str();
}

int report_error(std::ostream& err, const std::exception& e) {
  err << "synthreg: " << e.what() << '\n';
  return kUsage;
}

}  // namespace

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("SYNTHREG_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (errno != 0 || *end != '\0' || raw[0] == '-') {
    throw Error(ErrorKind::invalid_input, std::string("SYNTHREG_SEED is not an unsigned integer: '") + raw + "'");
  }
  return static_cast<std::uint64_t>(v);
}

StrategyConfig parse_strategy_arg(const std::string& text) {
  if (text.empty()) throw Error(ErrorKind::parse, "empty strategy");
  const std::filesystem::path path(text);
  std::error_code ec;
  if (text.front() != '{' && std::filesystem::is_regular_file(path, ec)) {
    return strategy_from_json(read_json_file(path));
  }
  if (text.front() == '{' || text.front() == '"') {
    try {
      return strategy_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::parse, std::string("strategy: ") + e.what());
    }
  }
  return strategy_from_json(nlohmann::json(text));
}

Eigen::VectorXd read_vector_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string cell = line.substr(first, last - first + 1);
    const auto v = parse_double(cell);
    if (!v) {
      if (line_no == 1) continue;
      throw Error(ErrorKind::parse, path.string() + ": line " + std::to_string(line_no) + ": cannot parse '" +
                                        cell + "'");
    }
    values.push_back(*v);
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
}

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  std::optional<Panel> fixed;
  try {
    const nlohmann::json doc = read_json_file(opts.config);
    cfg = experiment_from_json(doc, opts.config.parent_path());
    if (opts.seed) {
      cfg.seed = *opts.seed;
    } else if (!doc.contains("seed")) {
      if (auto s = env_seed()) cfg.seed = *s;
    }
    if (opts.out) cfg.report_path = *opts.out;
    if (cfg.panel_path) fixed = load_panel(*cfg.panel_path);
    const Index N = fixed ? fixed->units() : cfg.generator->units;
    const Index T = fixed ? fixed->periods() : cfg.generator->periods;
    for (StrategyConfig s : cfg.strategies) {
      // Weighted FTL without explicit weights takes the timing distribution per cell.
      if (s.kind == StrategyKind::weighted_ftl && !s.timing) s.timing = Eigen::VectorXd::Constant(T, 1.0 / T);
      validate(s, N, T);
    }
  } catch (const std::exception& e) {
    return report_error(err, e);
  }

  const std::size_t S = cfg.strategies.size();
  const auto R = static_cast<std::size_t>(cfg.replications);
  std::vector<Cell> cells(S * R);
  try {
    const unsigned jobs = opts.jobs == 0 ? default_jobs() : opts.jobs;
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
      const std::size_t s = i / R;
      const std::uint64_t seed = cfg.seed + (i % R);
      try {
        cells[i] = run_cell(cfg, fixed, s, seed);
      } catch (const Error& e) {
        throw Error(e.kind(), cfg.strategies[s].name() + " seed " + std::to_string(seed) + ": " + e.message());
      }
    });
  } catch (const std::exception& e) {
    return report_error(err, e);
  }

  std::vector<std::string> failures;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const RegretReport& r = c.report;
    out << "cell " << i << " strategy=" << r.strategy << " seed=" << c.seed << " N=" << r.units
        << " T=" << r.periods << " loss=" << format_double(r.total_loss) << " regret=" << format_double(r.regret);
    if (r.weighted_regret) out << " weighted_regret=" << format_double(*r.weighted_regret);
    if (r.adaptive_regret) out << " adaptive_regret=" << format_double(*r.adaptive_regret);
    out << " bound=" << (r.bound ? format_double(*r.bound) : std::string("none")) << '\n';

    for (const Check& check : cfg.checks) {
      if (check.kind == CheckKind::regret_bound && r.bound && checked_regret(c) > *r.bound + kCheckSlack) {
        failures.push_back(describe_failure(c, "regret_bound", checked_regret(c), *r.bound));
      }
      if (check.kind == CheckKind::expected_loss && c.expected && !c.expected->holds) {
        failures.push_back(describe_failure(c, "expected_loss", c.expected->lhs, c.expected->rhs));
      }
      if (check.kind == CheckKind::regret_at_most && r.regret > check.limit) {
        failures.push_back(describe_failure(c, "regret_at_most", r.regret, check.limit));
      }
    }
  }

  try {
    if (cfg.report_path) {
      nlohmann::json reports = nlohmann::json::array();
      for (const Cell& c : cells) reports.push_back(to_json(c.report));
      std::ofstream f = open_output(*cfg.report_path);
      f << reports.dump(2) << '\n';
      if (!f) throw Error(ErrorKind::io, "failed writing " + cfg.report_path->string());
    }
    if (cfg.curves_path) {
      std::filesystem::create_directories(*cfg.curves_path);
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell& c = cells[i];
        std::ofstream f = open_output(*cfg.curves_path / curve_name(i, c, c.report.strategy));
        write_regret_curve(f, c.trajectory, c.oracle);
      }
    }
  } catch (const std::exception& e) {
    return report_error(err, e);
  }

  for (const auto& f : failures) err << f << '\n';
  return failures.empty() ? kOk : kCheckFailed;
}

int cmd_fit(const FitOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const Panel panel = load_panel(opts.panel);
    const StrategyConfig sc = parse_strategy_arg(opts.strategy);
    const Trajectory traj = run_protocol(sc, panel);
    emit(opts.out, out, [&](std::ostream& os) {
      os << "t,treated,prediction,loss,intercept";
      for (Index i = 1; i <= panel.units(); ++i) os << ",w" << i;
      os << '\n';
      for (Index t = 0; t < traj.periods(); ++t) {
        const Weights& w = traj.weights[static_cast<std::size_t>(t)];
        os << (t + 1) << ',' << format_double(panel.treated[t]) << ',' << format_double(traj.predictions[t]) << ','
           << format_double(traj.losses[t]) << ',' << (w.intercept ? format_double(*w.intercept) : "");
        for (Index i = 0; i < w.theta.size(); ++i) os << ',' << format_double(w.theta[i]);
        os << '\n';
      }
    });
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
  return kOk;
}

int cmd_test(const TestOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const Panel panel = load_panel(opts.panel);
    ObservedStudy study;
    study.observed = panel.treated;
    study.controls = panel.controls;
    study.treatment_period = opts.treatment_period;
    if (opts.null_effects) study.null_effects = read_vector_file(*opts.null_effects);
    const StrategyConfig sc = parse_strategy_arg(opts.strategy);
    const RankTest result = randomization_test(study, sc, opts.alpha, opts.c_bound);
    emit(opts.out, out, [&](std::ostream& os) { os << to_json(result).dump(2) << '\n'; });
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
  return kOk;
}

int cmd_bounds(const BoundsOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const auto kind = parse_bound_kind(opts.kind);
    if (!kind) throw Error(ErrorKind::invalid_input, "unknown bound kind '" + opts.kind + "'");
    BoundParams p;
    p.C = opts.c;
    p.K = opts.k;
    p.n = opts.hazan_n.value_or(0.0);
    p.R = opts.r.value_or(0.0);
    p.a = opts.a;
    p.b = opts.b;
    p.D = opts.d;
    const double value = theoretical_bound(*kind, opts.n, opts.t, p);
    out << to_string(*kind) << " N=" << opts.n << " T=" << opts.t;
    switch (*kind) {
      case BoundKind::corollary1:
        out << " C=" << format_double(p.C);
        break;
      case BoundKind::ftrl_quadratic:
        out << " K=" << format_double(p.K);
        break;
      case BoundKind::hazan:
        out << " n=" << format_double(p.n > 0 ? p.n : static_cast<double>(opts.n))
            << " R=" << format_double(p.R > 0 ? p.R : std::sqrt(static_cast<double>(opts.n)))
            << " a=" << format_double(p.a) << " b=" << format_double(p.b) << " D=" << format_double(p.D);
        break;
      default:
        break;
    }
    out << " value=" << format_double(value) << '\n';
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic control as online linear regression"};
  app.require_subcommand(1);

  SimulateOptions sim;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Run an experiment config");
  simulate->add_option("--config", sim.config, "Experiment JSON")->required();
  auto* seed_opt = simulate->add_option("--seed", sim_seed, "Base seed (default: config, then SYNTHREG_SEED)");
  simulate->add_option("--jobs", sim.jobs, "Worker threads, 0 for all cores");
  simulate->add_option("--out", sim.out, "Report JSON path (overrides outputs.report)");

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Run a strategy through a panel and write per-period weights");
  fit_cmd->add_option("--panel", fit.panel, "Panel CSV")->required();
  fit_cmd->add_option("--strategy", fit.strategy, "Kind name, inline JSON or JSON file");
  fit_cmd->add_option("--out", fit.out, "Output CSV (default stdout)");

  TestOptions test;
  auto* test_cmd = app.add_subcommand("test", "Randomization test of a sharp null");
  test_cmd->add_option("--panel", test.panel, "Observed panel CSV")->required();
  test_cmd->add_option("--strategy", test.strategy, "Kind name, inline JSON or JSON file");
  test_cmd->add_option("--treatment-period", test.treatment_period, "Realized treatment period S (1-based)")
      ->required();
  test_cmd->add_option("--alpha", test.alpha, "Test level");
  test_cmd->add_option("--c-bound", test.c_bound, "Bound C on T * pi_t");
  test_cmd->add_option("--null", test.null_effects, "Hypothesized effects, one per period");
  test_cmd->add_option("--out", test.out, "Output JSON (default stdout)");

  BoundsOptions bounds;
  auto* bounds_cmd = app.add_subcommand("bounds", "Evaluate a regret bound");
  bounds_cmd->add_option("kind", bounds.kind, "Bound name")->required();
  bounds_cmd->add_option("--n", bounds.n, "Control units N")->required();
  bounds_cmd->add_option("--t", bounds.t, "Horizon T")->required();
  bounds_cmd->add_option("--c", bounds.c, "Timing constant C");
  bounds_cmd->add_option("--k", bounds.k, "Penalty range K");
  bounds_cmd->add_option("--hazan-n", bounds.hazan_n, "Dimension n (default N)");
  bounds_cmd->add_option("--r", bounds.r, "Norm bound R (default sqrt N)");
  bounds_cmd->add_option("--a", bounds.a, "Exp-concavity a");
  bounds_cmd->add_option("--b", bounds.b, "Gradient bound b");
  bounds_cmd->add_option("--d", bounds.d, "Diameter D");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  if (*simulate) {
    if (seed_opt->count() > 0) sim.seed = sim_seed;
    return cmd_simulate(sim, out, err);
  }
  if (*fit_cmd) return cmd_fit(fit, out, err);
  if (*test_cmd) return cmd_test(test, out, err);
  return cmd_bounds(bounds, out, err);
}

}  // namespace synthreg::cli
