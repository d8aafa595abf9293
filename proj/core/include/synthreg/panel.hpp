#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

namespace synthreg {

using Index = Eigen::Index;

/// Bounded outcome panel: one treated series plus N control series over T periods.
///
/// Columns of `controls` are periods, rows are control units. Periods are
/// 0-based in code; user-facing output (CSV `t` column, CLI, JSON) is 1-based.
struct Panel {
  Eigen::VectorXd treated;   // length T
  Eigen::MatrixXd controls;  // N x T
  double bound = 1.0;

  Index periods() const noexcept { return treated.size(); }
  Index units() const noexcept { return controls.rows(); }

  double max_abs() const noexcept;
  /// True when some entry exceeds 1 in absolute value. Such panels are accepted;
  /// bound-dependent guarantees then use `bound`.
  bool exceeds_unit_bound() const noexcept { return max_abs() > 1.0 + 1e-12; }

  /// First `t` periods.
  Panel prefix(Index t) const;
};

/// Validates and builds a panel. Without an explicit bound the bound is
/// max(1, max |entry|).
Panel make_panel(Eigen::VectorXd treated, Eigen::MatrixXd controls,
                 std::optional<double> bound = std::nullopt);

/// Throws if any Panel invariant is violated.
void validate(const Panel& panel);

enum class TransformKind { levels, historical_diff, running_demean, first_diff };

std::string_view to_string(TransformKind kind) noexcept;

/// A transformed copy of a panel together with the per-period offsets that map
/// a prediction of the transformed treated value back to a level prediction:
/// level = level_offsets[t] + transformed.
struct TransformedPanel {
  Panel base;
  TransformKind kind = TransformKind::levels;
  Panel values;
  Eigen::VectorXd level_offsets;

  double to_level(Index t, double transformed_prediction) const {
    return level_offsets[t] + transformed_prediction;
  }
};

TransformedPanel levels(const Panel& p);

/// y~_{i1} = y_{i1}; y~_{it} = y_{it} - mean(y_{i1..i,t-1}).
TransformedPanel historical_diff(const Panel& p);

/// y._{it} = y_{it} - mean(y_{i1..it}).
TransformedPanel running_demean(const Panel& p);

/// Period 1 keeps its level; later periods hold y_{it} - y_{i,t-1}. Requires T >= 2.
TransformedPanel first_diff(const Panel& p);

TransformedPanel apply_transform(const Panel& p, TransformKind kind);

// CSV layout: header `t,y0,y1,...,yN`, one row per period.

Panel read_panel_csv(std::istream& in, std::string_view source = "<stream>");
void write_panel_csv(std::ostream& out, const Panel& panel);

Panel load_panel(const std::filesystem::path& path);
void write_panel(const Panel& panel, const std::filesystem::path& path);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);
/// Strict full-string parse; nullopt on failure or non-finite results.
std::optional<double> parse_double(std::string_view text);

/// FNV-1a over dimensions and entry bits, rendered as 16 hex digits.
std::string panel_hash(const Panel& panel);

}  // namespace synthreg
