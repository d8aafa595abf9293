#include "synthreg/panel.hpp"

#include "synthreg/error.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace synthreg {

namespace {

constexpr double kBoundSlack = 1e-12;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

}  // namespace

double Panel::max_abs() const noexcept {
  double m = 0.0;
  if (treated.size() > 0) m = treated.cwiseAbs().maxCoeff();
  if (controls.size() > 0) m = std::max(m, controls.cwiseAbs().maxCoeff());
  return m;
}

Panel Panel::prefix(Index t) const {
  if (t < 1 || t > periods()) {
    throw Error(ErrorKind::invalid_input, "prefix length " + std::to_string(t) + " outside [1, " +
                                              std::to_string(periods()) + "]");
  }
  Panel p;
  p.treated = treated.head(t);
  p.controls = controls.leftCols(t);
  p.bound = bound;
  return p;
}

void validate(const Panel& panel) {
  if (panel.periods() == 0 || panel.units() == 0) {
    throw Error(ErrorKind::empty_panel, "panel needs T >= 1 and N >= 1 (got T=" +
                                            std::to_string(panel.periods()) +
                                            ", N=" + std::to_string(panel.units()) + ")");
  }
  if (panel.controls.cols() != panel.periods()) {
    throw Error(ErrorKind::dimension_mismatch,
                "controls have " + std::to_string(panel.controls.cols()) +
                    " periods, treated series has " + std::to_string(panel.periods()));
  }
  if (!panel.treated.allFinite() || !panel.controls.allFinite()) {
    throw Error(ErrorKind::invalid_input, "panel contains non-finite entries");
  }
  if (!(panel.bound > 0.0) || !std::isfinite(panel.bound)) {
    throw Error(ErrorKind::invalid_input, "panel bound must be positive and finite");
  }
  if (panel.max_abs() > panel.bound + kBoundSlack) {
    throw Error(ErrorKind::invalid_input, "entry magnitude " + format_double(panel.max_abs()) +
                                              " exceeds bound " + format_double(panel.bound));
  }
}

Panel make_panel(Eigen::VectorXd treated, Eigen::MatrixXd controls, std::optional<double> bound) {
  Panel p;
  p.treated = std::move(treated);
  p.controls = std::move(controls);
  if (p.treated.allFinite() && p.controls.allFinite()) {
    p.bound = bound.value_or(std::max(1.0, p.max_abs()));
  }
  validate(p);
  return p;
}

std::string_view to_string(TransformKind kind) noexcept {
  switch (kind) {
    case TransformKind::levels: return "levels";
    case TransformKind::historical_diff: return "historical_diff";
    case TransformKind::running_demean: return "running_demean";
    case TransformKind::first_diff: return "first_diff";
  }
  return "unknown";
}

TransformedPanel levels(const Panel& p) {
  validate(p);
  return TransformedPanel{p, TransformKind::levels, p, Eigen::VectorXd::Zero(p.periods())};
}

TransformedPanel historical_diff(const Panel& p) {
  validate(p);
  const Index n = p.units();
  const Index T = p.periods();
  TransformedPanel out{p, TransformKind::historical_diff, p, Eigen::VectorXd::Zero(T)};
  out.values.bound = 2.0 * p.bound;

  double treated_sum = 0.0;
  Eigen::VectorXd control_sum = Eigen::VectorXd::Zero(n);
  for (Index t = 0; t < T; ++t) {
    if (t > 0) {
      const double inv = 1.0 / static_cast<double>(t);
      out.level_offsets[t] = treated_sum * inv;
      out.values.treated[t] = p.treated[t] - treated_sum * inv;
      out.values.controls.col(t) = p.controls.col(t) - control_sum * inv;
    }
    treated_sum += p.treated[t];
    control_sum += p.controls.col(t);
  }
  return out;
}

TransformedPanel running_demean(const Panel& p) {
  validate(p);
  const Index n = p.units();
  const Index T = p.periods();
  TransformedPanel out{p, TransformKind::running_demean, p, Eigen::VectorXd::Zero(T)};
  out.values.bound = 2.0 * p.bound;

  double treated_sum = 0.0;
  Eigen::VectorXd control_sum = Eigen::VectorXd::Zero(n);
  for (Index t = 0; t < T; ++t) {
    treated_sum += p.treated[t];
    control_sum += p.controls.col(t);
    const double inv = 1.0 / static_cast<double>(t + 1);
    out.level_offsets[t] = treated_sum * inv;
    out.values.treated[t] = p.treated[t] - treated_sum * inv;
    out.values.controls.col(t) = p.controls.col(t) - control_sum * inv;
  }
  return out;
}

TransformedPanel first_diff(const Panel& p) {
  validate(p);
  const Index T = p.periods();
  if (T < 2) {
    throw Error(ErrorKind::insufficient_history, "first differences need T >= 2");
  }
  TransformedPanel out{p, TransformKind::first_diff, p, Eigen::VectorXd::Zero(T)};
  out.values.bound = 2.0 * p.bound;
  for (Index t = 1; t < T; ++t) {
    out.level_offsets[t] = p.treated[t - 1];
    out.values.treated[t] = p.treated[t] - p.treated[t - 1];
    out.values.controls.col(t) = p.controls.col(t) - p.controls.col(t - 1);
  }
  return out;
}

TransformedPanel apply_transform(const Panel& p, TransformKind kind) {
  switch (kind) {
    case TransformKind::levels: return levels(p);
    case TransformKind::historical_diff: return historical_diff(p);
    case TransformKind::running_demean: return running_demean(p);
    case TransformKind::first_diff: return first_diff(p);
  }
  throw Error(ErrorKind::invalid_input, "unknown transform");
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw Error(ErrorKind::invalid_input, "cannot format value");
  return std::string(buf.data(), end);
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

Panel read_panel_csv(std::istream& in, std::string_view source) {
  const std::string where(source);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::empty_panel, where + ": missing header row");
  }
  const auto header = split_commas(line);
  if (header.size() < 2) {
    throw Error(ErrorKind::structure, where + ": header needs columns t,y0,y1,...");
  }
  const std::size_t columns = header.size();
  const std::size_t n_controls = columns - 2;

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != columns) {
      throw Error(ErrorKind::structure, where + ": row " + std::to_string(line_no) + " has " +
                                            std::to_string(cells.size()) + " cells, expected " +
                                            std::to_string(columns));
    }
    std::vector<double> row(columns);
    for (std::size_t c = 0; c < columns; ++c) {
      const auto v = parse_double(cells[c]);
      if (!v) {
        throw Error(ErrorKind::parse, where + ": row " + std::to_string(line_no) + ", column " +
                                          std::to_string(c + 1) + " ('" + std::string(header[c]) +
                                          "'): cannot parse '" + std::string(cells[c]) + "'");
      }
      row[c] = *v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || n_controls == 0) {
    throw Error(ErrorKind::empty_panel, where + ": panel has T=" + std::to_string(rows.size()) +
                                            ", N=" + std::to_string(n_controls));
  }

  const auto T = static_cast<Index>(rows.size());
  const auto N = static_cast<Index>(n_controls);
  Eigen::VectorXd treated(T);
  Eigen::MatrixXd controls(N, T);
  for (Index t = 0; t < T; ++t) {
    treated[t] = rows[t][1];
    for (Index i = 0; i < N; ++i) controls(i, t) = rows[t][i + 2];
  }
  return make_panel(std::move(treated), std::move(controls));
}

void write_panel_csv(std::ostream& out, const Panel& panel) {
  out << "t,y0";
  for (Index i = 0; i < panel.units(); ++i) out << ",y" << (i + 1);
  out << '\n';
  for (Index t = 0; t < panel.periods(); ++t) {
    out << (t + 1) << ',' << format_double(panel.treated[t]);
    for (Index i = 0; i < panel.units(); ++i) out << ',' << format_double(panel.controls(i, t));
    out << '\n';
  }
}

Panel load_panel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return read_panel_csv(in, path.string());
}

void write_panel(const Panel& panel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  write_panel_csv(out, panel);
}

std::string panel_hash(const Panel& panel) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  };
  feed(static_cast<std::uint64_t>(panel.periods()));
  feed(static_cast<std::uint64_t>(panel.units()));
  for (Index t = 0; t < panel.periods(); ++t) {
    feed(std::bit_cast<std::uint64_t>(panel.treated[t]));
    for (Index i = 0; i < panel.units(); ++i) {
      feed(std::bit_cast<std::uint64_t>(panel.controls(i, t)));
    }
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace synthreg
