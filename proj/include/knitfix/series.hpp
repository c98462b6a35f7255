#pragma once

// Acquisition-side data model and the preprocessing steps applied before
// feature extraction: CSV ingest, uniform resampling, conductivity and
// standardization.

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "knitfix/error.hpp"

namespace knitfix {

inline constexpr std::string_view kRecordingHeader = "t_s,force_n,resistance_ohm,displacement_mm";
inline constexpr std::string_view kUniformSeriesHeader = "t_s,value";
inline constexpr double kDefaultRateHz = 20.0;

struct RecordingRow {
  double t = 0.0;             // seconds
  double force = 0.0;         // newtons
  double resistance = 0.0;    // ohms
  double displacement = 0.0;  // millimeters
};

struct RawRecording {
  std::vector<RecordingRow> rows;
  std::string source_label;

  std::size_t size() const noexcept { return rows.size(); }

  template <class Proj>
  std::vector<double> column(Proj proj) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(proj(r));
    return out;
  }
  std::vector<double> times() const { return column([](const RecordingRow& r) { return r.t; }); }
  std::vector<double> forces() const { return column([](const RecordingRow& r) { return r.force; }); }
  std::vector<double> resistances() const {
    return column([](const RecordingRow& r) { return r.resistance; });
  }
  std::vector<double> displacements() const {
    return column([](const RecordingRow& r) { return r.displacement; });
  }
};

struct UniformSeries {
  double rate_hz = kDefaultRateHz;
  double t0 = 0.0;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double time_at(std::size_t k) const noexcept { return t0 + static_cast<double>(k) / rate_hz; }
};

struct ScalerParams {
  double mean = 0.0;
  double scale = 1.0;  // population standard deviation
};

namespace detail {

inline std::string line_msg(std::size_t line, const std::string& what) {
  return what + " at line " + std::to_string(line);
}

inline double parse_number(std::string_view field, std::size_t line) {
  std::string buf(field);
  // strtod accepts leading whitespace; trailing whitespace is tolerated too.
  while (!buf.empty() && (buf.back() == ' ' || buf.back() == '\t')) buf.pop_back();
  if (buf.empty()) throw DataError(line_msg(line, "malformed row: empty field"));
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size())
    throw DataError(line_msg(line, "malformed row: cannot parse '" + buf + "'"));
  if (!std::isfinite(v)) throw DataError(line_msg(line, "malformed row: non-finite value"));
  return v;
}

inline std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace detail

/// Checks the RawRecording invariants; throws DataError naming the first
/// offending row (1-based data row index).
inline void validate(const RawRecording& rec) {
  if (rec.rows.size() < 2) throw DataError("recording needs at least 2 rows");
  for (std::size_t i = 0; i < rec.rows.size(); ++i) {
    const auto& r = rec.rows[i];
    if (!std::isfinite(r.t) || !std::isfinite(r.force) || !std::isfinite(r.resistance) ||
        !std::isfinite(r.displacement))
      throw DataError("non-finite value in row " + std::to_string(i + 1));
    if (r.resistance <= 0.0) throw DataError("non-positive resistance in row " + std::to_string(i + 1));
    if (r.force < 0.0) throw DataError("negative force in row " + std::to_string(i + 1));
    if (r.displacement < 0.0) throw DataError("negative displacement in row " + std::to_string(i + 1));
    if (i > 0 && !(r.t > rec.rows[i - 1].t))
      throw DataError("non-increasing timestamp in row " + std::to_string(i + 1));
  }
}

/// Parses the raw recording CSV. Errors carry the 1-based file line number.
inline RawRecording load_recording(std::istream& in, std::string source_label = {}) {
  RawRecording rec;
  rec.source_label = std::move(source_label);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty recording: missing header");
  detail::strip_cr(line);
  if (line != kRecordingHeader)
    throw DataError("bad header '" + line + "', expected '" + std::string(kRecordingHeader) + "'");

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != 4)
      throw DataError(detail::line_msg(lineno, "malformed row: expected 4 fields, got " +
                                                   std::to_string(fields.size())));
    RecordingRow row{detail::parse_number(fields[0], lineno), detail::parse_number(fields[1], lineno),
                     detail::parse_number(fields[2], lineno), detail::parse_number(fields[3], lineno)};
    if (!rec.rows.empty() && !(row.t > rec.rows.back().t))
      throw DataError(detail::line_msg(lineno, "non-increasing timestamp"));
    if (row.resistance <= 0.0) throw DataError(detail::line_msg(lineno, "non-positive resistance"));
    if (row.force < 0.0) throw DataError(detail::line_msg(lineno, "negative force"));
    if (row.displacement < 0.0) throw DataError(detail::line_msg(lineno, "negative displacement"));
    rec.rows.push_back(row);
  }
  if (rec.rows.size() < 2) throw DataError("recording needs at least 2 rows");
  return rec;
}

inline void write_recording(std::ostream& out, const RawRecording& rec) {
  out << kRecordingHeader << '\n' << std::setprecision(17);
  for (const auto& r : rec.rows)
    out << r.t << ',' << r.force << ',' << r.resistance << ',' << r.displacement << '\n';
}

inline void write_uniform_series(std::ostream& out, const UniformSeries& s) {
  out << kUniformSeriesHeader << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < s.size(); ++k) out << s.time_at(k) << ',' << s.values[k] << '\n';
}

inline UniformSeries load_uniform_series(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty series: missing header");
  detail::strip_cr(line);
  if (line != kUniformSeriesHeader) throw DataError("bad header '" + line + "'");
  std::vector<double> ts;
  UniformSeries s;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != 2) throw DataError(detail::line_msg(lineno, "malformed row"));
    ts.push_back(detail::parse_number(fields[0], lineno));
    s.values.push_back(detail::parse_number(fields[1], lineno));
  }
  if (ts.size() < 2) throw DataError("series needs at least 2 rows");
  s.t0 = ts.front();
  s.rate_hz = static_cast<double>(ts.size() - 1) / (ts.back() - ts.front());
  return s;
}

/// Linear interpolation onto the grid t0, t0 + 1/rate, ... up to the last
/// input timestamp. No extrapolation past either end.
inline UniformSeries resample(std::span<const double> t, std::span<const double> x, double rate_hz) {
  if (t.size() != x.size()) throw DataError("resample: time and value lengths differ");
  if (t.size() < 2) throw DataError("resample: need at least 2 points");
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) throw DataError("resample: rate must be positive");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw DataError("resample: timestamps not strictly increasing");

  UniformSeries out;
  out.rate_hz = rate_hz;
  out.t0 = t.front();
  const double span = t.back() - t.front();
  // Slack absorbs rounding in span * rate so an exactly representable end sample is kept.
  const auto count = static_cast<std::size_t>(std::floor(span * rate_hz + 1e-9)) + 1;
  out.values.reserve(count);

  std::size_t j = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double tk = out.time_at(k);
    if (tk >= t.back()) {
      out.values.push_back(x.back());
      continue;
    }
    while (j + 1 < t.size() && t[j + 1] <= tk) ++j;
    if (tk == t[j]) {
      out.values.push_back(x[j]);
      continue;
    }
    const double w = (tk - t[j]) / (t[j + 1] - t[j]);
    out.values.push_back(x[j] + (x[j + 1] - x[j]) * w);
  }
  return out;
}

/// G = 1/R elementwise.
inline UniformSeries conductivity(const UniformSeries& resistance) {
  UniformSeries g{resistance.rate_hz, resistance.t0, {}};
  g.values.reserve(resistance.size());
  for (std::size_t i = 0; i < resistance.size(); ++i) {
    const double r = resistance.values[i];
    if (!(r > 0.0)) throw DataError("conductivity: non-positive value at sample " + std::to_string(i));
    g.values.push_back(1.0 / r);
  }
  return g;
}

inline ScalerParams scaler_fit(std::span<const double> xs) {
  if (xs.size() < 2) throw DataError("scaler_fit: need at least 2 values");
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double scale = std::sqrt(ss / n);
  // Rounding in the mean leaves a constant series with a spread of a few ulps.
  if (!(scale > 1e-12 * std::abs(mean)) || !std::isfinite(scale)) throw DataError("scaler_fit: zero variance");
  return {mean, scale};
}

inline void check(const ScalerParams& p) {
  if (!(p.scale > 0.0) || !std::isfinite(p.scale) || !std::isfinite(p.mean))
    throw DataError("invalid scaler parameters");
}

inline double scaler_transform(const ScalerParams& p, double x) noexcept { return (x - p.mean) / p.scale; }
inline double scaler_inverse(const ScalerParams& p, double z) noexcept { return z * p.scale + p.mean; }

inline std::vector<double> scaler_transform(const ScalerParams& p, std::span<const double> xs) {
  check(p);
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = scaler_transform(p, xs[i]);
  return out;
}

inline std::vector<double> scaler_inverse(const ScalerParams& p, std::span<const double> zs) {
  check(p);
  std::vector<double> out(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) out[i] = scaler_inverse(p, zs[i]);
  return out;
}

}  // namespace knitfix
