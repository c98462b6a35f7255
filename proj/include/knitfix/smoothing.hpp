#pragma once

// Exponential smoothing feature bank: y(t) = a*x_t + (1-a)*y(t-1), seeded
// with the mean of the first M samples. Batch and streaming forms produce
// identical rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "knitfix/error.hpp"
#include "knitfix/series.hpp"

namespace knitfix {

struct AlphaSet {
  std::optional<double> base;  // absent for the hand-picked baseline set
  std::vector<double> alphas;  // strictly decreasing, each in (0, 1]

  std::size_t size() const noexcept { return alphas.size(); }

  std::string label() const {
    if (!base) return "baseline";
    std::ostringstream os;
    os << "a" << *base << "_N" << alphas.size();
    return os.str();
  }
};

inline void validate(const AlphaSet& set) {
  if (set.alphas.empty()) throw DataError("alpha set is empty");
  for (std::size_t i = 0; i < set.alphas.size(); ++i) {
    const double a = set.alphas[i];
    if (!(a > 0.0 && a <= 1.0)) throw DataError("alpha outside (0, 1]");
    if (i > 0 && !(a < set.alphas[i - 1])) throw DataError("alphas must be strictly decreasing");
  }
}

/// alphas = (1/a, 1/a^2, ..., 1/a^N)
inline AlphaSet alpha_set(double a, int n) {
  if (!(a > 1.0) || !std::isfinite(a)) throw DataError("alpha_set: base must exceed 1");
  if (n < 1) throw DataError("alpha_set: count must be at least 1");
  AlphaSet set{a, {}};
  set.alphas.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) set.alphas.push_back(1.0 / std::pow(a, i));
  return set;
}

inline AlphaSet baseline_alpha_set() { return {std::nullopt, {0.5, 0.1, 0.025, 0.0025}}; }

/// M = clamp(ceil(1 / (rate * alpha)), 1, available)
inline std::size_t init_window(double alpha, double rate_hz, std::size_t available) {
  const double raw = std::ceil(1.0 / (rate_hz * alpha));
  const std::size_t hi = std::max<std::size_t>(available, 1);
  if (!(raw >= 1.0)) return 1;
  if (raw >= static_cast<double>(hi)) return hi;
  return static_cast<std::size_t>(raw);
}

inline std::vector<double> smooth(std::span<const double> xs, double alpha, std::size_t m) {
  if (xs.empty()) throw DataError("smooth: empty input");
  if (m < 1 || m > xs.size()) throw DataError("smooth: init window outside [1, len]");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DataError("smooth: alpha outside (0, 1]");
  std::vector<double> y(xs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) acc += xs[i];
  y[0] = acc / static_cast<double>(m);
  for (std::size_t t = 1; t < xs.size(); ++t) y[t] = alpha * xs[t] + (1.0 - alpha) * y[t - 1];
  return y;
}

struct FeatureMatrix {
  double rate_hz = kDefaultRateHz;
  double t0 = 0.0;
  std::vector<std::vector<double>> columns;  // one per alpha, same order

  std::size_t rows() const noexcept { return columns.empty() ? 0 : columns.front().size(); }
  std::size_t cols() const noexcept { return columns.size(); }

  /// Row-major copy, the layout the network consumes.
  std::vector<double> row_major() const {
    std::vector<double> out(rows() * cols());
    for (std::size_t c = 0; c < cols(); ++c)
      for (std::size_t r = 0; r < rows(); ++r) out[r * cols() + c] = columns[c][r];
    return out;
  }
};

inline std::vector<std::size_t> init_windows(const AlphaSet& set, double rate_hz, std::size_t available) {
  std::vector<std::size_t> m;
  m.reserve(set.size());
  for (double a : set.alphas) m.push_back(init_window(a, rate_hz, available));
  return m;
}

/// Feature bank with explicit init windows (clamped to the series length).
inline FeatureMatrix feature_bank(const UniformSeries& xs, const AlphaSet& set,
                                  std::span<const std::size_t> windows) {
  if (xs.values.empty()) throw DataError("feature_bank: empty series");
  if (windows.size() != set.size()) throw DataError("feature_bank: window count differs from alpha count");
  FeatureMatrix fm{xs.rate_hz, xs.t0, {}};
  fm.columns.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i)
    fm.columns.push_back(smooth(xs.values, set.alphas[i], std::clamp<std::size_t>(windows[i], 1, xs.size())));
  return fm;
}

inline FeatureMatrix feature_bank(const UniformSeries& xs, const AlphaSet& set) {
  if (xs.values.empty()) throw DataError("feature_bank: empty series");
  const auto m = init_windows(set, xs.rate_hz, xs.size());
  return feature_bank(xs, set, m);
}

inline void write_feature_matrix(std::ostream& out, const FeatureMatrix& fm) {
  out << "t_s";
  for (std::size_t c = 0; c < fm.cols(); ++c) out << ",g" << (c + 1);
  out << '\n' << std::setprecision(17);
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    out << fm.t0 + static_cast<double>(r) / fm.rate_hz;
    for (const auto& col : fm.columns) out << ',' << col[r];
    out << '\n';
  }
}

// Streaming single-filter state. Buffers the first M samples, then emits the
// smoothed value for every sample from index M-1 on.
class SmoothState {
public:
  SmoothState(double alpha, std::size_t m) : alpha_(alpha), m_(std::max<std::size_t>(m, 1)) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw DataError("SmoothState: alpha outside (0, 1]");
    buffer_.reserve(m_);
  }

  std::optional<double> push(double x) {
    if (ready_) {
      y_ = alpha_ * x + (1.0 - alpha_) * y_;
      return y_;
    }
    buffer_.push_back(x);
    if (buffer_.size() < m_) return std::nullopt;
    double acc = 0.0;
    for (double v : buffer_) acc += v;
    y_ = acc / static_cast<double>(m_);
    for (std::size_t t = 1; t < buffer_.size(); ++t) y_ = alpha_ * buffer_[t] + (1.0 - alpha_) * y_;
    buffer_.clear();
    buffer_.shrink_to_fit();
    ready_ = true;
    return y_;
  }

  bool ready() const noexcept { return ready_; }
  double value() const noexcept { return y_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t window() const noexcept { return m_; }

private:
  double alpha_;
  std::size_t m_;
  std::vector<double> buffer_;
  double y_ = 0.0;
  bool ready_ = false;
};

// N filters fed in lockstep; emits a feature vector once every filter is
// initialized, i.e. from sample max(M_i) - 1 on.
class FilterBank {
public:
  FilterBank(const AlphaSet& set, std::span<const std::size_t> windows) {
    if (windows.size() != set.size()) throw DataError("FilterBank: window count differs from alpha count");
    states_.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
      states_.emplace_back(set.alphas[i], windows[i]);
      max_window_ = std::max(max_window_, states_.back().window());
    }
  }

  std::optional<std::vector<double>> push(double x) {
    ++seen_;
    for (auto& s : states_) s.push(x);
    if (seen_ < max_window_) return std::nullopt;
    std::vector<double> row;
    row.reserve(states_.size());
    for (const auto& s : states_) row.push_back(s.value());
    return row;
  }

  std::size_t max_window() const noexcept { return max_window_; }
  std::size_t samples_seen() const noexcept { return seen_; }
  std::size_t size() const noexcept { return states_.size(); }

private:
  std::vector<SmoothState> states_;
  std::size_t max_window_ = 1;
  std::size_t seen_ = 0;
};

}  // namespace knitfix
