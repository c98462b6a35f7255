#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "knitfix/error.hpp"

namespace knitfix {

enum class R2Variant {
  verbatim,      // denominator uses mean of the estimate Y
  conventional,  // denominator uses mean of the truth X
};

/// r^2(X, Y) = 1 - sum (x_i - y_i)^2 / sum (x_i - mean(Y))^2.
/// X is the truth, Y the estimate. The conventional variant centres on mean(X).
inline double r_squared(std::span<const double> truth, std::span<const double> estimate,
                        R2Variant variant = R2Variant::verbatim) {
  if (truth.size() != estimate.size()) throw DataError("r_squared: length mismatch");
  if (truth.empty()) throw DataError("r_squared: empty input");
  const auto& centre_src = variant == R2Variant::verbatim ? estimate : truth;
  const double centre =
      std::accumulate(centre_src.begin(), centre_src.end(), 0.0) / static_cast<double>(centre_src.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    num += (truth[i] - estimate[i]) * (truth[i] - estimate[i]);
    den += (truth[i] - centre) * (truth[i] - centre);
  }
  if (den == 0.0) throw NumericError("r_squared: zero denominator");
  return 1.0 - num / den;
}

inline double gain(double pre, double post) noexcept { return post - pre; }

/// E = ((1 - r2_A)^2 + (1 - r2_B)^2) / 2
inline double combined_error(double r2_a, double r2_b) noexcept {
  return ((1.0 - r2_a) * (1.0 - r2_a) + (1.0 - r2_b) * (1.0 - r2_b)) / 2.0;
}

struct ScoreCard {
  double r2_pre = 0.0;
  double r2_post = 0.0;
  double gain = 0.0;
};

inline ScoreCard make_scorecard(double pre, double post) noexcept { return {pre, post, gain(pre, post)}; }

struct BinnedRse {
  double bin_width = 1.0;
  long first_bin = 0;  // index of bins[0]; lower edge = first_bin * bin_width
  std::vector<std::size_t> counts;
  std::vector<std::optional<double>> rse_pre;   // nullopt marks an empty bin
  std::vector<std::optional<double>> rse_post;

  std::size_t size() const noexcept { return counts.size(); }
  double lower_edge(std::size_t b) const noexcept {
    return static_cast<double>(first_bin + static_cast<long>(b)) * bin_width;
  }
  double upper_edge(std::size_t b) const noexcept { return lower_edge(b) + bin_width; }
};

namespace detail {

inline std::vector<std::optional<double>> rse_per_bin(std::span<const double> truth,
                                                      std::span<const double> pred,
                                                      std::span<const long> bin_of, long first, std::size_t nbins,
                                                      double mean_all) {
  std::vector<double> num(nbins, 0.0), den(nbins, 0.0);
  std::vector<std::size_t> cnt(nbins, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto b = static_cast<std::size_t>(bin_of[i] - first);
    num[b] += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    den[b] += (truth[i] - mean_all) * (truth[i] - mean_all);
    ++cnt[b];
  }
  std::vector<std::optional<double>> out(nbins);
  for (std::size_t b = 0; b < nbins; ++b) {
    if (cnt[b] == 0) continue;
    out[b] = den[b] > 0.0 ? num[b] / den[b]
                          : (num[b] == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  }
  return out;
}

}  // namespace detail

/// Relative squared error per truth-value bin, with the denominator centred
/// on the mean over all samples. Two estimates share the binning so pre- and
/// post-correction curves line up.
inline BinnedRse binned_rse(std::span<const double> truth, std::span<const double> pre,
                            std::span<const double> post, double bin_width) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw DataError("binned_rse: bin width must be > 0");
  if (truth.size() != pre.size() || truth.size() != post.size()) throw DataError("binned_rse: length mismatch");
  if (truth.empty()) throw DataError("binned_rse: empty input");
  const double mean_all = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  bool constant = true;
  for (double v : truth) constant = constant && v == truth.front();
  if (constant) throw DataError("binned_rse: truth is constant");

  std::vector<long> bin_of(truth.size());
  long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    bin_of[i] = static_cast<long>(std::floor(truth[i] / bin_width));
    lo = std::min(lo, bin_of[i]);
    hi = std::max(hi, bin_of[i]);
  }
  BinnedRse out;
  out.bin_width = bin_width;
  out.first_bin = lo;
  const auto nbins = static_cast<std::size_t>(hi - lo + 1);
  out.counts.assign(nbins, 0);
  for (long b : bin_of) ++out.counts[static_cast<std::size_t>(b - lo)];
  out.rse_pre = detail::rse_per_bin(truth, pre, bin_of, lo, nbins, mean_all);
  out.rse_post = detail::rse_per_bin(truth, post, bin_of, lo, nbins, mean_all);
  return out;
}

/// Single-estimate form; rse_pre and rse_post both hold the estimate's curve.
inline BinnedRse binned_rse(std::span<const double> truth, std::span<const double> pred, double bin_width) {
  return binned_rse(truth, pred, pred, bin_width);
}

inline void write_scorecard_csv(std::ostream& out, std::span<const std::pair<std::string, double>> metrics) {
  out << "metric,value\n" << std::setprecision(12);
  for (const auto& [name, value] : metrics) out << name << ',' << value << '\n';
}

inline void write_binned_rse_csv(std::ostream& out, const BinnedRse& rse) {
  out << "bin_lo_n,bin_hi_n,count,rse_pre,rse_post\n" << std::setprecision(12);
  auto cell = [&](const std::optional<double>& v) {
    if (v)
      out << *v;
    else
      out << "empty";
  };
  for (std::size_t b = 0; b < rse.size(); ++b) {
    out << rse.lower_edge(b) << ',' << rse.upper_edge(b) << ',' << rse.counts[b] << ',';
    cell(rse.rse_pre[b]);
    out << ',';
    cell(rse.rse_post[b]);
    out << '\n';
  }
}

}  // namespace knitfix
