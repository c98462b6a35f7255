#pragma once

// Hyperparameter grid: 8 smoothing-factor sets x 114 hidden-layer layouts,
// trained on one recording and ranked by the combined two-test error E.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "knitfix/error.hpp"
#include "knitfix/metrics.hpp"
#include "knitfix/nn.hpp"
#include "knitfix/pipeline.hpp"
#include "knitfix/seed.hpp"
#include "knitfix/smoothing.hpp"

namespace knitfix {

/// (2.5,4) (2.5,7) (2.5,10) (5,4) (5,7) (10,3) (10,4) and the baseline set, in that order.
inline std::vector<AlphaSet> enumerate_feature_sets() {
  return {alpha_set(2.5, 4), alpha_set(2.5, 7), alpha_set(2.5, 10), alpha_set(5, 4),
          alpha_set(5, 7),   alpha_set(10, 3),  alpha_set(10, 4),   baseline_alpha_set()};
}

inline constexpr int kHiddenBaseSizes[] = {2, 3, 4, 6, 8, 12, 16, 32};

// Layer fractions as denominators: 1 -> x1, 2 -> x1/2, 4 -> x1/4. The
// (1, 1/2, 1/2, 1/2) vector is listed twice in the source table.
inline const std::vector<std::vector<int>>& topology_vectors_as_listed() {
  static const std::vector<std::vector<int>> v{
      {1, 1},          {1, 2},          {1, 4},          {1, 1, 1},       {1, 1, 2},       {1, 2, 2},
      {1, 2, 4},       {2, 1, 1},       {2, 1, 2},       {2, 1, 4},       {1, 1, 1, 1},    {1, 1, 1, 2},
      {1, 1, 2, 2},    {1, 2, 2, 2},    {1, 2, 2, 4},    {1, 2, 4, 4},    {1, 4, 4, 4},    {2, 1, 1, 1},
      {2, 1, 1, 2},    {2, 1, 2, 2},    {1, 2, 2, 2},
  };
  return v;
}

inline std::vector<std::vector<int>> topology_vectors() {
  std::vector<std::vector<int>> out;
  for (const auto& v : topology_vectors_as_listed())
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  return out;
}

struct TopologySpec {
  int base = 0;
  std::vector<int> denominators;     // fraction i = 1 / denominators[i]
  std::vector<std::size_t> resolved;  // floor(base / denominator)
};

/// Base x fraction products, floored; layouts with a layer narrower than 2
/// are dropped and duplicates keep their first occurrence.
inline std::vector<TopologySpec> enumerate_topologies() {
  std::vector<TopologySpec> out;
  std::set<std::vector<std::size_t>> seen;
  const auto vectors = topology_vectors();
  for (int base : kHiddenBaseSizes) {
    for (const auto& v : vectors) {
      TopologySpec t{base, v, {}};
      bool keep = true;
      for (int den : v) {
        const auto w = static_cast<std::size_t>(base / den);
        keep = keep && w >= 2;
        t.resolved.push_back(w);
      }
      if (keep && seen.insert(t.resolved).second) out.push_back(std::move(t));
    }
  }
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& v, char sep = '-') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

struct GridConfig {
  std::size_t config_id = 0;
  std::size_t feature_set_index = 0;
  AlphaSet feature_set;
  std::vector<std::size_t> hidden;
  std::uint64_t seed = 0;

  std::size_t total_neurons() const {
    std::size_t n = 0;
    for (auto h : hidden) n += h;
    return n;
  }
};

inline std::uint64_t config_seed(std::uint64_t master_seed, std::size_t config_id) noexcept {
  return derive_seed(master_seed, 0x6772696400000000ull + config_id);
}

/// Cartesian product, feature sets outermost. Empty index lists select all.
inline std::vector<GridConfig> enumerate_grid(std::uint64_t master_seed,
                                              const std::vector<std::size_t>& feature_sets = {},
                                              const std::vector<std::size_t>& topologies = {}) {
  const auto sets = enumerate_feature_sets();
  const auto tops = enumerate_topologies();
  std::vector<std::size_t> fs = feature_sets, ts = topologies;
  if (fs.empty())
    for (std::size_t i = 0; i < sets.size(); ++i) fs.push_back(i);
  if (ts.empty())
    for (std::size_t i = 0; i < tops.size(); ++i) ts.push_back(i);
  std::vector<GridConfig> grid;
  for (auto f : fs) {
    if (f >= sets.size()) throw UsageError("feature set index " + std::to_string(f) + " out of range");
    for (auto t : ts) {
      if (t >= tops.size()) throw UsageError("topology index " + std::to_string(t) + " out of range");
      GridConfig c;
      c.config_id = grid.size();
      c.feature_set_index = f;
      c.feature_set = sets[f];
      c.hidden = tops[t].resolved;
      c.seed = config_seed(master_seed, c.config_id);
      grid.push_back(std::move(c));
    }
  }
  return grid;
}

struct SearchRow {
  GridConfig config;
  double r2_train = std::nan("");
  double r2_test_a = std::nan("");
  double r2_test_b = std::nan("");
  double error = std::nan("");  // E
  double seconds = 0.0;
  int epochs_run = 0;
  bool ok = false;
  std::string status;
};

struct SearchReport {
  std::vector<SearchRow> rows;  // config order
  std::optional<std::size_t> best;
};

/// Minimal E; ties prefer fewer neurons, then the lexicographically smaller
/// hidden tuple, then the earlier feature set. Independent of row order.
inline std::size_t best_config_index(const SearchReport& report) {
  std::optional<std::size_t> best;
  auto key_less = [&](const SearchRow& a, const SearchRow& b) {
    if (a.error != b.error) return a.error < b.error;
    if (a.config.total_neurons() != b.config.total_neurons())
      return a.config.total_neurons() < b.config.total_neurons();
    if (a.config.hidden != b.config.hidden) return a.config.hidden < b.config.hidden;
    if (a.config.feature_set_index != b.config.feature_set_index)
      return a.config.feature_set_index < b.config.feature_set_index;
    return a.config.config_id < b.config.config_id;
  };
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    if (!r.ok || !std::isfinite(r.error)) continue;
    if (!best || key_less(r, report.rows[*best])) best = i;
  }
  if (!best) throw NumericError("best_config: every configuration failed");
  return *best;
}

inline GridConfig best_config(const SearchReport& report) {
  return report.rows[best_config_index(report)].config;
}

struct GridOptions {
  TrainConfig train;  // seed is replaced per configuration
  std::size_t parallelism = 1;
  std::function<void(const SearchRow&)> on_row;  // called from worker threads; may be empty
};

namespace detail {

struct CachedFeatures {
  std::vector<std::size_t> windows;
  std::vector<double> train, test_a, test_b;
  std::size_t n_train = 0, n_a = 0, n_b = 0;
};

}  // namespace detail

/// Trains every configuration on `train` and scores both test sets. Rows are
/// returned in config order whatever the execution order; each config draws
/// from its own stream seeded by (master_seed, config_id).
inline SearchReport run_grid(const PreparedDataset& train_ds, const PreparedDataset& test_a,
                             const PreparedDataset& test_b, const std::vector<GridConfig>& configs,
                             std::uint64_t master_seed, const GridOptions& opts = {}) {
  for (const auto* ds : {&test_a, &test_b}) {
    if (ds->rate_hz() != train_ds.rate_hz()) throw DataError("run_grid: test set rate differs from training");
    if (ds->scaler_source != train_ds.scaler_source)
      throw DataError("run_grid: test set '" + ds->source_label + "' not standardized with training scalers");
    if (ds->target != train_ds.target) throw DataError("run_grid: target differs between datasets");
  }
  validate(opts.train);

  std::map<std::size_t, detail::CachedFeatures> cache;
  for (const auto& c : configs) {
    if (cache.count(c.feature_set_index)) continue;
    detail::CachedFeatures f;
    f.windows = init_windows(c.feature_set, train_ds.rate_hz(), train_ds.size());
    const auto ftr = feature_bank(train_ds.g_bar, c.feature_set, f.windows);
    const auto fa = feature_bank(test_a.g_bar, c.feature_set, f.windows);
    const auto fb = feature_bank(test_b.g_bar, c.feature_set, f.windows);
    f.train = ftr.row_major();
    f.test_a = fa.row_major();
    f.test_b = fb.row_major();
    f.n_train = ftr.rows();
    f.n_a = fa.rows();
    f.n_b = fb.rows();
    cache.emplace(c.feature_set_index, std::move(f));
  }

  SearchReport report;
  report.rows.resize(configs.size());
  auto evaluate = [&](std::size_t i) {
    const auto& c = configs[i];
    SearchRow row;
    row.config = c;
    row.config.seed = config_seed(master_seed, c.config_id);
    const auto& f = cache.at(c.feature_set_index);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      std::vector<std::size_t> sizes{c.feature_set.size()};
      sizes.insert(sizes.end(), c.hidden.begin(), c.hidden.end());
      sizes.push_back(1);
      TrainConfig tc = opts.train;
      tc.seed = row.config.seed;
      auto trained = train(mlp_new(sizes, mix_seed(tc.seed)), f.train, train_ds.target_bar, tc);
      row.epochs_run = trained.report.epochs_run;
      row.r2_train = r_squared(train_ds.target_bar, predict(trained.model, f.train, f.n_train));
      row.r2_test_a = r_squared(test_a.target_bar, predict(trained.model, f.test_a, f.n_a));
      row.r2_test_b = r_squared(test_b.target_bar, predict(trained.model, f.test_b, f.n_b));
      row.error = combined_error(row.r2_test_a, row.r2_test_b);
      row.ok = std::isfinite(row.error);
      row.status = row.ok ? "ok" : "failed:non-finite score";
    } catch (const Error& e) {
      row.ok = false;
      row.status = std::string("failed:") + e.what();
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opts.on_row) opts.on_row(row);
    report.rows[i] = std::move(row);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.parallelism, configs.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) evaluate(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) evaluate(i);
      });
    for (auto& t : pool) t.join();
  }
  bool any_ok = false;
  for (const auto& r : report.rows) any_ok = any_ok || r.ok;
  if (any_ok) report.best = best_config_index(report);
  return report;
}

namespace detail {

inline std::string csv_safe(std::string s) {
  for (auto& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return s;
}

}  // namespace detail

/// Report CSV. Wall-clock seconds are written only with include_timing;
/// otherwise the column holds "-" so identical runs give identical bytes.
inline void write_report_csv(std::ostream& out, const SearchReport& report, bool include_timing = false) {
  out << "config_id,feature_set,alphas,hidden_sizes,r2_train,r2_testA,r2_testB,E,seconds,status\n";
  out << std::setprecision(12);
  for (const auto& r : report.rows) {
    out << r.config.config_id << ',' << r.config.feature_set.label() << ',';
    for (std::size_t i = 0; i < r.config.feature_set.alphas.size(); ++i)
      out << (i ? ";" : "") << r.config.feature_set.alphas[i];
    out << ',' << join_sizes(r.config.hidden) << ',' << r.r2_train << ',' << r.r2_test_a << ',' << r.r2_test_b
        << ',' << r.error << ',';
    if (include_timing)
      out << std::fixed << std::setprecision(3) << r.seconds << std::defaultfloat << std::setprecision(12);
    else
      out << '-';
    out << ',' << detail::csv_safe(r.status) << '\n';
  }
}

}  // namespace knitfix
