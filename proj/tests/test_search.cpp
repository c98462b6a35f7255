#include <algorithm>
#include <chrono>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "knitfix/search.hpp"
#include "knitfix/simulate.hpp"

using namespace knitfix;

TEST(FeatureSets, EightSetsInOrder) {
  const auto sets = enumerate_feature_sets();
  ASSERT_EQ(sets.size(), 8u);
  const std::vector<std::pair<double, int>> expected{{2.5, 4}, {2.5, 7}, {2.5, 10}, {5, 4},
                                                     {5, 7},   {10, 3},  {10, 4}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    ASSERT_TRUE(sets[i].base);
    EXPECT_EQ(*sets[i].base, expected[i].first);
    EXPECT_EQ(sets[i].size(), static_cast<std::size_t>(expected[i].second));
  }
  EXPECT_FALSE(sets[7].base);
  EXPECT_EQ(sets[7].alphas, baseline_alpha_set().alphas);

  const std::vector<double> best{0.4, 0.16, 0.064, 0.0256, 0.01024, 0.004096, 0.0016384};
  for (std::size_t i = 0; i < best.size(); ++i) EXPECT_NEAR(sets[1].alphas[i], best[i], 1e-12);
  EXPECT_NEAR(sets[2].alphas.back(), 0.000104858, 1e-9);
  EXPECT_NEAR(sets[4].alphas.back(), 0.0000128, 1e-12);
}

TEST(Topologies, ListedVectorsDeduplicate) {
  EXPECT_EQ(topology_vectors_as_listed().size(), 21u);
  EXPECT_EQ(topology_vectors().size(), 20u);
}

TEST(Topologies, ExactlyOneHundredFourteen) {
  const auto tops = enumerate_topologies();
  EXPECT_EQ(tops.size(), 114u);
  std::set<std::vector<std::size_t>> unique;
  for (const auto& t : tops) {
    unique.insert(t.resolved);
    EXPECT_GE(t.resolved.size(), 2u);
    EXPECT_LE(t.resolved.size(), 4u);
    for (auto w : t.resolved) {
      EXPECT_GE(w, 2u);
      EXPECT_LE(w, 32u);
    }
  }
  EXPECT_EQ(unique.size(), 114u);
}

TEST(Topologies, FlooringDropsNarrowLayers) {
  const auto tops = enumerate_topologies();
  auto has = [&](std::vector<std::size_t> v) {
    return std::any_of(tops.begin(), tops.end(), [&](const TopologySpec& t) { return t.resolved == v; });
  };
  EXPECT_FALSE(has({3, 6, 1}));  // 6 x (1/2, 1, 1/4)
  std::vector<std::vector<std::size_t>> base2;
  for (const auto& t : tops)
    if (t.base == 2) base2.push_back(t.resolved);
  EXPECT_EQ(base2, (std::vector<std::vector<std::size_t>>{{2, 2}, {2, 2, 2}, {2, 2, 2, 2}}));
  EXPECT_TRUE(has({4, 2, 2}));
}

TEST(Grid, NineHundredTwelveConfigs) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto grid = enumerate_grid(1);
  EXPECT_EQ(grid.size(), 912u);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(grid[i].config_id, i);
  EXPECT_EQ(enumerate_grid(1, {0, 1}, {0, 1, 2, 3, 4, 5}).size(), 12u);
  EXPECT_THROW(enumerate_grid(1, {8}), UsageError);
}

namespace {

SearchRow row(double e, std::vector<std::size_t> hidden, std::size_t fs = 0, std::size_t id = 0) {
  SearchRow r;
  r.config.hidden = std::move(hidden);
  r.config.feature_set_index = fs;
  r.config.config_id = id;
  r.error = e;
  r.ok = true;
  return r;
}

}  // namespace

TEST(BestConfig, TieBreaksOnSize) {
  SearchReport rep;
  rep.rows = {row(0.3, {4, 4}, 0, 0), row(0.2, {4, 4, 2}, 0, 1), row(0.2, {4, 2, 2}, 0, 2)};
  EXPECT_EQ(best_config_index(rep), 2u);
  EXPECT_EQ(best_config(rep).hidden, (std::vector<std::size_t>{4, 2, 2}));
}

TEST(BestConfig, SingleRowAndAllFailed) {
  SearchReport rep;
  rep.rows = {row(0.5, {2, 2})};
  EXPECT_EQ(best_config_index(rep), 0u);
  rep.rows[0].ok = false;
  EXPECT_THROW(best_config_index(rep), NumericError);
}

TEST(BestConfig, PermutationInvariant) {
  std::vector<SearchRow> rows;
  std::mt19937_64 rng(3);
  const auto tops = enumerate_topologies();
  for (std::size_t i = 0; i < 60; ++i)
    rows.push_back(row(0.1 * double(rng() % 4), tops[rng() % tops.size()].resolved, rng() % 8, i));
  SearchReport rep{rows, {}};
  const auto expected_id = rep.rows[best_config_index(rep)].config.config_id;
  for (int t = 0; t < 20; ++t) {
    std::shuffle(rep.rows.begin(), rep.rows.end(), rng);
    EXPECT_EQ(rep.rows[best_config_index(rep)].config.config_id, expected_id);
  }
}

namespace {

struct Prepared {
  PreparedDataset train, a, b;
};

const Prepared& small_data() {
  static const Prepared p = [] {
    const auto recs = make_dataset(5, preset_pes(), 3, 120.0);
    Prepared out;
    out.train = prepare(recs[0]);
    out.a = prepare_with(recs[1], out.train);
    out.b = prepare_with(recs[2], out.train);
    return out;
  }();
  return p;
}

}  // namespace

TEST(RunGrid, SingleConfig) {
  const auto& d = small_data();
  const auto grid = enumerate_grid(3, {1}, {0});
  GridOptions opts;
  opts.train.max_iter = 20;
  const auto rep = run_grid(d.train, d.a, d.b, grid, 3, opts);
  ASSERT_EQ(rep.rows.size(), 1u);
  ASSERT_TRUE(rep.best);
  EXPECT_EQ(*rep.best, 0u);
  EXPECT_TRUE(rep.rows[0].ok);
  EXPECT_NEAR(rep.rows[0].error, combined_error(rep.rows[0].r2_test_a, rep.rows[0].r2_test_b), 0.0);
}

TEST(RunGrid, IndependentOfParallelism) {
  const auto& d = small_data();
  const auto grid = enumerate_grid(11, {1, 7}, {0, 3, 5});
  GridOptions opts;
  opts.train.max_iter = 15;
  opts.parallelism = 1;
  const auto r1 = run_grid(d.train, d.a, d.b, grid, 11, opts);
  opts.parallelism = 4;
  const auto r4 = run_grid(d.train, d.a, d.b, grid, 11, opts);
  std::ostringstream s1, s4;
  write_report_csv(s1, r1);
  write_report_csv(s4, r4);
  EXPECT_EQ(s1.str(), s4.str());
  EXPECT_EQ(r1.best, r4.best);
  EXPECT_EQ(s1.str().substr(0, s1.str().find('\n')),
            "config_id,feature_set,alphas,hidden_sizes,r2_train,r2_testA,r2_testB,E,seconds,status");
}

TEST(RunGrid, DivergedConfigsAreKeptWithFailureMarker) {
  const auto& d = small_data();
  const auto grid = enumerate_grid(2, {0}, {0, 1});
  GridOptions opts;
  opts.train.max_iter = 50;
  opts.train.learning_rate = 1e9;
  const auto rep = run_grid(d.train, d.a, d.b, grid, 2, opts);
  ASSERT_EQ(rep.rows.size(), 2u);
  for (const auto& r : rep.rows) {
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.status.rfind("failed:", 0), 0u) << r.status;
  }
  EXPECT_FALSE(rep.best);
}

TEST(RunGrid, RejectsForeignScalers) {
  const auto& d = small_data();
  const auto own = prepare(make_dataset(6, preset_pes(), 2, 60.0)[1]);
  EXPECT_THROW(run_grid(d.train, own, d.b, enumerate_grid(1, {0}, {0}), 1), DataError);
}
