#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "knitfix/pipeline.hpp"
#include "knitfix/simulate.hpp"

using namespace knitfix;

namespace {

// Recording already on the 20 Hz grid so resampling is the identity.
RawRecording uniform_recording(std::uint64_t seed, std::size_t n, std::string label) {
  const auto traj = gen_trajectory(seed, double(n) / 20.0 + 1.0);
  const auto state = sensor_response(traj, preset_pes());
  RawRecording rec;
  rec.source_label = std::move(label);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = k * 5;  // 100 Hz -> 20 Hz
    rec.rows.push_back({static_cast<double>(k) / 20.0, state.force[j], 1.0 / state.conductance[j], traj.d[j]});
  }
  return rec;
}

PipelineConfig quick_config() {
  auto cfg = default_best_config();
  cfg.train.max_iter = 30;
  cfg.train.seed = 5;
  return cfg;
}

const std::vector<RawRecording>& recordings() {
  static const auto recs = make_dataset(21, preset_pes(), 2, 180.0);
  return recs;
}

const PipelineBundle& trained_bundle() {
  static const auto b = fit_pipeline(recordings()[0], quick_config());
  return b;
}

std::string saved_text(const PipelineBundle& b) {
  std::ostringstream os;
  save_bundle(b, os);
  return os.str();
}

}  // namespace

TEST(Prepare, ConstantResistanceIsRejected) {
  RawRecording rec;
  for (int k = 0; k < 100; ++k) rec.rows.push_back({k * 0.05, 0.1 * k, 5e5, 0.0});
  try {
    prepare(rec);
    FAIL() << "expected zero variance";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("zero variance"), std::string::npos);
  }
}

TEST(Prepare, AlignedChannelsAndStandardized) {
  const auto ds = prepare(recordings()[0]);
  EXPECT_EQ(ds.g_bar.size(), ds.target_bar.size());
  EXPECT_EQ(ds.target_raw.size(), ds.target_bar.size());
  EXPECT_EQ(ds.rate_hz(), 20.0);
  EXPECT_EQ(ds.scaler_source, "pes/seed21/train");
  double m = 0;
  for (double v : ds.g_bar.values) m += v;
  EXPECT_NEAR(m / double(ds.size()), 0.0, 1e-9);

  const auto disp = prepare(recordings()[0], 20.0, Target::displacement);
  EXPECT_EQ(disp.target, Target::displacement);
  EXPECT_EQ(disp.g_bar.values, ds.g_bar.values);
  EXPECT_NE(disp.target_bar, ds.target_bar);
  EXPECT_THROW(parse_target("strain"), UsageError);
}

TEST(Pipeline, DefaultConfig) {
  const auto cfg = default_best_config();
  EXPECT_EQ(cfg.rate_hz, 20.0);
  EXPECT_EQ(cfg.alphas.size(), 7u);
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{4, 2, 2}));
  EXPECT_EQ(cfg.layer_sizes(), (std::vector<std::size_t>{7, 4, 2, 2, 1}));
  EXPECT_EQ(cfg.target, Target::force);
}

TEST(Pipeline, FitIsDeterministicAndSelfConsistent) {
  const auto& b = trained_bundle();
  EXPECT_EQ(b.feature_count(), 7u);
  EXPECT_EQ(b.init_windows.size(), 7u);
  EXPECT_EQ(b.provenance.train_source, "pes/seed21/train");
  const auto again = fit_pipeline(recordings()[0], quick_config());
  EXPECT_EQ(again.model.layers[0].weights, b.model.layers[0].weights);
  EXPECT_EQ(again.r2_train, b.r2_train);

  const auto pred = predict_batch(b, recordings()[0]);
  EXPECT_NEAR(pred.score.r2_post, b.r2_train, 1e-9);
  EXPECT_EQ(pred.p.size(), pred.target_bar.size());
}

TEST(Pipeline, IdentityBundlePassesConductanceThrough) {
  const auto& rec = recordings()[1];
  const auto ds = prepare(rec);
  PipelineBundle b;
  b.config.alphas = AlphaSet{std::nullopt, {1.0}};
  b.config.hidden = {};
  b.scaler_g = ds.scaler_g;
  b.scaler_t = ds.scaler_t;
  b.init_windows = {1};
  b.model = mlp_new({1, 1}, 1);
  b.model.layers[0].weights = {1.0};
  b.model.layers[0].biases = {0.0};
  b.provenance.train_source = rec.source_label;

  const auto pred = predict_batch(b, rec);
  EXPECT_EQ(pred.p.values, ds.g_bar.values);
  EXPECT_EQ(pred.score.gain, 0.0);
}

TEST(Pipeline, ProvenanceMismatchIsRejected) {
  const auto& b = trained_bundle();
  const auto own = prepare(recordings()[1]);
  EXPECT_THROW(predict_prepared(b, own), DataError);
  const auto shared = prepare_with(recordings()[1], prepare(recordings()[0]));
  EXPECT_NO_THROW(predict_prepared(b, shared));
}

TEST(Stream, MatchesBatchAfterWarmup) {
  const auto rec = uniform_recording(8, 1200, "uniform/train");
  const auto b = fit_pipeline(rec, quick_config());
  const auto batch = predict_batch(b, rec);
  ASSERT_EQ(batch.p.size(), rec.size());

  StreamSession s(b);
  const std::size_t warm = s.warmup();
  EXPECT_EQ(warm, b.max_window());
  EXPECT_GT(warm, 1u);
  for (std::size_t k = 0; k < rec.size(); ++k) {
    const auto p = s.push(rec.rows[k].t, rec.rows[k].resistance);
    if (k + 1 < warm) {
      ASSERT_FALSE(p) << k;
    } else {
      ASSERT_TRUE(p) << k;
      ASSERT_NEAR(*p, batch.p.values[k], 1e-9) << k;
    }
  }
  EXPECT_EQ(s.samples_seen(), rec.size());
  EXPECT_THROW(s.push(99.0, 0.0), DataError);
}

TEST(Stream, IdentityConfigEmitsScaledSample) {
  PipelineBundle b;
  b.config.alphas = AlphaSet{std::nullopt, {1.0}};
  b.config.hidden = {};
  b.scaler_g = {2e-6, 5e-7};
  b.init_windows = {1};
  b.model = mlp_new({1, 1}, 1);
  b.model.layers[0].weights = {1.0};
  b.model.layers[0].biases = {0.0};
  StreamSession s(b);
  for (double r : {4e5, 5e5, 2.5e5}) {
    const auto p = s.push(0.0, r);
    ASSERT_TRUE(p);
    EXPECT_DOUBLE_EQ(*p, (1.0 / r - 2e-6) / 5e-7);
  }
}

TEST(Bundle, RoundTripIsExact) {
  const auto& b = trained_bundle();
  const std::string text = saved_text(b);
  std::istringstream in(text);
  const auto back = load_bundle(in);
  EXPECT_EQ(saved_text(back), text);
  const auto p1 = predict_batch(b, recordings()[1]).p.values;
  const auto p2 = predict_batch(back, recordings()[1]).p.values;
  ASSERT_EQ(p1.size(), p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) ASSERT_EQ(p1[i], p2[i]);
  EXPECT_EQ(back.config.alphas.alphas, b.config.alphas.alphas);
  EXPECT_EQ(back.init_windows, b.init_windows);
}

TEST(Bundle, TruncatedOrCorruptedIsRejected) {
  const std::string text = saved_text(trained_bundle());
  std::istringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_bundle(truncated), DataError);

  std::string flipped = text;
  const auto pos = flipped.find("\"weights\"") + 20;
  flipped[pos] = flipped[pos] == '1' ? '2' : '1';
  std::istringstream corrupted(flipped);
  try {
    load_bundle(corrupted);
    FAIL() << "expected checksum error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
}

TEST(Bundle, VersionMismatchIsRejected) {
  auto j = detail::to_json(trained_bundle());
  j["version"] = kBundleVersion + 1;
  const std::string body = j.dump(2) + "\n";
  std::istringstream in(body + std::string(detail::kChecksumTag) + detail::hex64(detail::fnv1a64(body)) + "\n");
  try {
    load_bundle(in);
    FAIL() << "expected version error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
}

TEST(Bundle, FrozenFixtureStillLoads) {
  const auto b = load_bundle(std::string(KNITFIX_TEST_DATA_DIR) + "/bundle_v1.kfb");
  EXPECT_EQ(b.config.layer_sizes(), (std::vector<std::size_t>{7, 4, 2, 2, 1}));
  EXPECT_EQ(b.provenance.train_source, "pes/seed42/train");
  EXPECT_TRUE(all_finite(b.model));
  std::ifstream in(std::string(KNITFIX_TEST_DATA_DIR) + "/bundle_v1.kfb", std::ios::binary);
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  EXPECT_EQ(saved_text(b), text);
}
