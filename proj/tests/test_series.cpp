#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "knitfix/series.hpp"

using namespace knitfix;

namespace {

std::string error_of(const std::string& csv) {
  std::istringstream in(csv);
  try {
    load_recording(in);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

// Independent piecewise-linear evaluator: binary search over knots.
double eval_knots(const std::vector<double>& kt, const std::vector<double>& kv, double t) {
  auto it = std::upper_bound(kt.begin(), kt.end(), t);
  if (it == kt.begin()) return kv.front();
  if (it == kt.end()) return kv.back();
  const auto i = static_cast<std::size_t>(it - kt.begin()) - 1;
  return kv[i] + (kv[i + 1] - kv[i]) * (t - kt[i]) / (kt[i + 1] - kt[i]);
}

}  // namespace

TEST(LoadRecording, ParsesRowsInOrder) {
  std::istringstream in(
      "t_s,force_n,resistance_ohm,displacement_mm\n"
      "0,1.5,1e6,0\n0.025,1.6,1e6,0.1\n0.05,1.7,1e6,0.2\n");
  const auto rec = load_recording(in, "mem");
  ASSERT_EQ(rec.size(), 3u);
  EXPECT_DOUBLE_EQ(rec.rows[1].t, 0.025);
  EXPECT_DOUBLE_EQ(rec.rows[2].resistance, 1e6);
  EXPECT_DOUBLE_EQ(rec.rows[2].displacement, 0.2);
  EXPECT_EQ(rec.source_label, "mem");
}

TEST(LoadRecording, RejectsRepeatedTimestampWithLineNumber) {
  const auto msg = error_of("t_s,force_n,resistance_ohm,displacement_mm\n0.1,1,1e6,0\n0.1,1,1e6,0\n");
  EXPECT_NE(msg.find("non-increasing timestamp at line 3"), std::string::npos) << msg;
}

TEST(LoadRecording, RejectsNonPositiveResistance) {
  const auto msg = error_of("t_s,force_n,resistance_ohm,displacement_mm\n0,1,1e6,0\n0.1,1,-5,0\n");
  EXPECT_NE(msg.find("non-positive resistance"), std::string::npos) << msg;
}

TEST(LoadRecording, RejectsMalformedInput) {
  EXPECT_NE(error_of("t,F,R,d\n0,1,1,0\n").find("bad header"), std::string::npos);
  EXPECT_NE(error_of("t_s,force_n,resistance_ohm,displacement_mm\n0,1,1e6\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("t_s,force_n,resistance_ohm,displacement_mm\n0,1,1e6,0\n1,abc,1e6,0\n").find("line 3"),
            std::string::npos);
  EXPECT_NE(error_of("t_s,force_n,resistance_ohm,displacement_mm\n0,1,1e6,0\n1,nan,1e6,0\n").find("non-finite"),
            std::string::npos);
  EXPECT_NE(error_of("t_s,force_n,resistance_ohm,displacement_mm\n0,1,1e6,0\n").find("at least 2"),
            std::string::npos);
}

TEST(LoadRecording, WriterRoundTripsExactly) {
  RawRecording rec{{{0.0, 0.1, 1.0 / 3.0 * 1e6, 0.2}, {0.0241, 1.0 / 7.0, 987654.321, 12.5}}, "x"};
  std::stringstream ss;
  write_recording(ss, rec);
  const auto back = load_recording(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.rows[i].t, rec.rows[i].t);
    EXPECT_EQ(back.rows[i].force, rec.rows[i].force);
    EXPECT_EQ(back.rows[i].resistance, rec.rows[i].resistance);
    EXPECT_EQ(back.rows[i].displacement, rec.rows[i].displacement);
  }
}

TEST(Resample, HandInterpolation) {
  const std::vector<double> t{0, 1}, x{0, 2};
  const auto s = resample(t, x, 2.0);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_DOUBLE_EQ(s.values[0], 0.0);
  EXPECT_DOUBLE_EQ(s.values[1], 1.0);
  EXPECT_DOUBLE_EQ(s.values[2], 2.0);
  EXPECT_DOUBLE_EQ(s.time_at(1), 0.5);
}

TEST(Resample, UniformInputUnchanged) {
  std::vector<double> t, x;
  for (int k = 0; k < 200; ++k) {
    t.push_back(static_cast<double>(k) / 20.0);
    x.push_back(std::sin(0.1 * k) + 0.01 * k);
  }
  const auto s = resample(t, x, 20.0);
  ASSERT_EQ(s.size(), x.size());
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_EQ(s.values[k], x[k]);
  const auto again = resample(t, s.values, 20.0);
  EXPECT_EQ(again.values, s.values);
}

TEST(Resample, JitteredPiecewiseLinearReproduced) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> rate(41.5, 14.2);
  std::vector<double> t{0.0};
  while (t.size() < 4000) t.push_back(t.back() + 1.0 / std::clamp(rate(rng), 5.0, 200.0));

  // Knots on every 37th sample so the signal is linear between consecutive samples.
  std::vector<double> kt, kv;
  std::uniform_real_distribution<double> val(-3, 3);
  for (std::size_t i = 0; i < t.size(); i += 37) {
    kt.push_back(t[i]);
    kv.push_back(val(rng));
  }
  if (kt.back() != t.back()) {
    kt.push_back(t.back());
    kv.push_back(val(rng));
  }
  std::vector<double> x;
  for (double ti : t) x.push_back(eval_knots(kt, kv, ti));

  const auto s = resample(t, x, 20.0);
  EXPECT_EQ(s.rate_hz, 20.0);
  EXPECT_EQ(s.values.front(), x.front());
  EXPECT_LE(s.time_at(s.size() - 1), t.back());
  EXPECT_GT(s.time_at(s.size()), t.back());
  for (std::size_t k = 0; k < s.size(); ++k)
    ASSERT_NEAR(s.values[k], eval_knots(kt, kv, s.time_at(k)), 1e-12) << "k=" << k;
}

TEST(Resample, CommutesWithAffineMaps) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dt(0.005, 0.08), v(-1, 1);
  std::vector<double> t{0.0}, x{v(rng)};
  for (int i = 0; i < 500; ++i) {
    t.push_back(t.back() + dt(rng));
    x.push_back(v(rng));
  }
  const double a = -2.5, b = 0.75;
  std::vector<double> y;
  for (double xi : x) y.push_back(a * xi + b);
  const auto rx = resample(t, x, 20.0), ry = resample(t, y, 20.0);
  ASSERT_EQ(rx.size(), ry.size());
  for (std::size_t k = 0; k < rx.size(); ++k) EXPECT_NEAR(ry.values[k], a * rx.values[k] + b, 1e-12);
}

TEST(Resample, AcceptsAlternateRatesAndRejectsBadInput) {
  const std::vector<double> t{0, 0.5, 1.0}, x{1, 2, 3};
  EXPECT_EQ(resample(t, x, 10.0).size(), 11u);
  EXPECT_EQ(resample(t, x, 40.0).size(), 41u);
  EXPECT_THROW(resample(t, x, 0.0), DataError);
  EXPECT_THROW(resample(t, x, -20.0), DataError);
  const std::vector<double> one{0};
  EXPECT_THROW(resample(one, one, 20.0), DataError);
  const std::vector<double> bad_t{0, 1, 1};
  EXPECT_THROW(resample(bad_t, x, 20.0), DataError);
}

TEST(Conductivity, Reciprocal) {
  EXPECT_DOUBLE_EQ(conductivity({20, 0, {2.0}}).values[0], 0.5);
  const auto g = conductivity({20, 1.5, {1e6, 5e5}});
  EXPECT_DOUBLE_EQ(g.values[0], 1e-6);
  EXPECT_DOUBLE_EQ(g.values[1], 2e-6);
  EXPECT_EQ(g.t0, 1.5);
  EXPECT_EQ(g.rate_hz, 20.0);
  EXPECT_THROW(conductivity({20, 0, {0.0}}), DataError);
  EXPECT_THROW(conductivity({20, 0, {1.0, -1.0}}), DataError);
}

TEST(Conductivity, InvolutionOnPositiveSeries) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> r(1e3, 1e7);
  UniformSeries s{20, 0, {}};
  for (int i = 0; i < 1000; ++i) s.values.push_back(r(rng));
  const auto back = conductivity(conductivity(s));
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(back.values[i] / s.values[i], 1.0, 1e-12);
}

TEST(Scaler, FitExamples) {
  const std::vector<double> a{1, 2, 3};
  const auto p = scaler_fit(a);
  EXPECT_DOUBLE_EQ(p.mean, 2.0);
  EXPECT_NEAR(p.scale, std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(p.scale, 0.816497, 1e-6);

  const std::vector<double> b{-1, 1};
  const auto q = scaler_fit(b);
  EXPECT_DOUBLE_EQ(q.mean, 0.0);
  EXPECT_DOUBLE_EQ(q.scale, 1.0);

  const std::vector<double> c{5, 5, 5};
  try {
    scaler_fit(c);
    FAIL() << "expected zero variance error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("zero variance"), std::string::npos);
  }
}

TEST(Scaler, TransformExamples) {
  const std::vector<double> xs{1, 2, 3};
  const auto z = scaler_transform({2.0, 0.816497}, xs);
  EXPECT_NEAR(z[0], -1.224745, 1e-6);
  EXPECT_NEAR(z[1], 0.0, 1e-12);
  EXPECT_NEAR(z[2], 1.224745, 1e-6);
  EXPECT_EQ(scaler_transform({0.0, 1.0}, xs), xs);
  EXPECT_THROW(scaler_transform({0.0, 0.0}, xs), DataError);
}

TEST(Scaler, RoundTripAndStandardization) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(3e-6, 1e-6);
    std::vector<double> xs(2000);
    for (auto& x : xs) x = d(rng);
    const auto p = scaler_fit(xs);
    const auto z = scaler_transform(p, xs);
    const auto back = scaler_inverse(p, z);
    for (std::size_t i = 0; i < xs.size(); ++i) ASSERT_NEAR(back[i], xs[i], 1e-12);
    double m = 0, v = 0;
    for (double zi : z) m += zi;
    m /= static_cast<double>(z.size());
    for (double zi : z) v += (zi - m) * (zi - m);
    v /= static_cast<double>(z.size());
    EXPECT_LT(std::abs(m), 1e-9);
    EXPECT_LT(std::abs(v - 1.0), 1e-9);
  }
}
