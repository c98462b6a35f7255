#pragma once

// Synthetic knitted-sensor oracle: Perlin-noise actuation trajectories and a
// lumped contact model with relaxation, hysteresis, logarithmic drift and
// offset, sampled on a jittered clock.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "knitfix/error.hpp"
#include "knitfix/seed.hpp"
#include "knitfix/series.hpp"

namespace knitfix {

namespace detail {

inline double lattice_gradient(std::uint64_t seed, int octave, std::int64_t i) noexcept {
  const std::uint64_t h = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(octave)),
                                      static_cast<std::uint64_t>(i));
  // 53 high bits -> [0, 1) -> [-1, 1)
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

inline double octave_offset(std::uint64_t seed, int octave) noexcept {
  if (octave == 0) return 0.0;
  const std::uint64_t h = derive_seed(seed ^ 0xA5A5A5A5A5A5A5A5ull, static_cast<std::uint64_t>(octave));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 1024.0;
}

// Single-octave gradient noise in [-1, 1], zero at integer x.
inline double gradient_noise(std::uint64_t seed, int octave, double x) noexcept {
  const double fl = std::floor(x);
  const auto i0 = static_cast<std::int64_t>(fl);
  const double f = x - fl;
  const double fade = f * f * f * (f * (f * 6.0 - 15.0) + 10.0);
  const double v0 = lattice_gradient(seed, octave, i0) * f;
  const double v1 = lattice_gradient(seed, octave, i0 + 1) * (f - 1.0);
  // |v0 + fade (v1 - v0)| <= 1/2 for gradients in [-1, 1].
  return 2.0 * (v0 + fade * (v1 - v0));
}

}  // namespace detail

/// Octave sum with frequency doubling and amplitude halving, normalized to [-1, 1].
inline double perlin1d(std::uint64_t seed, int octaves, double base_freq_hz, double t) {
  if (octaves < 1) throw DataError("perlin1d: octaves must be >= 1");
  if (!(base_freq_hz > 0.0)) throw DataError("perlin1d: base frequency must be > 0");
  double sum = 0.0, amp = 1.0, norm = 0.0, freq = base_freq_hz;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * detail::gradient_noise(seed, o, t * freq + detail::octave_offset(seed, o));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return std::clamp(sum / norm, -1.0, 1.0);
}

inline constexpr double kTrajectoryRateHz = 100.0;
inline constexpr double kTrajectoryBaseFreqHz = 0.08;  // mean |v| ~ 1 mm/s at 100 mm, 30 % strain
inline constexpr int kTrajectoryOctaves = 3;

struct Trajectory {
  double rest_length_mm = 100.0;
  double max_strain = 0.30;
  std::vector<double> t;  // seconds, 100 Hz grid
  std::vector<double> d;  // displacement, mm

  std::size_t size() const noexcept { return t.size(); }
  double strain(std::size_t k) const noexcept { return d[k] / rest_length_mm; }
};

inline Trajectory gen_trajectory(std::uint64_t seed, double duration_s, double rest_length_mm = 100.0,
                                 double max_strain = 0.30, double speed_scale = 1.0) {
  if (!(duration_s > 0.0)) throw DataError("gen_trajectory: duration must be > 0");
  if (!(max_strain > 0.0 && max_strain <= 1.0)) throw DataError("gen_trajectory: max strain outside (0, 1]");
  if (!(rest_length_mm > 0.0)) throw DataError("gen_trajectory: rest length must be > 0");
  if (!(speed_scale > 0.0)) throw DataError("gen_trajectory: speed scale must be > 0");
  Trajectory tr;
  tr.rest_length_mm = rest_length_mm;
  tr.max_strain = max_strain;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kTrajectoryRateHz));
  tr.t.resize(n);
  tr.d.resize(n);
  const double amplitude = rest_length_mm * max_strain;
  for (std::size_t k = 0; k < n; ++k) {
    tr.t[k] = static_cast<double>(k) / kTrajectoryRateHz;
    const double u = perlin1d(seed, kTrajectoryOctaves, kTrajectoryBaseFreqHz * speed_scale, tr.t[k]);
    tr.d[k] = amplitude * 0.5 * (u + 1.0);
  }
  return tr;
}

/// Constant-displacement trajectory, 100 Hz.
inline Trajectory frozen_trajectory(double duration_s, double displacement_mm, double rest_length_mm = 100.0) {
  Trajectory tr;
  tr.rest_length_mm = rest_length_mm;
  tr.max_strain = std::max(displacement_mm / rest_length_mm, 1e-12);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kTrajectoryRateHz));
  for (std::size_t k = 0; k < n; ++k) {
    tr.t.push_back(static_cast<double>(k) / kTrajectoryRateHz);
    tr.d.push_back(displacement_mm);
  }
  return tr;
}

struct SensorPreset {
  std::string name = "custom";
  double stiffness_n = 73.03;        // k: F = k * strain^p
  double stiffness_exponent = 1.5;   // p
  double base_conductance_s = 1e-6;  // g0
  double strain_sensitivity = 3.0;   // s
  double drift_magnitude = 0.045;    // beta
  double drift_timescale_s = 15.0;   // tau_d
  double tau_load_s = 0.5;
  double tau_unload_s = 2.0;
  double offset_s = 2e-8;     // o, additive conductance
  double noise_r = 0.01;      // relative resistance noise (sigma_R)
  double noise_force_n = 0.05;  // sigma_F
};

inline void validate(const SensorPreset& p) {
  if (!(p.stiffness_n > 0.0)) throw DataError("preset: stiffness must be > 0");
  if (!(p.stiffness_exponent > 0.0)) throw DataError("preset: stiffness exponent must be > 0");
  if (!(p.base_conductance_s > 0.0)) throw DataError("preset: base conductance must be > 0");
  if (!(p.drift_timescale_s > 0.0 && p.tau_load_s > 0.0 && p.tau_unload_s > 0.0))
    throw DataError("preset: timescales must be > 0");
  if (!(p.noise_r >= 0.0 && p.noise_force_n >= 0.0)) throw DataError("preset: noise levels must be >= 0");
}

// Calibrated so that the standardized conductance/force r^2 of a fresh
// recording sits near 0.47 (PES) and 0.70 (Lycra). Full-scale forces at 30 %
// strain are ~12 N and ~25 N.
inline SensorPreset preset_pes() {
  SensorPreset p;
  p.name = "pes";
  return p;
}

inline SensorPreset preset_lycra() {
  SensorPreset p;
  p.name = "lycra";
  p.stiffness_n = 152.1;
  p.drift_magnitude = 0.028;
  p.tau_load_s = 0.3;
  p.tau_unload_s = 1.2;
  p.noise_force_n = 0.1;
  return p;
}

inline SensorPreset preset_by_name(const std::string& name) {
  if (name == "pes") return preset_pes();
  if (name == "lycra") return preset_lycra();
  throw UsageError("unknown preset '" + name + "' (expected pes or lycra)");
}

namespace detail {

template <class Fn>
void for_each_preset_field(SensorPreset& p, Fn&& fn) {
  fn("stiffness_n", p.stiffness_n);
  fn("stiffness_exponent", p.stiffness_exponent);
  fn("base_conductance_s", p.base_conductance_s);
  fn("strain_sensitivity", p.strain_sensitivity);
  fn("drift_magnitude", p.drift_magnitude);
  fn("drift_timescale_s", p.drift_timescale_s);
  fn("tau_load_s", p.tau_load_s);
  fn("tau_unload_s", p.tau_unload_s);
  fn("offset_s", p.offset_s);
  fn("noise_r", p.noise_r);
  fn("noise_force_n", p.noise_force_n);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// `key = value` lines, `#` comments. Unlisted keys keep the PES defaults.
inline SensorPreset read_preset(std::istream& in) {
  SensorPreset p;
  std::map<std::string, double*> slots;
  detail::for_each_preset_field(p, [&](const char* key, double& v) { slots[key] = &v; });
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("preset: expected key = value at line " + std::to_string(lineno));
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key == "name") {
      p.name = value;
      continue;
    }
    auto it = slots.find(key);
    if (it == slots.end()) throw DataError("preset: unknown key '" + key + "' at line " + std::to_string(lineno));
    *it->second = detail::parse_number(value, lineno);
  }
  validate(p);
  return p;
}

inline void write_preset(std::ostream& out, SensorPreset p) {
  out << "name = " << p.name << '\n' << std::setprecision(17);
  detail::for_each_preset_field(p, [&](const char* key, double& v) { out << key << " = " << v << '\n'; });
}

struct JitterSpec {
  double mean_rate_hz = 41.5;
  double sd_rate_hz = 14.2;
  double min_interval_s = 0.005;
  double max_interval_s = 0.2;
};

inline double drift_factor(const SensorPreset& p, double t) noexcept {
  return 1.0 + p.drift_magnitude * std::log1p(t / p.drift_timescale_s);
}

/// Noise-free contact state, conductance and force on the trajectory grid.
struct SensorState {
  std::vector<double> contact;
  std::vector<double> conductance;
  std::vector<double> force;
};

inline SensorState sensor_response(const Trajectory& traj, const SensorPreset& p) {
  validate(p);
  const std::size_t n = traj.size();
  SensorState s;
  s.contact.resize(n);
  s.conductance.resize(n);
  s.force.resize(n);
  if (n == 0) return s;
  bool loading = true;
  for (std::size_t k = 0; k < n; ++k) {
    const double eps = std::max(traj.strain(k), 0.0);
    const double target = std::sqrt(eps);
    if (k == 0) {
      s.contact[k] = target;
    } else {
      const double prev = std::max(traj.strain(k - 1), 0.0);
      if (eps > prev) loading = true;
      else if (eps < prev) loading = false;
      const double tau = loading ? p.tau_load_s : p.tau_unload_s;
      const double dt = traj.t[k] - traj.t[k - 1];
      s.contact[k] = s.contact[k - 1] + (-std::expm1(-dt / tau)) * (target - s.contact[k - 1]);
    }
    s.conductance[k] = p.base_conductance_s * (1.0 + p.strain_sensitivity * s.contact[k]) *
                           drift_factor(p, traj.t[k]) + p.offset_s;
    if (!(s.conductance[k] > 0.0))
      throw NumericError("simulate: preset '" + p.name + "' yields non-positive conductance at t=" +
                         std::to_string(traj.t[k]));
    s.force[k] = p.stiffness_n * std::pow(eps, p.stiffness_exponent);
  }
  return s;
}

/// Jittered acquisition timestamps covering [0, t_end].
inline std::vector<double> jittered_timestamps(std::uint64_t seed, double t_end, const JitterSpec& j = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> rate(j.mean_rate_hz, j.sd_rate_hz);
  std::vector<double> ts{0.0};
  for (;;) {
    const double r = rate(rng);
    const double dt = std::clamp(r > 0.0 ? 1.0 / r : j.max_interval_s, j.min_interval_s, j.max_interval_s);
    const double next = ts.back() + dt;
    if (next > t_end) break;
    ts.push_back(next);
  }
  return ts;
}

/// Samples the sensor model on a jittered clock and adds seeded noise.
inline RawRecording simulate_sensor(const Trajectory& traj, const SensorPreset& preset, std::uint64_t seed,
                                    const JitterSpec& jitter = {}) {
  if (traj.size() < 2) throw DataError("simulate: trajectory needs at least 2 samples");
  const SensorState s = sensor_response(traj, preset);
  const auto ts = jittered_timestamps(derive_seed(seed, 2), traj.t.back(), jitter);

  std::mt19937_64 noise(derive_seed(seed, 1));
  std::normal_distribution<double> unit(0.0, 1.0);
  RawRecording rec;
  rec.rows.reserve(ts.size());
  std::size_t j = 0;
  for (double t : ts) {
    while (j + 2 < traj.size() && traj.t[j + 1] <= t) ++j;
    const double w = std::clamp((t - traj.t[j]) / (traj.t[j + 1] - traj.t[j]), 0.0, 1.0);
    auto lerp = [&](const std::vector<double>& v) { return v[j] + (v[j + 1] - v[j]) * w; };
    const double g = lerp(s.conductance);
    const double f = lerp(s.force);
    const double d = lerp(traj.d);
    const double nf = unit(noise);
    const double nr = unit(noise);
    const double r = (1.0 / g) * (1.0 + preset.noise_r * nr);
    if (!(r > 0.0)) throw NumericError("simulate: resistance noise produced a non-positive reading");
    rec.rows.push_back({t, std::max(0.0, f + preset.noise_force_n * nf), r, std::max(0.0, d)});
  }
  return rec;
}

inline constexpr const char* kDatasetRoles[] = {"train", "test_a", "test_b"};

/// n recordings with independent trajectories and a fresh drift clock each.
inline std::vector<RawRecording> make_dataset(std::uint64_t master_seed, const SensorPreset& preset,
                                              std::size_t n_recordings = 3, double duration_s = 23 * 60.0) {
  if (n_recordings < 2) throw DataError("make_dataset: need at least 2 recordings");
  std::vector<RawRecording> out;
  for (std::size_t i = 0; i < n_recordings; ++i) {
    const auto traj = gen_trajectory(derive_seed(master_seed, 100 + i), duration_s);
    auto rec = simulate_sensor(traj, preset, derive_seed(master_seed, 200 + i));
    std::ostringstream label;
    label << preset.name << "/seed" << master_seed << '/';
    if (i < 3)
      label << kDatasetRoles[i];
    else
      label << "rec" << i;
    rec.source_label = label.str();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace knitfix
