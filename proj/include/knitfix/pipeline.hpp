#pragma once

// Rectifier assembly: resample -> conductivity -> standardize -> smoothing
// bank -> MLP. Bundles carry everything needed to rectify a fresh stream.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "knitfix/error.hpp"
#include "knitfix/metrics.hpp"
#include "knitfix/nn.hpp"
#include "knitfix/seed.hpp"
#include "knitfix/series.hpp"
#include "knitfix/smoothing.hpp"

namespace knitfix {

inline constexpr const char* kWriterVersion = "knitfix 0.1.0";
inline constexpr const char* kBundleFormat = "knitfix-bundle";
inline constexpr int kBundleVersion = 1;

enum class Target { force, displacement };

inline const char* to_string(Target t) noexcept { return t == Target::force ? "force" : "displacement"; }

inline Target parse_target(const std::string& s) {
  if (s == "force") return Target::force;
  if (s == "displacement") return Target::displacement;
  throw UsageError("unknown target '" + s + "' (expected force or displacement)");
}

struct PipelineConfig {
  double rate_hz = kDefaultRateHz;
  AlphaSet alphas = alpha_set(2.5, 7);
  std::vector<std::size_t> hidden{4, 2, 2};
  TrainConfig train;
  Target target = Target::force;

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes{alphas.size()};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    return sizes;
  }
};

/// a = 2.5, N = 7, hidden (4, 2, 2), 20 Hz.
inline PipelineConfig default_best_config() { return {}; }

struct PreparedDataset {
  UniformSeries g_bar;                // standardized conductance
  std::vector<double> target_bar;     // standardized target
  std::vector<double> target_raw;     // resampled target in physical units
  ScalerParams scaler_g;
  ScalerParams scaler_t;
  Target target = Target::force;
  std::string source_label;
  std::string scaler_source;  // label of the recording the scalers were fit on

  std::size_t size() const noexcept { return g_bar.size(); }
  double rate_hz() const noexcept { return g_bar.rate_hz; }
};

namespace detail {

struct ResampledChannels {
  UniformSeries g;
  UniformSeries target;
};

inline ResampledChannels resample_channels(const RawRecording& rec, double rate_hz, Target target) {
  validate(rec);
  const auto t = rec.times();
  const auto r = resample(t, rec.resistances(), rate_hz);
  auto tgt = resample(t, target == Target::force ? rec.forces() : rec.displacements(), rate_hz);
  return {conductivity(r), std::move(tgt)};
}

}  // namespace detail

/// Resamples, converts to conductance and standardizes using scalers fit on
/// this recording.
inline PreparedDataset prepare(const RawRecording& rec, double rate_hz = kDefaultRateHz,
                               Target target = Target::force) {
  auto ch = detail::resample_channels(rec, rate_hz, target);
  PreparedDataset ds;
  ds.scaler_g = scaler_fit(ch.g.values);
  ds.scaler_t = scaler_fit(ch.target.values);
  ds.g_bar = {ch.g.rate_hz, ch.g.t0, scaler_transform(ds.scaler_g, ch.g.values)};
  ds.target_bar = scaler_transform(ds.scaler_t, ch.target.values);
  ds.target_raw = std::move(ch.target.values);
  ds.target = target;
  ds.source_label = rec.source_label;
  ds.scaler_source = rec.source_label;
  return ds;
}

/// Same as prepare() but reuses scalers fit elsewhere (normally the training recording).
inline PreparedDataset prepare_with(const RawRecording& rec, double rate_hz, Target target,
                                    const ScalerParams& scaler_g, const ScalerParams& scaler_t,
                                    std::string scaler_source) {
  auto ch = detail::resample_channels(rec, rate_hz, target);
  PreparedDataset ds;
  ds.scaler_g = scaler_g;
  ds.scaler_t = scaler_t;
  ds.g_bar = {ch.g.rate_hz, ch.g.t0, scaler_transform(scaler_g, ch.g.values)};
  ds.target_bar = scaler_transform(scaler_t, ch.target.values);
  ds.target_raw = std::move(ch.target.values);
  ds.target = target;
  ds.source_label = rec.source_label;
  ds.scaler_source = std::move(scaler_source);
  return ds;
}

inline PreparedDataset prepare_with(const RawRecording& rec, const PreparedDataset& reference) {
  return prepare_with(rec, reference.rate_hz(), reference.target, reference.scaler_g, reference.scaler_t,
                      reference.scaler_source);
}

struct Provenance {
  std::string train_source;
  std::uint64_t train_seed = 0;
  std::string created_utc;
  std::string writer = kWriterVersion;
};

struct PipelineBundle {
  PipelineConfig config;
  ScalerParams scaler_g;
  ScalerParams scaler_t;
  std::vector<std::size_t> init_windows;
  MlpModel model;
  Provenance provenance;
  double r2_train = 0.0;
  int epochs_run = 0;
  double best_loss = 0.0;

  std::size_t feature_count() const noexcept { return config.alphas.size(); }
  std::size_t max_window() const noexcept {
    return init_windows.empty() ? 1 : *std::max_element(init_windows.begin(), init_windows.end());
  }
};

inline std::string utc_now_iso8601() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void check_provenance(const PipelineBundle& b, const PreparedDataset& ds) {
  if (ds.scaler_source != b.provenance.train_source)
    throw DataError("scaler provenance mismatch: data standardized with scalers from '" + ds.scaler_source +
                    "', bundle trained on '" + b.provenance.train_source + "'");
}

inline FeatureMatrix features_for(const PipelineBundle& b, const PreparedDataset& ds) {
  return feature_bank(ds.g_bar, b.config.alphas, b.init_windows);
}

inline std::vector<double> predict_prepared(const PipelineBundle& b, const PreparedDataset& ds) {
  check_provenance(b, ds);
  const auto fm = features_for(b, ds);
  const auto rows = fm.row_major();
  return predict(b.model, rows, fm.rows());
}

/// Trains on an already prepared dataset (scalers fit on it).
inline PipelineBundle fit_pipeline(const PreparedDataset& train_ds, const PipelineConfig& cfg) {
  validate(cfg.alphas);
  if (train_ds.target != cfg.target) throw DataError("fit_pipeline: dataset target differs from config");
  PipelineBundle b;
  b.config = cfg;
  b.config.rate_hz = train_ds.rate_hz();
  b.scaler_g = train_ds.scaler_g;
  b.scaler_t = train_ds.scaler_t;
  b.init_windows = init_windows(cfg.alphas, train_ds.rate_hz(), train_ds.size());
  b.provenance.train_source = train_ds.scaler_source;
  b.provenance.train_seed = cfg.train.seed;
  b.provenance.created_utc = utc_now_iso8601();

  const auto fm = feature_bank(train_ds.g_bar, cfg.alphas, b.init_windows);
  const auto rows = fm.row_major();
  const auto sizes = cfg.layer_sizes();
  auto model = mlp_new(sizes, mix_seed(cfg.train.seed));
  auto trained = train(std::move(model), rows, train_ds.target_bar, cfg.train);
  b.model = std::move(trained.model);
  b.epochs_run = trained.report.epochs_run;
  b.best_loss = trained.report.best_loss;
  b.r2_train = r_squared(train_ds.target_bar, predict(b.model, rows, fm.rows()));
  return b;
}

inline PipelineBundle fit_pipeline(const RawRecording& train_rec, const PipelineConfig& cfg) {
  return fit_pipeline(prepare(train_rec, cfg.rate_hz, cfg.target), cfg);
}

struct BatchPrediction {
  UniformSeries p;                  // normalized prediction
  UniformSeries g_bar;              // normalized conductance
  std::vector<double> target_bar;   // normalized ground truth
  std::vector<double> target_raw;   // physical units
  ScoreCard score;
};

inline BatchPrediction predict_batch(const PipelineBundle& b, const RawRecording& rec) {
  auto ds = prepare_with(rec, b.config.rate_hz, b.config.target, b.scaler_g, b.scaler_t,
                         b.provenance.train_source);
  BatchPrediction out;
  out.p = {ds.g_bar.rate_hz, ds.g_bar.t0, predict_prepared(b, ds)};
  out.score = make_scorecard(r_squared(ds.target_bar, ds.g_bar.values), r_squared(ds.target_bar, out.p.values));
  out.g_bar = std::move(ds.g_bar);
  out.target_bar = std::move(ds.target_bar);
  out.target_raw = std::move(ds.target_raw);
  return out;
}

inline void write_prediction_csv(std::ostream& out, const BatchPrediction& pred) {
  out << "t_s,g_bar,p,target_bar\n" << std::setprecision(17);
  for (std::size_t k = 0; k < pred.p.size(); ++k)
    out << pred.p.time_at(k) << ',' << pred.g_bar.values[k] << ',' << pred.p.values[k] << ','
        << pred.target_bar[k] << '\n';
}

// Real-time rectifier over one sensor stream. Samples must already arrive at
// the bundle's rate. The bundle must outlive the session.
class StreamSession {
public:
  explicit StreamSession(const PipelineBundle& bundle)
      : bundle_(&bundle), bank_(bundle.config.alphas, bundle.init_windows), ws_(bundle.model) {
    if (bundle.model.input_size() != bundle.feature_count())
      throw DataError("stream: model input width differs from alpha count");
  }

  std::optional<double> push(double /*t*/, double resistance) {
    if (!(resistance > 0.0) || !std::isfinite(resistance)) throw DataError("stream: non-positive resistance");
    ++seen_;
    const double g_bar = scaler_transform(bundle_->scaler_g, 1.0 / resistance);
    auto features = bank_.push(g_bar);
    if (!features) return std::nullopt;
    return detail::forward(bundle_->model, *features, ws_);
  }

  std::size_t samples_seen() const noexcept { return seen_; }
  std::size_t warmup() const noexcept { return bank_.max_window(); }

private:
  const PipelineBundle* bundle_;
  FilterBank bank_;
  detail::Workspace ws_;
  std::size_t seen_ = 0;
};

// ---- bundle serialization -------------------------------------------------
//
// Pretty-printed JSON followed by a trailer line
//   # checksum fnv1a64 <16 hex digits>
// hashing every byte before the trailer.

namespace detail {

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline constexpr std::string_view kChecksumTag = "# checksum fnv1a64 ";

inline nlohmann::json to_json(const PipelineBundle& b) {
  using nlohmann::json;
  json layers = json::array();
  for (const auto& l : b.model.layers) layers.push_back({{"weights", l.weights}, {"biases", l.biases}});
  const auto& c = b.config;
  return {
      {"format", kBundleFormat},
      {"version", kBundleVersion},
      {"writer", b.provenance.writer},
      {"config",
       {{"rate_hz", c.rate_hz},
        {"alpha_base", c.alphas.base ? json(*c.alphas.base) : json(nullptr)},
        {"alphas", c.alphas.alphas},
        {"hidden", c.hidden},
        {"target", to_string(c.target)},
        {"train",
         {{"max_iter", c.train.max_iter},
          {"learning_rate", c.train.learning_rate},
          {"batch_size", c.train.batch_size},
          {"tol", c.train.tol},
          {"patience", c.train.patience},
          {"seed", c.train.seed}}}}},
      {"scaler_g", {{"mean", b.scaler_g.mean}, {"scale", b.scaler_g.scale}}},
      {"scaler_t", {{"mean", b.scaler_t.mean}, {"scale", b.scaler_t.scale}}},
      {"init_windows", b.init_windows},
      {"model", {{"layer_sizes", b.model.layer_sizes}, {"seed", b.model.seed}, {"layers", layers}}},
      {"provenance",
       {{"train_source", b.provenance.train_source},
        {"train_seed", b.provenance.train_seed},
        {"created_utc", b.provenance.created_utc}}},
      {"fit", {{"r2_train", b.r2_train}, {"epochs_run", b.epochs_run}, {"best_loss", b.best_loss}}},
  };
}

inline PipelineBundle from_json(const nlohmann::json& j) {
  PipelineBundle b;
  const auto& c = j.at("config");
  b.config.rate_hz = c.at("rate_hz").get<double>();
  if (!c.at("alpha_base").is_null()) b.config.alphas.base = c.at("alpha_base").get<double>();
  else b.config.alphas.base.reset();
  b.config.alphas.alphas = c.at("alphas").get<std::vector<double>>();
  b.config.hidden = c.at("hidden").get<std::vector<std::size_t>>();
  b.config.target = parse_target(c.at("target").get<std::string>());
  const auto& t = c.at("train");
  b.config.train.max_iter = t.at("max_iter").get<int>();
  b.config.train.learning_rate = t.at("learning_rate").get<double>();
  b.config.train.batch_size = t.at("batch_size").get<std::size_t>();
  b.config.train.tol = t.at("tol").get<double>();
  b.config.train.patience = t.at("patience").get<int>();
  b.config.train.seed = t.at("seed").get<std::uint64_t>();
  b.scaler_g = {j.at("scaler_g").at("mean").get<double>(), j.at("scaler_g").at("scale").get<double>()};
  b.scaler_t = {j.at("scaler_t").at("mean").get<double>(), j.at("scaler_t").at("scale").get<double>()};
  b.init_windows = j.at("init_windows").get<std::vector<std::size_t>>();
  const auto& m = j.at("model");
  b.model.layer_sizes = m.at("layer_sizes").get<std::vector<std::size_t>>();
  b.model.seed = m.at("seed").get<std::uint64_t>();
  validate_layer_sizes(b.model.layer_sizes);
  const auto& layers = m.at("layers");
  if (layers.size() + 1 != b.model.layer_sizes.size()) throw DataError("bundle: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    DenseLayer layer;
    layer.in = b.model.layer_sizes[l];
    layer.out = b.model.layer_sizes[l + 1];
    layer.weights = layers[l].at("weights").get<std::vector<double>>();
    layer.biases = layers[l].at("biases").get<std::vector<double>>();
    if (layer.weights.size() != layer.in * layer.out || layer.biases.size() != layer.out)
      throw DataError("bundle: layer " + std::to_string(l) + " has wrong parameter count");
    b.model.layers.push_back(std::move(layer));
  }
  const auto& p = j.at("provenance");
  b.provenance.train_source = p.at("train_source").get<std::string>();
  b.provenance.train_seed = p.at("train_seed").get<std::uint64_t>();
  b.provenance.created_utc = p.at("created_utc").get<std::string>();
  b.provenance.writer = j.at("writer").get<std::string>();
  const auto& f = j.at("fit");
  b.r2_train = f.at("r2_train").get<double>();
  b.epochs_run = f.at("epochs_run").get<int>();
  b.best_loss = f.at("best_loss").get<double>();

  validate(b.config.alphas);
  if (b.init_windows.size() != b.config.alphas.size()) throw DataError("bundle: init window count mismatch");
  if (b.model.input_size() != b.config.alphas.size()) throw DataError("bundle: model input width mismatch");
  check(b.scaler_g);
  check(b.scaler_t);
  if (!all_finite(b.model)) throw DataError("bundle: non-finite model parameters");
  return b;
}

}  // namespace detail

inline void save_bundle(const PipelineBundle& b, std::ostream& out) {
  const std::string body = detail::to_json(b).dump(2) + "\n";
  out << body << detail::kChecksumTag << detail::hex64(detail::fnv1a64(body)) << '\n';
  if (!out) throw DataError("bundle: write failed");
}

inline PipelineBundle load_bundle(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const auto pos = text.rfind(detail::kChecksumTag);
  if (pos == std::string::npos || (pos > 0 && text[pos - 1] != '\n'))
    throw DataError("bundle: checksum trailer missing (file truncated or corrupted)");
  const std::string body = text.substr(0, pos);
  std::string stored = text.substr(pos + detail::kChecksumTag.size());
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
  if (stored != detail::hex64(detail::fnv1a64(body)))
    throw DataError("bundle: checksum mismatch (file corrupted)");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bundle: unparseable payload: ") + e.what());
  }
  try {
    if (j.value("format", std::string{}) != kBundleFormat) throw DataError("bundle: not a knitfix bundle");
    const int version = j.at("version").get<int>();
    if (version != kBundleVersion)
      throw DataError("bundle: version mismatch (file " + std::to_string(version) + ", supported " +
                      std::to_string(kBundleVersion) + ")");
    return detail::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bundle: malformed payload: ") + e.what());
  }
}

inline void save_bundle(const PipelineBundle& b, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  save_bundle(b, out);
}

inline PipelineBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open bundle '" + path + "'");
  return load_bundle(in);
}

}  // namespace knitfix
