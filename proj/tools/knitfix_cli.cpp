// knitfix command-line tool: simulate, train, predict, evaluate, gridsearch, stream.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "knitfix/knitfix.hpp"

namespace fs = std::filesystem;
using namespace knitfix;

namespace {

RawRecording read_recording_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open recording '" + path + "'");
  try {
    return load_recording(in, path);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

SensorPreset resolve_preset(const std::string& name_or_path) {
  if (name_or_path == "pes" || name_or_path == "lycra") return preset_by_name(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw UsageError("preset '" + name_or_path + "' is neither pes, lycra nor a readable file");
  return read_preset(in);
}

std::vector<std::size_t> parse_index_list(const std::string& s) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoul(item));
      } else {
        const auto lo = std::stoul(item.substr(0, dash)), hi = std::stoul(item.substr(dash + 1));
        if (hi < lo) throw UsageError("bad index range '" + item + "'");
        for (auto i = lo; i <= hi; ++i) out.push_back(i);
      }
    } catch (const std::logic_error&) {
      throw UsageError("bad index list '" + s + "'");
    }
  }
  return out;
}

// Keys: rate_hz, feature_set ("baseline") or a + N or alphas, hidden, target,
// max_iter, learning_rate, batch_size, tol, patience, seed.
PipelineConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config '" + path + "': " + e.what());
  }
  PipelineConfig cfg = default_best_config();
  try {
    cfg.rate_hz = j.value("rate_hz", cfg.rate_hz);
    if (j.value("feature_set", std::string{}) == "baseline")
      cfg.alphas = baseline_alpha_set();
    else if (j.contains("alphas"))
      cfg.alphas = AlphaSet{std::nullopt, j.at("alphas").get<std::vector<double>>()};
    else if (j.contains("a") || j.contains("N"))
      cfg.alphas = alpha_set(j.value("a", 2.5), j.value("N", 7));
    cfg.hidden = j.value("hidden", cfg.hidden);
    cfg.target = parse_target(j.value("target", std::string(to_string(cfg.target))));
    cfg.train.max_iter = j.value("max_iter", cfg.train.max_iter);
    cfg.train.learning_rate = j.value("learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = j.value("batch_size", cfg.train.batch_size);
    cfg.train.tol = j.value("tol", cfg.train.tol);
    cfg.train.patience = j.value("patience", cfg.train.patience);
    cfg.train.seed = j.value("seed", cfg.train.seed);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config '" + path + "': " + e.what());
  }
  validate(cfg.alphas);
  validate(cfg.train);
  return cfg;
}

void print_scorecard(std::ostream& os, const std::string& label, const ScoreCard& s) {
  os << label << ": r2_pre=" << s.r2_pre << " r2_post=" << s.r2_post << " gain=" << s.gain << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knitfix: rectify drift and hysteresis in knitted piezoresistive sensor readings"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate synthetic train/test recordings");
  std::string sim_preset = "pes", sim_out;
  std::uint64_t sim_seed = 42;
  double sim_minutes = 23.0;
  std::size_t sim_count = 3;
  sim->add_option("--preset", sim_preset, "pes, lycra, or a preset file")->capture_default_str();
  sim->add_option("--seed", sim_seed)->capture_default_str();
  sim->add_option("--duration-min", sim_minutes)->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--count", sim_count, "number of recordings (>= 2)")->capture_default_str();
  sim->add_option("--out", sim_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "Fit a rectifier bundle on one recording");
  std::string tr_train, tr_config, tr_out, tr_target;
  bool tr_default = false;
  std::uint64_t tr_seed = 1;
  int tr_max_iter = 0;
  tr->add_option("--train", tr_train)->required();
  auto* cfg_opt = tr->add_option("--config", tr_config, "JSON config file");
  auto* def_opt = tr->add_flag("--default-best", tr_default, "a=2.5, N=7, hidden (4,2,2), 20 Hz");
  cfg_opt->excludes(def_opt);
  tr->add_option("--seed", tr_seed)->capture_default_str();
  tr->add_option("--target", tr_target, "force or displacement (overrides config)");
  tr->add_option("--max-iter", tr_max_iter, "override maximum epochs");
  tr->add_option("--out", tr_out)->required();

  // predict
  auto* pr = app.add_subcommand("predict", "Rectify a recording with a trained bundle");
  std::string pr_bundle, pr_in, pr_out, pr_summary;
  pr->add_option("--bundle", pr_bundle)->required();
  pr->add_option("--in", pr_in)->required();
  pr->add_option("--out", pr_out)->required();
  pr->add_option("--summary", pr_summary, "write the scorecard CSV here as well");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a bundle on two test recordings");
  std::string ev_bundle, ev_a, ev_b, ev_out, ev_rse;
  double ev_bin = 1.0;
  ev->add_option("--bundle", ev_bundle)->required();
  ev->add_option("--test-a", ev_a)->required();
  ev->add_option("--test-b", ev_b)->required();
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--rse-out", ev_rse);
  ev->add_option("--bin-width", ev_bin, "RSE bin width in target units")->capture_default_str();

  // gridsearch
  auto* gs = app.add_subcommand("gridsearch", "Run the hyperparameter grid");
  std::string gs_train, gs_a, gs_b, gs_out, gs_sets, gs_tops, gs_target = "force";
  int gs_epochs = 200;
  std::size_t gs_parallel = 1;
  std::uint64_t gs_seed = 1;
  double gs_rate = kDefaultRateHz;
  bool gs_timing = false;
  gs->add_option("--train", gs_train)->required();
  gs->add_option("--test-a", gs_a)->required();
  gs->add_option("--test-b", gs_b)->required();
  gs->add_option("--epochs", gs_epochs, "epoch cap per configuration")->capture_default_str();
  gs->add_option("--parallel", gs_parallel)->capture_default_str();
  gs->add_option("--seed", gs_seed)->capture_default_str();
  gs->add_option("--rate", gs_rate)->capture_default_str();
  gs->add_option("--target", gs_target)->capture_default_str();
  gs->add_option("--feature-sets", gs_sets, "subset of feature-set indices, e.g. 0,1 or 0-3");
  gs->add_option("--topologies", gs_tops, "subset of topology indices, e.g. 0-5");
  gs->add_flag("--timing", gs_timing, "record wall-clock seconds (report no longer byte-reproducible)");
  gs->add_option("--out", gs_out)->required();

  // stream
  auto* st = app.add_subcommand("stream", "Rectify line-delimited t,R samples from stdin");
  std::string st_bundle;
  st->add_option("--bundle", st_bundle)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      if (sim_count < 2) throw UsageError("--count must be >= 2");
      const auto preset = resolve_preset(sim_preset);
      const auto recs = make_dataset(sim_seed, preset, sim_count, sim_minutes * 60.0);
      fs::create_directories(sim_out);
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const std::string name = i < 3 ? kDatasetRoles[i] : "rec" + std::to_string(i);
        const auto path = (fs::path(sim_out) / (name + ".csv")).string();
        auto out = open_out(path);
        write_recording(out, recs[i]);
        std::cerr << "wrote " << path << " (" << recs[i].size() << " rows)\n";
      }
    } else if (*tr) {
      if (tr_config.empty() && !tr_default) throw UsageError("train: pass --config FILE or --default-best");
      PipelineConfig cfg = tr_config.empty() ? default_best_config() : read_config_file(tr_config);
      if (tr->count("--seed") || tr_config.empty()) cfg.train.seed = tr_seed;
      if (!tr_target.empty()) cfg.target = parse_target(tr_target);
      if (tr_max_iter > 0) cfg.train.max_iter = tr_max_iter;
      const auto rec = read_recording_file(tr_train);
      const auto bundle = fit_pipeline(rec, cfg);
      save_bundle(bundle, tr_out);
      std::cerr << "trained " << join_sizes(bundle.model.layer_sizes) << " on " << rec.size() << " rows, "
                << bundle.epochs_run << " epochs, loss " << bundle.best_loss << ", r2_train " << bundle.r2_train
                << "\nwrote " << tr_out << '\n';
    } else if (*pr) {
      const auto bundle = load_bundle(pr_bundle);
      const auto pred = predict_batch(bundle, read_recording_file(pr_in));
      auto out = open_out(pr_out);
      write_prediction_csv(out, pred);
      print_scorecard(std::cerr, pr_in, pred.score);
      if (!pr_summary.empty()) {
        auto sum = open_out(pr_summary);
        const std::vector<std::pair<std::string, double>> m{
            {"r2_pre", pred.score.r2_pre}, {"r2_post", pred.score.r2_post}, {"gain", pred.score.gain}};
        write_scorecard_csv(sum, m);
      }
    } else if (*ev) {
      const auto bundle = load_bundle(ev_bundle);
      const auto pa = predict_batch(bundle, read_recording_file(ev_a));
      const auto pb = predict_batch(bundle, read_recording_file(ev_b));
      print_scorecard(std::cerr, ev_a, pa.score);
      print_scorecard(std::cerr, ev_b, pb.score);
      const double e_pre = combined_error(pa.score.r2_pre, pb.score.r2_pre);
      const double e_post = combined_error(pa.score.r2_post, pb.score.r2_post);
      std::cerr << "E: pre=" << e_pre << " post=" << e_post << '\n';
      const std::vector<std::pair<std::string, double>> m{
          {"r2_pre_A", pa.score.r2_pre},   {"r2_post_A", pa.score.r2_post}, {"gain_A", pa.score.gain},
          {"r2_pre_B", pb.score.r2_pre},   {"r2_post_B", pb.score.r2_post}, {"gain_B", pb.score.gain},
          {"E_pre", e_pre},                {"E_post", e_post},              {"r2_train", bundle.r2_train}};
      auto out = open_out(ev_out);
      write_scorecard_csv(out, m);
      if (!ev_rse.empty()) {
        // Both test sets pooled, estimates mapped back to target units.
        std::vector<double> truth, pre, post;
        for (const auto* p : {&pa, &pb}) {
          truth.insert(truth.end(), p->target_raw.begin(), p->target_raw.end());
          const auto g = scaler_inverse(bundle.scaler_t, p->g_bar.values);
          const auto q = scaler_inverse(bundle.scaler_t, p->p.values);
          pre.insert(pre.end(), g.begin(), g.end());
          post.insert(post.end(), q.begin(), q.end());
        }
        auto rse_out = open_out(ev_rse);
        write_binned_rse_csv(rse_out, binned_rse(truth, pre, post, ev_bin));
      }
    } else if (*gs) {
      if (gs_epochs < 1) throw UsageError("--epochs must be >= 1");
      const Target target = parse_target(gs_target);
      const auto train_ds = prepare(read_recording_file(gs_train), gs_rate, target);
      const auto test_a = prepare_with(read_recording_file(gs_a), train_ds);
      const auto test_b = prepare_with(read_recording_file(gs_b), train_ds);
      const auto grid = enumerate_grid(gs_seed, parse_index_list(gs_sets), parse_index_list(gs_tops));
      GridOptions opts;
      opts.train.max_iter = gs_epochs;
      opts.parallelism = std::max<std::size_t>(gs_parallel, 1);
      std::mutex log_mu;
      std::size_t done = 0;
      opts.on_row = [&](const SearchRow& r) {
        std::lock_guard lock(log_mu);
        ++done;
        std::cerr << '[' << done << '/' << grid.size() << "] " << r.config.feature_set.label() << ' '
                  << join_sizes(r.config.hidden) << " E=" << r.error << ' ' << r.status << '\n';
      };
      const auto report = run_grid(train_ds, test_a, test_b, grid, gs_seed, opts);
      auto out = open_out(gs_out);
      write_report_csv(out, report, gs_timing);
      if (report.best) {
        const auto& b = report.rows[*report.best];
        std::cerr << "best: config " << b.config.config_id << ' ' << b.config.feature_set.label() << " hidden "
                  << join_sizes(b.config.hidden) << " E=" << b.error << '\n';
      } else {
        std::cerr << "every configuration failed\n";
        return static_cast<int>(ErrorKind::numeric);
      }
    } else if (*st) {
      const auto bundle = load_bundle(st_bundle);
      StreamSession session(bundle);
      std::string line;
      std::size_t lineno = 0;
      std::cout << std::setprecision(17);
      while (std::getline(std::cin, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty()) continue;
        const auto fields = detail::split_commas(line);
        if (fields.size() != 2) throw DataError("stream: expected 't,R' at line " + std::to_string(lineno));
        if (lineno == 1 && !fields[0].empty() && std::isalpha(static_cast<unsigned char>(fields[0][0])))
          continue;  // header
        const double t = detail::parse_number(fields[0], lineno);
        const double r = detail::parse_number(fields[1], lineno);
        if (auto p = session.push(t, r)) std::cout << t << ',' << *p << '\n' << std::flush;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  }
  return 0;
}
