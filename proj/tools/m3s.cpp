// SPDX-License-Identifier: Apache-2.0
// m3s command-line tool: synth, train, eval, predict, gradcheck, plot.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "m3s/data/dataset.hpp"
#include "m3s/data/synth.hpp"
#include "m3s/error.hpp"
#include "m3s/training/gradient_suite.hpp"
#include "m3s/training/trainer.hpp"
#include "svg_chart.hpp"

namespace fs = std::filesystem;
using namespace m3s;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string key_table() {
  std::ostringstream os;
  os << "Config keys (file lines key=value, or --key value on train):\n";
  for (const auto& k : training::config_keys()) {
    os << "  " << std::left << std::setw(14) << k.name << std::setw(10) << k.default_value << k.help << "\n";
  }
  os << "Exit codes: 0 success, 1 usage, 2 data, 3 numeric. M3S_SEED overrides the config seed.";
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<std::size_t> windows_for(const training::PreparedData& pd, const std::string& split) {
  if (split == "train") return pd.train;
  if (split == "val") return pd.val;
  if (split == "test") return pd.test;
  throw ConfigError("split must be train, val or test, got '" + split + "'");
}

struct SynthArgs {
  std::uint64_t seed = 1;
  std::size_t days = 0;
  std::size_t image_size = 64;
  std::string out;
};

int cmd_synth(const SynthArgs& a, bool seed_given) {
  std::uint64_t seed = a.seed;
  if (!seed_given) {
    training::ExperimentConfig tmp;
    tmp.seed = seed;
    training::apply_seed_override(tmp);
    seed = tmp.seed;
  }
  data::SynthConfig sc;
  sc.image_size = a.image_size;
  const auto r = data::synth_generate(a.out, seed, a.days, sc);
  std::cout << "days " << a.days << "\nrows " << r.dataset.size() << "\nimages " << r.dataset.images.size()
            << "\nmasks " << r.dataset.masks.size() << "\nclear_days " << r.clear_days << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config, data, out;
  std::map<std::string, std::string> overrides;
};

int cmd_train(const TrainArgs& a) {
  training::ExperimentConfig cfg;
  if (!a.config.empty()) cfg = training::load_config(a.config);
  for (const auto& [key, value] : a.overrides) {
    if (!value.empty()) training::set_config_value(cfg, key, value);
  }
  training::apply_seed_override(cfg);
  cfg.validate();
  const auto ds = data::load_dataset(a.data);
  std::cerr << "loaded " << ds.size() << " rows (" << ds.dropped_rows << " dropped without image)\n";
  auto model = training::build_model(cfg);
  const auto pd = training::prepare_data(ds, cfg);
  std::cerr << "windows: train " << pd.train.size() << ", val " << pd.val.size() << ", test " << pd.test.size()
            << "; parameters " << model->params().size() << "\n";
  training::TrainOptions opt;
  opt.on_epoch = [](const training::EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " val_mae " << e.val_mae
              << "\n";
  };
  const auto res = training::train(*model, pd, opt);
  const fs::path out(a.out);
  training::save_checkpoint(out, *model, pd.stats);
  std::ofstream log(out / "trainlog.csv", std::ios::binary);
  res.log.write(log);
  if (!log) throw DataError("cannot write " + (out / "trainlog.csv").string());
  std::cout << "best_epoch " << res.log.best_epoch << "\nepochs " << res.log.epochs.size() << "\ncheckpoint "
            << out.string() << "\n";
  std::cerr << "wall time " << res.seconds << " s\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, data, split = "test", out;
  std::size_t horizon = 0;
};

int cmd_eval(const EvalArgs& a) {
  const auto ck = training::load_checkpoint(a.checkpoint);
  const auto& cfg = ck.model->config();
  const auto ds = data::load_dataset(a.data);
  const auto pd = training::prepare_data(ds, cfg, ck.stats);
  const auto windows = windows_for(pd, a.split);
  const std::size_t steps = a.horizon == 0 ? cfg.horizon : a.horizon;
  if (steps > cfg.horizon) {
    throw ConfigError("--horizon " + std::to_string(steps) + " exceeds the trained horizon " +
                      std::to_string(cfg.horizon));
  }
  const auto rep = training::evaluate(*ck.model, pd, windows, steps);
  rep.write_csv(std::cout);
  if (!a.out.empty()) {
    std::ostringstream os;
    rep.write_csv(os);
    write_text(a.out, os.str());
  }
  std::cerr << rep.summary() << "\n";
  return kOk;
}

struct PredictArgs {
  std::string checkpoint, data;
  std::size_t window = 0;
};

int cmd_predict(const PredictArgs& a) {
  const auto ck = training::load_checkpoint(a.checkpoint);
  const auto& cfg = ck.model->config();
  const auto ds = data::load_dataset(a.data);
  const auto pd = training::prepare_data(ds, cfg, ck.stats);
  const auto valid = data::cut_windows(ds, cfg.lookback + cfg.horizon, 1, std::vector<bool>(ds.size(), true));
  if (!std::binary_search(valid.begin(), valid.end(), a.window)) {
    throw DataError("window " + std::to_string(a.window) + " is not a contiguous " +
                    std::to_string(cfg.lookback + cfg.horizon) + "-row window of " + a.data);
  }
  const auto y = training::predict(*ck.model, pd, a.window);
  const std::int64_t last = ds.minutes[a.window + cfg.lookback - 1];
  std::cout << "step,timestamp,ghi\n" << std::setprecision(10);
  for (std::size_t j = 0; j < y.size(); ++j) {
    const auto t = last + static_cast<std::int64_t>((j + 1) * data::kIntervalMinutes);
    std::cout << j + 1 << ',' << data::format_timestamp(t) << ',' << y[j] << '\n';
  }
  return kOk;
}

struct GradArgs {
  std::vector<std::string> only;
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradArgs& a) {
  const auto results = training::run_gradient_suite(a.seed, a.only);
  bool ok = true;
  std::cout << std::left << std::setw(18) << "block" << std::setw(9) << "coords" << std::setw(13) << "max_rel_err"
            << std::setw(11) << "tol" << std::setw(8) << "seconds" << "result\n";
  for (const auto& r : results) {
    ok = ok && r.report.passed;
    std::cout << std::setw(18) << r.name << std::setw(9) << r.report.checked << std::setw(13) << std::setprecision(3)
              << std::scientific << r.report.max_rel_error << std::setw(11) << r.tolerance << std::fixed
              << std::setprecision(2) << std::setw(8) << r.seconds << (r.report.passed ? "PASS" : "FAIL") << "\n";
    if (!r.report.passed) std::cout << "  worst: " << r.report.worst << "\n";
  }
  std::cout << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return ok ? kOk : kNumeric;
}

struct PlotArgs {
  std::string log, out, checkpoint, data;
};

int cmd_plot(const PlotArgs& a) {
  std::ifstream in(a.log);
  if (!in) throw DataError("cannot open " + a.log);
  const auto log = training::TrainLog::parse(in);
  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<double> epochs;
  for (const auto& e : log.epochs) epochs.push_back(static_cast<double>(e.epoch));
  const struct {
    const char* file;
    const char* title;
    const char* unit;
    double training::EpochRecord::*field;
  } metrics[] = {{"train_loss.svg", "Training loss", "loss", &training::EpochRecord::train_loss},
                 {"val_loss.svg", "Validation MSE (normalized)", "MSE", &training::EpochRecord::val_loss},
                 {"val_mae.svg", "Validation MAE", "MAE (W/m^2)", &training::EpochRecord::val_mae}};
  for (const auto& m : metrics) {
    tools::Series s{log.scheme, epochs, {}, {}};
    for (const auto& e : log.epochs) s.y.push_back(e.*(m.field));
    write_text(out / m.file, tools::render_svg({m.title, "epoch", m.unit, {s}}));
    std::cout << (out / m.file).string() << "\n";
  }
  if (!a.checkpoint.empty()) {
    if (a.data.empty()) throw ConfigError("--checkpoint needs --data");
    const auto ck = training::load_checkpoint(a.checkpoint);
    const auto& cfg = ck.model->config();
    const auto ds = data::load_dataset(a.data);
    const auto pd = training::prepare_data(ds, cfg, ck.stats);
    tools::Series truth{"measured", {}, {}, "#333333"}, pred{"forecast (10 min ahead)", {}, {}, "#d62728"};
    for (std::size_t k = 0; k < pd.test.size(); ++k) {
      const std::size_t row = pd.test[k] + cfg.lookback;
      truth.x.push_back(static_cast<double>(k));
      truth.y.push_back(ds.meteo[row][0]);
      pred.x.push_back(static_cast<double>(k));
      pred.y.push_back(training::predict(*ck.model, pd, pd.test[k])[0]);
    }
    write_text(out / "forecast.svg",
               tools::render_svg({"Test forecast vs measured GHI", "test window", "GHI (W/m^2)", {truth, pred}}));
    std::cout << (out / "forecast.svg").string() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"m3s: multimodal ultra-short-term solar irradiance forecasting"};
  app.require_subcommand(1);
  app.footer(key_table());

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic sky-image and meteorology dataset");
  auto* seed_opt = s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  s->add_option("--days", synth.days, "Number of days")->required()->check(CLI::Range(std::size_t{1}, std::size_t{36500}));
  s->add_option("--image-size", synth.image_size, "Image side in pixels")->capture_default_str()->check(
      CLI::PositiveNumber);
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a scheme and write a checkpoint and training log");
  t->add_option("--config", train.config, "Config file of key=value lines")->check(CLI::ExistingFile);
  t->add_option("--data", train.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", train.out, "Checkpoint directory")->required();
  for (const auto& k : training::config_keys()) {
    t->add_option("--" + k.name, train.overrides[k.name], k.help + " (default " + k.default_value + ")");
  }

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Per-step forecast metrics of a checkpoint on a dataset split");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  e->add_option("--data", eval.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--horizon", eval.horizon, "Steps to report (default: the trained horizon)");
  e->add_option("--split", eval.split, "train, val or test")->capture_default_str();
  e->add_option("--out", eval.out, "Also write the CSV here");

  PredictArgs pred;
  auto* p = app.add_subcommand("predict", "Forecast one window and print it as CSV");
  p->add_option("--checkpoint", pred.checkpoint, "Checkpoint directory")->required();
  p->add_option("--data", pred.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  p->add_option("--window", pred.window, "Row index where the look-back window starts")->required();

  GradArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every trainable block");
  g->add_option("--only", grad.only, "Restrict to these blocks");
  g->add_option("--seed", grad.seed, "Seed for inputs and parameters")->capture_default_str();

  PlotArgs plot;
  auto* pl = app.add_subcommand("plot", "Render a training log (and optionally test forecasts) as SVG");
  pl->add_option("--log", plot.log, "trainlog.csv written by train")->required();
  pl->add_option("--out", plot.out, "Output directory")->required();
  pl->add_option("--checkpoint", plot.checkpoint, "Also plot test forecasts of this checkpoint");
  pl->add_option("--data", plot.data, "Dataset for --checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_synth(synth, seed_opt->count() > 0);
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
    if (*p) return cmd_predict(pred);
    if (*g) return cmd_gradcheck(grad);
    if (*pl) return cmd_plot(plot);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return kNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kData;
  }
  return kUsage;
}
