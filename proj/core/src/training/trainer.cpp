// SPDX-License-Identifier: Apache-2.0
#include "m3s/training/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "m3s/error.hpp"
#include "m3s/nn/optim.hpp"
#include "m3s/tensor/ops.hpp"
#include "m3s/tensor/tensor_io.hpp"
#include "m3s/visual/mpcs.hpp"

namespace m3s::training {
namespace {

constexpr std::uint64_t kShuffleSalt = 0x9e3779b97f4a7c15ULL;

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError("line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

std::vector<bool> rows_in(const std::vector<int>& split_rows, int which) {
  std::vector<bool> out(split_rows.size());
  for (std::size_t i = 0; i < split_rows.size(); ++i) out[i] = split_rows[i] == which;
  return out;
}

PreparedData prepare_common(const data::Dataset& ds, const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData p;
  p.dataset = &ds;
  p.split = data::split_rows_by_day(ds, cfg.seed);
  const std::size_t len = cfg.lookback + cfg.horizon;
  p.train = data::cut_windows(ds, len, cfg.train_stride, rows_in(p.split, 0));
  p.val = data::cut_windows(ds, len, cfg.horizon, rows_in(p.split, 1));
  p.test = data::cut_windows(ds, len, cfg.horizon, rows_in(p.split, 2));
  if (cfg.uses_images() && (ds.images.front().height != cfg.image_size || ds.images.front().width != cfg.image_size)) {
    throw DataError("dataset images are " + std::to_string(ds.images.front().height) + "x" +
                    std::to_string(ds.images.front().width) + ", config expects image_size=" +
                    std::to_string(cfg.image_size));
  }
  return p;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::vector<std::vector<double>> snapshot(const nn::ParameterSet& ps) {
  std::vector<std::vector<double>> out;
  for (const auto& p : ps.all()) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

void restore(nn::ParameterSet& ps, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < snap.size(); ++i) {
    Tensor t = ps.all()[i].value;
    std::copy(snap[i].begin(), snap[i].end(), t.mutable_data().begin());
  }
}

struct ValResult {
  double mse = 0.0, mae = 0.0;
};

ValResult validate(const Model& model, const PreparedData& data, const std::vector<std::size_t>& windows) {
  const auto& cfg = model.config();
  NoGradScope ng;
  ValResult r;
  for (auto s : windows) {
    const auto out = model.forward(data.series(s, cfg.lookback),
                                   model.has_visual() ? data.frames(s, cfg.lookback, cfg.frame_count()) : Tensor());
    const Tensor tgt = data.target(s, cfg.lookback, cfg.horizon);
    for (std::size_t j = 0; j < cfg.horizon; ++j) {
      const double e = out.forecast.data()[j] - tgt.data()[j];
      r.mse += e * e;
      r.mae += std::abs(e) * data.stats.stddev[0];
    }
  }
  const double n = static_cast<double>(windows.size() * cfg.horizon);
  r.mse /= n;
  r.mae /= n;
  return r;
}

}  // namespace

Tensor PreparedData::series(std::size_t start, std::size_t lookback) const {
  const std::size_t V = data::kMeteoColumns;
  if (start + lookback > dataset->size()) throw ContractError("window exceeds the dataset");
  std::vector<double> v(z.begin() + static_cast<std::ptrdiff_t>(start * V),
                        z.begin() + static_cast<std::ptrdiff_t>((start + lookback) * V));
  return Tensor::from({lookback, V}, std::move(v));
}

Tensor PreparedData::target(std::size_t start, std::size_t lookback, std::size_t horizon) const {
  if (start + lookback + horizon > dataset->size()) throw ContractError("window exceeds the dataset");
  std::vector<double> v(horizon);
  for (std::size_t j = 0; j < horizon; ++j) v[j] = z[(start + lookback + j) * data::kMeteoColumns];
  return Tensor::from({horizon, 1}, std::move(v));
}

Tensor PreparedData::frames(std::size_t start, std::size_t lookback, std::size_t count) const {
  std::vector<const data::Image*> f;
  for (std::size_t k = start + lookback - count; k < start + lookback; ++k) f.push_back(&dataset->images[k]);
  return data::images_to_tensor(f);
}

Tensor PreparedData::masks(std::size_t start, std::size_t lookback, std::size_t count) const {
  if (!dataset->has_masks()) return {};
  std::vector<const data::Mask*> m;
  for (std::size_t k = start + lookback - count; k < start + lookback; ++k) m.push_back(&dataset->masks[k]);
  return data::masks_to_onehot(m, visual::kSegClasses);
}

PreparedData prepare_data(const data::Dataset& ds, const ExperimentConfig& cfg) {
  PreparedData p = prepare_common(ds, cfg);
  p.stats = data::fit_normalization(ds, rows_in(p.split, 0));
  p.z = data::normalize_rows(p.stats, ds);
  return p;
}

PreparedData prepare_data(const data::Dataset& ds, const ExperimentConfig& cfg, const data::NormStats& stats) {
  PreparedData p = prepare_common(ds, cfg);
  p.stats = stats;
  p.z = data::normalize_rows(p.stats, ds);
  return p;
}

Tensor sample_loss(const Model& model, const PreparedData& data, std::size_t start) {
  const auto& cfg = model.config();
  const std::size_t F = cfg.frame_count();
  const auto out =
      model.forward(data.series(start, cfg.lookback), model.has_visual() ? data.frames(start, cfg.lookback, F) : Tensor());
  Tensor loss = mse_loss(out.forecast, data.target(start, cfg.lookback, cfg.horizon));
  if (out.seg_logits.defined() && data.dataset->has_masks() && cfg.beta > 0.0) {
    loss = add(loss, scale(bce_with_logits(out.seg_logits, data.masks(start, cfg.lookback, F)), cfg.beta));
  }
  return loss;
}

TrainResult train(Model& model, const PreparedData& data, const TrainOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cfg = model.config();
  TrainResult res;
  res.log.scheme = scheme_name(cfg.scheme);
  res.log.seed = cfg.seed;
  if (model.params().size() == 0) return res;
  if (data.train.empty()) throw DataError("no training windows; dataset too short for lookback + horizon");
  nn::AdamOptions ao;
  ao.lr = cfg.lr;
  ao.beta1 = cfg.adam_beta1;
  ao.beta2 = cfg.adam_beta2;
  ao.eps = cfg.adam_eps;
  ao.clip_norm = cfg.clip_norm;
  nn::Adam adam(model.params(), ao);
  Rng shuffle(cfg.seed ^ kShuffleSalt);
  std::vector<std::size_t> order(data.train.size());
  std::vector<double> window_loss(data.train.size());
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_params = snapshot(model.params());
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.index(i + 1)]);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - b);
      Tape tape;
      Tensor total;
      {
        TapeScope scope(tape);
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t w = order[b + k];
          Tensor l = sample_loss(model, data, data.train[w]);
          if (!std::isfinite(l.item())) {
            throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", window starting " +
                               data.dataset->timestamps[data.train[w]]);
          }
          window_loss[w] = l.item();
          total = total.defined() ? add(total, l) : l;
        }
        total = scale(total, 1.0 / static_cast<double>(n));
      }
      model.params().zero_grad();
      tape.backward(total);
      adam.step();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = mean_of(window_loss);
    if (!data.val.empty()) {
      const auto v = validate(model, data, data.val);
      rec.val_loss = v.mse;
      rec.val_mae = v.mae;
    } else {
      rec.val_loss = rec.train_loss;
    }
    res.log.epochs.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);
    if (rec.val_loss < best) {
      best = rec.val_loss;
      best_params = snapshot(model.params());
      res.log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      res.log.early_stopped = true;
      break;
    }
  }
  restore(model.params(), best_params);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

metrics::MetricReport evaluate(const Model& model, const PreparedData& data, const std::vector<std::size_t>& windows,
                               std::size_t steps) {
  const auto& cfg = model.config();
  if (steps == 0 || steps > cfg.horizon) {
    throw ContractError("horizon " + std::to_string(steps) + " outside 1.." + std::to_string(cfg.horizon));
  }
  if (windows.empty()) throw DataError("no evaluation windows");
  NoGradScope ng;
  std::vector<double> y, yhat;
  std::vector<std::int32_t> pred_labels, true_labels;
  const bool seg = model.has_visual() && data.dataset->has_masks();
  for (auto s : windows) {
    const auto out = model.forward(data.series(s, cfg.lookback),
                                   model.has_visual() ? data.frames(s, cfg.lookback, cfg.frame_count()) : Tensor());
    for (std::size_t j = 0; j < steps; ++j) {
      yhat.push_back(data::denormalize_value(data.stats, 0, out.forecast.data()[j]));
      y.push_back(data.dataset->meteo[s + cfg.lookback + j][0]);
    }
    if (seg) {
      const auto p = metrics::argmax_classes(out.seg_logits);
      pred_labels.insert(pred_labels.end(), p.begin(), p.end());
      for (std::size_t k = s + cfg.lookback - cfg.frame_count(); k < s + cfg.lookback; ++k) {
        const auto& m = data.dataset->masks[k].labels;
        true_labels.insert(true_labels.end(), m.begin(), m.end());
      }
    }
  }
  auto rep = metrics::forecast_report(y, yhat, steps);
  if (seg) rep.segmentation = metrics::seg_metrics(pred_labels, true_labels, visual::kSegClasses);
  return rep;
}

std::vector<double> predict(const Model& model, const PreparedData& data, std::size_t start) {
  const auto& cfg = model.config();
  NoGradScope ng;
  const auto out = model.forward(data.series(start, cfg.lookback),
                                 model.has_visual() ? data.frames(start, cfg.lookback, cfg.frame_count()) : Tensor());
  std::vector<double> v;
  for (double z : out.forecast.data()) v.push_back(data::denormalize_value(data.stats, 0, z));
  return v;
}

std::vector<double> train_segmentation(Model& model, const std::vector<const data::Image*>& images,
                                       const std::vector<const data::Mask*>& masks, std::size_t epochs) {
  if (!model.has_visual()) throw ConfigError("segmentation training needs a visual branch");
  if (images.size() != masks.size() || images.empty()) throw ContractError("need one mask per image");
  const auto& cfg = model.config();
  nn::ParameterSet visual_params;
  for (const auto& p : model.params().all()) {
    if (p.name.rfind("visual.", 0) == 0) visual_params.add(p.name, p.value);
  }
  nn::AdamOptions ao;
  ao.lr = cfg.lr;
  ao.clip_norm = cfg.clip_norm;
  nn::Adam adam(visual_params, ao);
  Rng shuffle(cfg.seed ^ kShuffleSalt);
  std::vector<std::size_t> order(images.size());
  std::vector<double> history;
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.index(i + 1)]);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - b);
      std::vector<const data::Image*> bi;
      std::vector<const data::Mask*> bm;
      for (std::size_t k = 0; k < n; ++k) {
        bi.push_back(images[order[b + k]]);
        bm.push_back(masks[order[b + k]]);
      }
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        loss = bce_with_logits(model.segment(data::images_to_tensor(bi)), data::masks_to_onehot(bm, visual::kSegClasses));
      }
      if (!std::isfinite(loss.item())) throw NumericError("non-finite segmentation loss at epoch " + std::to_string(e + 1));
      visual_params.zero_grad();
      tape.backward(loss);
      adam.step();
      total += loss.item() * static_cast<double>(n);
    }
    history.push_back(total / static_cast<double>(images.size()));
  }
  return history;
}

metrics::SegScores evaluate_segmentation(const Model& model, const std::vector<const data::Image*>& images,
                                         const std::vector<const data::Mask*>& masks) {
  NoGradScope ng;
  std::vector<std::int32_t> pred, truth;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto p = metrics::argmax_classes(model.segment(data::images_to_tensor({images[i]})));
    pred.insert(pred.end(), p.begin(), p.end());
    truth.insert(truth.end(), masks[i]->labels.begin(), masks[i]->labels.end());
  }
  return metrics::seg_metrics(pred, truth, visual::kSegClasses);
}

void TrainLog::write(std::ostream& os) const {
  os << "# m3s trainlog scheme=" << scheme << " seed=" << seed << "\n";
  os << "epoch,train_loss,val_loss,val_mae\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.val_loss) << ',' << fmt(e.val_mae) << '\n';
  }
  os << "# best_epoch=" << best_epoch << " early_stopped=" << (early_stopped ? 1 : 0) << "\n";
}

TrainLog TrainLog::parse(std::istream& is) {
  TrainLog log;
  std::string line;
  std::size_t n = 0;
  const auto fail = [&](const std::string& msg) { throw DataError("trainlog line " + std::to_string(n) + ": " + msg); };
  ++n;
  if (!std::getline(is, line) || line.rfind("# m3s trainlog", 0) != 0) fail("missing '# m3s trainlog' header");
  for (const auto& tok : split(line.substr(15), ' ')) {
    if (tok.rfind("scheme=", 0) == 0) log.scheme = tok.substr(7);
    if (tok.rfind("seed=", 0) == 0) log.seed = static_cast<std::uint64_t>(parse_double(tok.substr(5), n));
  }
  ++n;
  if (!std::getline(is, line) || line != "epoch,train_loss,val_loss,val_mae") fail("missing column header");
  bool footer = false;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    if (line.rfind("# best_epoch=", 0) == 0) {
      const auto parts = split(line.substr(2), ' ');
      for (const auto& tok : parts) {
        if (tok.rfind("best_epoch=", 0) == 0) log.best_epoch = static_cast<std::size_t>(parse_double(tok.substr(11), n));
        if (tok.rfind("early_stopped=", 0) == 0) log.early_stopped = tok.substr(14) == "1";
      }
      footer = true;
      break;
    }
    const auto f = split(line, ',');
    if (f.size() != 4) fail("expected 4 fields, got " + std::to_string(f.size()));
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(parse_double(f[0], n));
    r.train_loss = parse_double(f[1], n);
    r.val_loss = parse_double(f[2], n);
    r.val_mae = parse_double(f[3], n);
    if (r.epoch != log.epochs.size() + 1) fail("epoch indices must increase by one");
    log.epochs.push_back(r);
  }
  if (!footer) {
    ++n;
    fail("truncated log (no '# best_epoch' footer)");
  }
  return log;
}

void save_checkpoint(const std::filesystem::path& dir, const Model& model, const data::NormStats& stats) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream man(dir / "manifest.txt", std::ios::binary);
  if (!man) throw DataError("cannot write " + (dir / "manifest.txt").string());
  man << "m3s-checkpoint 1\n[config]\n" << config_to_text(model.config()) << "[normalization]\n";
  for (std::size_t c = 0; c < data::kMeteoColumns; ++c) {
    man << data::kColumnNames[c] << ' ' << fmt(stats.mean[c]) << ' ' << fmt(stats.stddev[c]) << '\n';
  }
  man << "[parameters]\n";
  for (const auto& p : model.params().all()) man << p.name << ' ' << shape_str(p.value.shape()) << '\n';
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw DataError("cannot write " + (dir / "params.bin").string());
  for (const auto& p : model.params().all()) write_tensor(bin, p.value);
  if (!man || !bin) throw DataError("checkpoint write failed in " + dir.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream man(dir / "manifest.txt");
  if (!man) throw DataError("cannot open " + (dir / "manifest.txt").string());
  std::string line, section, config_text;
  std::vector<std::pair<std::string, std::string>> params;
  Checkpoint ck;
  std::size_t n = 0, norm_rows = 0;
  const auto fail = [&](const std::string& msg) {
    throw DataError((dir / "manifest.txt").string() + " line " + std::to_string(n) + ": " + msg);
  };
  ++n;
  if (!std::getline(man, line) || line != "m3s-checkpoint 1") fail("not a checkpoint manifest");
  while (std::getline(man, line)) {
    ++n;
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line;
      continue;
    }
    if (section == "[config]") {
      config_text += line + "\n";
    } else if (section == "[normalization]") {
      const auto f = split(line, ' ');
      if (f.size() != 3 || norm_rows >= data::kMeteoColumns || f[0] != data::kColumnNames[norm_rows]) {
        fail("bad normalization row");
      }
      ck.stats.mean[norm_rows] = parse_double(f[1], n);
      ck.stats.stddev[norm_rows] = parse_double(f[2], n);
      ++norm_rows;
    } else if (section == "[parameters]") {
      const auto sp = line.find(' ');
      if (sp == std::string::npos) fail("bad parameter row");
      params.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    } else {
      fail("content outside a section");
    }
  }
  if (norm_rows != data::kMeteoColumns) fail("incomplete normalization section");
  ExperimentConfig cfg;
  try {
    cfg = config_from_text(config_text);
  } catch (const ConfigError& e) {
    throw DataError("checkpoint config: " + std::string(e.what()));
  }
  ck.model = build_model(cfg);
  const auto& expected = ck.model->params().all();
  if (expected.size() != params.size()) {
    throw DataError("checkpoint lists " + std::to_string(params.size()) + " parameters, config builds " +
                    std::to_string(expected.size()));
  }
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw DataError("cannot open " + (dir / "params.bin").string());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& p = expected[i];
    if (p.name != params[i].first || shape_str(p.value.shape()) != params[i].second) {
      throw DataError("checkpoint parameter " + params[i].first + " " + params[i].second + " does not match " + p.name +
                      " " + shape_str(p.value.shape()));
    }
    const Tensor t = read_tensor(bin);
    if (t.shape() != p.value.shape()) throw DataError("params.bin record for " + p.name + " has the wrong shape");
    Tensor dst = p.value;
    std::copy(t.data().begin(), t.data().end(), dst.mutable_data().begin());
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw DataError("params.bin has trailing data");
  return ck;
}

}  // namespace m3s::training
