// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every selected criterion passes. `--only 3,7` restricts the run.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "m3s/data/synth.hpp"
#include "m3s/error.hpp"
#include "m3s/fusion/mmif.hpp"
#include "m3s/metrics/metrics.hpp"
#include "m3s/training/gradient_suite.hpp"
#include "m3s/training/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace m3s;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      pass = false;
      detail << what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Tensor random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto results = training::run_gradient_suite(1);
  const double total = seconds_since(t0);
  double worst_block = 0.0, worst_composite = 0.0;
  for (const auto& r : results) {
    o.require(r.report.passed, r.name + " failed (" + r.report.worst + ")");
    o.require(r.report.checked > 0, r.name + " checked nothing");
    (r.name == "end_to_end" ? worst_composite : worst_block) =
        std::max(r.name == "end_to_end" ? worst_composite : worst_block, r.report.max_rel_error);
  }
  o.require(results.size() == training::gradient_suite_names().size(), "suite incomplete");
  o.require(total < 300.0, "took " + fmt(total) + " s");
  if (o.pass) {
    o.detail << results.size() << " checks, block max rel " << fmt(worst_block) << " (< 1e-4), composite "
             << fmt(worst_composite) << " (< 1e-3), " << fmt(total) << " s";
  }
  return o;
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalences

Outcome oracle_equivalences() {
  Outcome o;
  Rng rng(2);

  double fft_worst = 0.0;
  for (std::size_t L = 2; L <= 128; ++L) {
    Tensor x = random({L, 1}, rng);
    const auto got = rfft_amplitudes(x, 0);
    const auto want = oracle::dft_channel_mean(x);
    for (std::size_t f = 0; f < want.size(); ++f) {
      const double rel = std::abs(got.data()[f] - want[f]) / std::max(std::abs(want[f]), 1e-300);
      fft_worst = std::max(fft_worst, rel);
    }
  }
  o.require(fft_worst < 1e-9, "(a) rfft rel error " + fmt(fft_worst));

  double scan_worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = 1 + rng.index(24), D = 1 + rng.index(6), N = 1 + rng.index(6);
    const auto s = oracle::random_raw(rng, L, D, N);
    const auto i = oracle::random_raw(rng, L, D, N);
    const auto [ys, yi] = fusion::cross_modal_scan(oracle::to_inputs(s), oracle::to_inputs(i));
    const auto rs = oracle::naive_recurrence(s, i.c), ri = oracle::naive_recurrence(i, s.c);
    for (std::size_t k = 0; k < rs.size(); ++k) {
      scan_worst = std::max({scan_worst, std::abs(ys.data()[k] - rs[k]), std::abs(yi.data()[k] - ri[k])});
    }
  }
  o.require(scan_worst < 1e-12, "(b) cross scan error " + fmt(scan_worst));

  double msa_worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    nn::ParameterSet ps;
    const std::size_t heads = 1 + rng.index(3), C = heads * (1 + rng.index(3));
    const std::size_t P = 2 + rng.index(5), F = 1 + rng.index(5);
    temporal::MsaBlock block(nn::ParamBuilder(ps, rng), C, heads);
    for (Tensor p : ps.tensors()) {
      for (auto& v : p.mutable_data()) v += rng.uniform(-0.2, 0.2);
    }
    Tensor z = random({P, F, C}, rng, -2.0, 2.0);
    const auto ref = oracle::reference_block(block, z);
    const Tensor dense = temporal::dense_msa(block, z, std::max(P, F));
    const Tensor sparse = temporal::sparse_msa(block, z, 1);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      msa_worst = std::max({msa_worst, std::abs(dense.data()[k] - ref[k]), std::abs(sparse.data()[k] - ref[k])});
    }
  }
  o.require(msa_worst < 1e-10, "(c) msa error " + fmt(msa_worst));

  double seg_worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t C = 2 + rng.index(3);
    std::vector<std::int32_t> pred(64), truth(64);
    for (std::size_t k = 0; k < 64; ++k) {
      pred[k] = static_cast<std::int32_t>(rng.index(C));
      truth[k] = static_cast<std::int32_t>(rng.index(C));
    }
    const auto got = metrics::seg_metrics(pred, truth, C);
    const auto want = oracle::confusion_oracle(pred, truth, C);
    seg_worst = std::max({seg_worst, std::abs(got.precision - want.precision), std::abs(got.recall - want.recall),
                          std::abs(got.miou - want.miou)});
  }
  o.require(seg_worst < 1e-12, "(d) seg metric error " + fmt(seg_worst));

  if (o.pass) {
    o.detail << "(a) rfft rel " << fmt(fft_worst) << " over L=2..128; (b) 200 scans max " << fmt(scan_worst)
             << "; (c) msa max " << fmt(msa_worst) << "; (d) 200 8x8 maps max " << fmt(seg_worst);
  }
  return o;
}

// ---------------------------------------------------------------------------
// 3. Shape contracts

Outcome shape_contracts() {
  Outcome o;
  Rng rng(3);
  nn::ParameterSet ps;
  nn::ParamBuilder pb(ps, rng);
  const training::ExperimentConfig def;
  NoGradScope no_grad;

  visual::VisualBranch vb(pb.sub("visual"), visual::EncoderKind::Mpcs, def.width, def.d_model, def.state);
  Tensor one = random({1, 3, 64, 64}, rng, 0.0, 1.0);
  const auto f = vb.encoder(one);
  for (std::size_t i = 1; i <= 5; ++i) {
    const Shape want{1, (std::size_t{1} << (i - 1)) * 64, std::size_t{64} >> i, std::size_t{64} >> i};
    o.require(f[i - 1].shape() == want, "f" + std::to_string(i) + " is " + shape_str(f[i - 1].shape()));
  }

  const std::size_t frames = def.lookback;  // T - t + 1
  Tensor clip = random({frames, 3, 64, 64}, rng, 0.0, 1.0);
  const Tensor x_s = vb(clip).x_s;
  o.require(x_s.shape() == Shape{frames, def.d_model}, "X_S is " + shape_str(x_s.shape()));

  temporal::SifrConfig tc;
  temporal::SifrNet net(pb.sub("temporal"), tc);
  const Tensor x_i = net(random({def.lookback, 8}, rng)).x_i;
  o.require(x_i.shape() == Shape{def.lookback + def.horizon, def.d_model}, "X_I is " + shape_str(x_i.shape()));
  const auto [xs2, xi2] = fusion::align_lengths(x_s, x_i);
  o.require(xs2.shape() == xi2.shape(), "aligned shapes differ");
  if (o.pass) {
    o.detail << "f1..f5 = 64x32x32 .. 1024x2x2; X_S " << shape_str(x_s.shape()) << "; X_I " << shape_str(x_i.shape());
  }
  return o;
}

// ---------------------------------------------------------------------------
// 4. Swap symmetry

Outcome swap_symmetry() {
  Outcome o;
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t L = 1 + rng.index(20), D = 1 + rng.index(6), N = 1 + rng.index(6);
    const auto in = oracle::to_inputs(oracle::random_raw(rng, L, D, N));
    const Tensor plain = fusion::selective_scan(in);
    const auto [ys, yi] = fusion::cross_modal_scan(in, in);
    for (std::size_t k = 0; k < plain.numel(); ++k) {
      worst = std::max({worst, std::abs(ys.data()[k] - plain.data()[k]), std::abs(yi.data()[k] - plain.data()[k])});
    }
    nn::ParameterSet ps;
    fusion::SelectiveSsm block(nn::ParamBuilder(ps, rng), D, N);
    Tensor x = random({L, D}, rng);
    const Tensor single = block(x);
    const auto [bs, bi] = fusion::cross_modal_block(block, block, x, x);
    for (std::size_t k = 0; k < single.numel(); ++k) {
      worst = std::max({worst, std::abs(bs.data()[k] - single.data()[k]), std::abs(bi.data()[k] - single.data()[k])});
    }
  }
  o.require(worst <= 1e-12, "max deviation " + fmt(worst));
  if (o.pass) o.detail << "100 tied scans, max deviation " << fmt(worst);
  return o;
}

// ---------------------------------------------------------------------------
// 5. Period mining

Outcome period_mining() {
  Outcome o;
  Rng rng(5);
  const std::size_t L = 96, C = 3;
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.index(2);
    std::vector<std::size_t> freqs;
    while (freqs.size() < k) {
      const std::size_t f = 1 + rng.index(L / 2 - 1);
      if (std::find(freqs.begin(), freqs.end(), f) == freqs.end()) freqs.push_back(f);
    }
    // Distinct amplitudes, strongest first: 1 + 0.5 j + jitter below 0.25.
    std::vector<double> amps(k);
    for (std::size_t j = 0; j < k; ++j) amps[j] = 1.0 + 0.5 * static_cast<double>(k - 1 - j) + rng.uniform(0.0, 0.25);
    std::vector<double> v(L * C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t j = 0; j < k; ++j) {
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t t = 0; t < L; ++t) {
          v[t * C + c] += amps[j] * std::sin(2.0 * std::numbers::pi * static_cast<double>(freqs[j] * t) / L + phase);
        }
      }
    }
    const auto ps = temporal::extract_periods(Tensor::from({L, C}, v), k);
    bool ok = ps.periods.size() == k;
    for (std::size_t j = 0; ok && j < k; ++j) ok = ps.periods[j].frequency == freqs[j];
    exact += ok ? 1 : 0;
  }
  o.require(exact == 100, std::to_string(exact) + "/100 exact");
  if (o.pass) o.detail << "100/100 mixtures of 2-3 sinusoids at L=96 recovered in amplitude order";
  return o;
}

// ---------------------------------------------------------------------------
// 6. Metric closed forms

Outcome metric_closed_forms() {
  Outcome o;
  using V = std::vector<double>;
  using Lab = std::vector<std::int32_t>;
  const V y3{1, 2, 3};
  o.require(metrics::mae(y3, y3) == 0.0 && metrics::mse(y3, y3) == 0.0, "identity mae/mse");
  o.require(metrics::mae(V{0, 0}, V{1, -1}) == 1.0 && metrics::mse(V{0, 0}, V{1, -1}) == 1.0, "mae/mse [0,0] vs [1,-1]");
  o.require(metrics::nrmse(V{0, 10}, V{0, 10}) == 0.0, "nrmse identity");
  o.require(std::abs(metrics::nrmse(V{0, 10}, V{1, 9}) - 10.0) < 1e-12, "nrmse 10%");
  bool threw = false;
  try {
    metrics::nrmse(V{4, 4, 4}, V{4, 4, 5});
  } catch (const ContractError&) {
    threw = true;
  }
  o.require(threw, "nrmse on constant y did not raise");
  o.require(metrics::r2(y3, y3) == 1.0, "r2 perfect");
  o.require(metrics::r2(y3, V{2, 2, 2}) == 0.0, "r2 mean predictor");
  const Lab all{0, 1, 2, 3, 3, 2, 1, 0};
  const auto same = metrics::seg_metrics(all, all, 4);
  o.require(same.precision == 1.0 && same.recall == 1.0 && same.miou == 1.0, "seg identity");
  const auto two = metrics::seg_metrics(Lab{0, 1, 1, 1}, Lab{0, 1, 0, 1}, 2);
  o.require(std::abs(two.miou - 7.0 / 12.0) < 1e-15, "2x2 MIoU " + fmt(two.miou, 17));
  const auto disjoint = metrics::seg_metrics(Lab{0, 0, 0, 0}, Lab{1, 1, 1, 1}, 2);
  o.require(disjoint.miou == 0.0, "disjoint MIoU");
  {
    Tape tape;
    Tensor logit = Tensor::from({1}, {0.0}, true), sat = Tensor::from({1}, {40.0}, true);
    Tensor x = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
    Tensor bce_half, bce_sat, mse_same;
    {
      TapeScope scope(tape);
      bce_half = metrics::bce_loss(logit, Tensor::from({1}, {0.5}));
      bce_sat = metrics::bce_loss(sat, Tensor::from({1}, {1.0}));
      mse_same = metrics::mse_loss(x, Tensor::from({3}, {0.5, -1.0, 2.0}));
    }
    o.require(std::abs(bce_half.item() - std::log(2.0)) < 1e-15, "bce(0, 0.5) = " + fmt(bce_half.item(), 17));
    o.require(bce_sat.item() < 1e-15, "bce(40, 1) = " + fmt(bce_sat.item()));
    tape.backward(mse_same);
    const auto& g = x.grad();
    o.require(mse_same.item() == 0.0 && std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; }),
              "mse(x, x) or its gradient nonzero");
  }
  if (o.pass) o.detail << "12 closed-form examples reproduced, 2x2 MIoU = 7/12";
  return o;
}

// ---------------------------------------------------------------------------
// 7 and 8. Desk-scale ablation on synthetic data

constexpr std::uint64_t kAblationDataSeed = 2025;

training::ExperimentConfig ablation_config(training::Scheme scheme) {
  training::ExperimentConfig c;
  c.scheme = scheme;
  c.lookback = 24;
  c.horizon = 6;
  c.frames = 3;
  c.image_size = 32;
  c.train_stride = 2;
  c.width = 4;
  c.d_model = 16;
  c.state = 8;
  c.scales = 1;
  c.top_k = 2;
  c.depth = 1;
  c.heads = 2;
  c.epochs = 60;
  return c;
}

struct AblationRun {
  std::string scheme;
  std::vector<double> mae;  // per horizon step
  std::size_t best_epoch = 0, epochs = 0;
  double seconds = 0.0;
};

struct Ablation {
  std::vector<AblationRun> runs;  // persistence, A, F, full
  double seconds = 0.0;
  std::size_t test_windows = 0;

  const AblationRun& get(const std::string& s) const {
    return *std::find_if(runs.begin(), runs.end(), [&](const AblationRun& r) { return r.scheme == s; });
  }
};

const Ablation& ablation() {
  static const Ablation result = [] {
    Ablation a;
    const auto t0 = Clock::now();
    data::SynthConfig sc;
    sc.image_size = 32;
    const auto ds = data::synthesize(kAblationDataSeed, 30, sc).dataset;
    for (auto scheme : {training::Scheme::Persistence, training::Scheme::A, training::Scheme::F, training::Scheme::Full}) {
      const auto cfg = ablation_config(scheme);
      const auto t1 = Clock::now();
      training::Model model(cfg);
      const auto pd = training::prepare_data(ds, cfg);
      AblationRun run{training::scheme_name(scheme), {}, 0, 0, 0.0};
      if (scheme != training::Scheme::Persistence) {
        const auto res = training::train(model, pd);
        run.best_epoch = res.log.best_epoch;
        run.epochs = res.log.epochs.size();
      }
      for (const auto& row : training::evaluate(model, pd, pd.test, cfg.horizon).steps) run.mae.push_back(row.mae);
      run.seconds = seconds_since(t1);
      a.test_windows = pd.test.size();
      std::cout << "  " << std::left << std::setw(12) << run.scheme << " test MAE by step:";
      for (double m : run.mae) std::cout << ' ' << std::fixed << std::setprecision(2) << m;
      std::cout << std::defaultfloat << "  (best epoch " << run.best_epoch << " of " << run.epochs << ", "
                << fmt(run.seconds) << " s)" << std::endl;
      a.runs.push_back(std::move(run));
    }
    a.seconds = seconds_since(t0);
    return a;
  }();
  return result;
}

Outcome directional_ablation() {
  Outcome o;
  const auto& a = ablation();
  const auto &full = a.get("full"), &f = a.get("F"), &ta = a.get("A"), &pers = a.get("persistence");
  o.require(full.mae[0] < f.mae[0], "full " + fmt(full.mae[0], 4) + " !< F " + fmt(f.mae[0], 4) + " at step 1");
  o.require(f.mae[0] < ta.mae[0], "F " + fmt(f.mae[0], 4) + " !< A " + fmt(ta.mae[0], 4) + " at step 1");
  for (std::size_t j = 0; j < full.mae.size(); ++j) {
    o.require(full.mae[j] < pers.mae[j], "full !< persistence at step " + std::to_string(j + 1));
  }
  o.require(full.epochs <= 60 && f.epochs <= 60 && ta.epochs <= 60, "more than 60 epochs");
  o.require(a.seconds <= 7200.0, "runtime " + fmt(a.seconds) + " s");
  o.detail << (o.pass ? "" : "; ") << "step-1 MAE full " << fmt(full.mae[0], 4) << ", F " << fmt(f.mae[0], 4)
           << ", A " << fmt(ta.mae[0], 4) << "; persistence " << fmt(pers.mae[0], 4) << ".." << fmt(pers.mae[5], 4)
           << "; " << a.test_windows << " test windows, " << fmt(a.seconds) << " s";
  return o;
}

Outcome horizon_degradation() {
  Outcome o;
  const auto& full = ablation().get("full");
  int rising = 0;
  for (std::size_t j = 1; j < full.mae.size(); ++j) rising += full.mae[j] >= full.mae[j - 1] ? 1 : 0;
  o.require(rising >= 5, "fewer than 5 non-decreasing steps");
  o.detail << (o.pass ? "" : "; ") << rising << " of 5 adjacent comparisons non-decreasing (" << fmt(full.mae[0], 4)
           << " .. " << fmt(full.mae.back(), 4) << ")";
  return o;
}

// ---------------------------------------------------------------------------
// 9. Segmentation smoke

Outcome segmentation_smoke() {
  Outcome o;
  const auto t0 = Clock::now();
  data::SynthConfig sc;
  sc.image_size = 64;
  const auto r = data::synthesize(9, 2, sc);
  const auto& ds = r.dataset;
  // Daylight frames, alternately assigned to training and held-out pools.
  std::vector<std::size_t> day;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto m = ds.minutes[i] % 1440;
    if (m > sc.sunrise + 30 && m < sc.sunset - 30) day.push_back(i);
  }
  std::vector<const data::Image*> train_im, test_im;
  std::vector<const data::Mask*> train_m, test_m;
  for (std::size_t k = 0; k < day.size() && (train_im.size() < 50 || test_im.size() < 20); ++k) {
    const bool to_test = k % 3 == 2;
    if (to_test && test_im.size() < 20) {
      test_im.push_back(&ds.images[day[k]]);
      test_m.push_back(&ds.masks[day[k]]);
    } else if (!to_test && train_im.size() < 50) {
      train_im.push_back(&ds.images[day[k]]);
      train_m.push_back(&ds.masks[day[k]]);
    }
  }
  o.require(train_im.size() == 50 && test_im.size() == 20, "not enough daylight frames");
  training::ExperimentConfig cfg;
  cfg.image_size = 64;
  cfg.width = 8;
  cfg.d_model = 16;
  cfg.state = 8;
  cfg.lookback = 16;
  cfg.frames = 1;
  cfg.scales = 1;
  cfg.top_k = 2;
  cfg.heads = 2;
  cfg.depth = 1;
  training::Model model(cfg);
  const auto hist = training::train_segmentation(model, train_im, train_m, 200);
  const auto train_scores = training::evaluate_segmentation(model, train_im, train_m);
  const auto scores = training::evaluate_segmentation(model, test_im, test_m);
  o.require(scores.miou >= 0.85, "MIoU below 0.85");
  o.detail << (o.pass ? "" : "; ") << "held-out MIoU " << fmt(scores.miou, 4) << " (train " << fmt(train_scores.miou, 4)
           << ", P " << fmt(scores.precision, 3) << ", R " << fmt(scores.recall, 3) << "), loss "
           << fmt(hist.front(), 3) << " -> " << fmt(hist.back(), 3) << ", " << fmt(seconds_since(t0)) << " s";
  return o;
}

// ---------------------------------------------------------------------------
// 10. Reproducibility

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome reproducibility() {
  Outcome o;
  data::SynthConfig sc;
  sc.image_size = 32;
  const auto ds = data::synthesize(10, 10, sc).dataset;
  auto cfg = ablation_config(training::Scheme::Full);
  cfg.epochs = 3;
  cfg.train_stride = 4;
  const fs::path root = fs::temp_directory_path() / "m3s_acceptance_repro";
  std::string logs[2], manifests[2], params[2];
  for (int run = 0; run < 2; ++run) {
    training::Model model(cfg);
    const auto pd = training::prepare_data(ds, cfg);
    const auto res = training::train(model, pd);
    const fs::path dir = root / ("run" + std::to_string(run));
    fs::remove_all(dir);
    training::save_checkpoint(dir, model, pd.stats);
    std::ostringstream log;
    res.log.write(log);
    logs[run] = log.str();
    manifests[run] = slurp(dir / "manifest.txt");
    params[run] = slurp(dir / "params.bin");
  }
  fs::remove_all(root);
  o.require(!params[0].empty(), "empty checkpoint");
  o.require(logs[0] == logs[1], "TrainLogs differ");
  o.require(manifests[0] == manifests[1] && params[0] == params[1], "checkpoints differ");
  if (o.pass) {
    o.detail << "two 3-epoch runs: TrainLog (" << logs[0].size() << " B) and checkpoint ("
             << manifests[0].size() + params[0].size() << " B) byte-identical";
  }
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--only" && a + 1 < argc) {
      std::stringstream ss(argv[++a]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: m3s_acceptance [--only 1,2,...]\n";
      return 1;
    }
  }
  const std::vector<Criterion> criteria = {
      {1, "gradient suite", gradient_suite},
      {2, "oracle equivalences", oracle_equivalences},
      {3, "shape contracts", shape_contracts},
      {4, "swap symmetry", swap_symmetry},
      {5, "period mining", period_mining},
      {6, "metric closed forms", metric_closed_forms},
      {7, "directional ablation", directional_ablation},
      {8, "horizon degradation", horizon_degradation},
      {9, "segmentation smoke", segmentation_smoke},
      {10, "reproducibility", reproducibility},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && only.count(c.id) == 0) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failed += o.pass ? 0 : 1;
    std::cout << "criterion " << c.id << " [" << c.name << "]: " << (o.pass ? "PASS" : "FAIL") << " - "
              << o.detail.str() << std::endl;
  }
  std::cout << (failed == 0 ? "all selected criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
