// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "m3s/data/dataset.hpp"
#include "m3s/data/synth.hpp"
#include "m3s/error.hpp"

namespace m3s {
namespace {

namespace fs = std::filesystem;
using namespace data;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("m3s_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Hand-built dataset of n rows at 10-minute spacing with 4x4 images.
Dataset tiny_dataset(std::size_t n, std::int64_t start = 20000 * 1440 + 360) {
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t t = start + static_cast<std::int64_t>(i) * kIntervalMinutes;
    ds.timestamps.push_back(format_timestamp(t));
    ds.minutes.push_back(t);
    ds.meteo.push_back({100.0 + static_cast<double>(i), 50, 20, 3, 180, 20, 50, 101000});
    ds.images.push_back({4, 4, std::vector<std::uint8_t>(48, static_cast<std::uint8_t>(i % 256))});
  }
  return ds;
}

TEST(Timestamps, RoundTripAndValidation) {
  EXPECT_EQ(parse_timestamp("197001010000"), 0);
  EXPECT_EQ(parse_timestamp("197001020130"), 1440 + 90);
  EXPECT_EQ(format_timestamp(parse_timestamp("202502281450")), "202502281450");
  EXPECT_EQ(format_timestamp(parse_timestamp("202402292350") + 10), "202403010000");
  EXPECT_THROW(parse_timestamp("20250230"), DataError);
  EXPECT_THROW(parse_timestamp("202502301200"), DataError);
  EXPECT_THROW(parse_timestamp("202501012400"), DataError);
  EXPECT_THROW(parse_timestamp("2025010112a0"), DataError);
}

TEST(Png, RoundTrip) {
  const auto dir = scratch("png");
  Image im{3, 5, {}};
  for (std::size_t i = 0; i < 45; ++i) im.rgb.push_back(static_cast<std::uint8_t>(i * 5));
  write_png(dir / "a.png", im);
  const Image back = read_png_rgb(dir / "a.png");
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.rgb, im.rgb);
  Mask m{2, 2, {0, 1, 2, 3}};
  write_png(dir / "m.png", m);
  EXPECT_EQ(read_png_mask(dir / "m.png").labels, m.labels);
  std::ofstream(dir / "bad.png") << "not a png";
  EXPECT_THROW(read_png_rgb(dir / "bad.png"), DataError);
  EXPECT_THROW(read_png_rgb(dir / "missing.png"), DataError);
}

TEST(Png, TensorConversion) {
  Image im{1, 2, {255, 0, 51, 0, 255, 102}};
  Tensor t = images_to_tensor({&im});
  EXPECT_EQ(t.shape(), (Shape{1, 3, 1, 2}));
  test::expect_near_all(t, std::vector<double>{1, 0, 0, 1, 0.2, 0.4}, 1e-15);
  Mask m{1, 2, {3, 0}};
  Tensor oh = masks_to_onehot({&m}, 4);
  test::expect_near_all(oh, std::vector<double>{0, 1, 0, 0, 0, 0, 1, 0}, 0.0);
  Mask bad{1, 1, {7}};
  EXPECT_THROW(masks_to_onehot({&bad}, 4), DataError);
}

TEST(Loader, RoundTripAndWindows) {
  const auto dir = scratch("loader");
  const Dataset ds = tiny_dataset(200);
  write_dataset(dir, ds);
  const Dataset back = load_dataset(dir);
  ASSERT_EQ(back.size(), 200u);
  EXPECT_EQ(back.dropped_rows, 0u);
  EXPECT_EQ(back.timestamps, ds.timestamps);
  EXPECT_EQ(back.meteo, ds.meteo);
  EXPECT_EQ(back.images[7].rgb, ds.images[7].rgb);
  EXPECT_FALSE(back.has_masks());
  EXPECT_EQ(cut_windows(back, 96 + 6, 1).size(), 99u);
  EXPECT_EQ(cut_windows(back, 102, 6).size(), 17u);
}

TEST(Loader, DropsRowsWithoutImages) {
  const auto dir = scratch("drop");
  write_dataset(dir, tiny_dataset(30));
  for (int i : {4, 5, 20}) fs::remove(dir / "images" / (format_timestamp(20000 * 1440 + 360 + i * 10) + ".png"));
  const Dataset back = load_dataset(dir);
  EXPECT_EQ(back.dropped_rows, 3u);
  EXPECT_EQ(back.size(), 27u);
  // Runs 0..3, 6..19, 21..29 of lengths 4, 14, 9.
  const auto w = cut_windows(back, 5, 1);
  EXPECT_EQ(w.size(), 10u + 5u);
}

void write_csv(const fs::path& dir, const std::string& body) {
  fs::create_directories(dir / "images");
  std::ofstream(dir / "series.csv") << body;
}

TEST(Loader, RejectsBadRows) {
  const auto dir = scratch("bad");
  Dataset one = tiny_dataset(2);
  write_dataset(dir, one);
  const std::string ts0 = one.timestamps[0], ts1 = one.timestamps[1];
  const auto expect_error = [&](const std::string& body, const std::string& fragment) {
    write_csv(dir, body);
    try {
      load_dataset(dir);
      ADD_FAILURE() << "no error for " << fragment;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  const std::string h = std::string(kSeriesHeader) + "\n";
  expect_error("timestamp,ghi\n", "line 1");
  expect_error(h + ts0 + ",-1,0,0,1,10,20,50,101000\n", "line 2: ghi is negative");
  expect_error(h + ts0 + ",1,0,0,1,10,20,50,101000\n" + ts1 + ",1,0,0,1,360,20,50,101000\n", "line 3: wd");
  expect_error(h + ts0 + ",1,0,0,1,10,20,150,101000\n", "rh");
  expect_error(h + ts0 + ",1,0,0,1,10,20\n", "expected 9 fields");
  expect_error(h + ts0 + ",1,x,0,1,10,20,50,101000\n", "bad number");
  expect_error(h + ts1 + ",1,0,0,1,10,20,50,101000\n" + ts0 + ",1,0,0,1,10,20,50,101000\n", "strictly increasing");
  EXPECT_THROW(load_dataset(dir / "nowhere"), DataError);
}

TEST(Split, SizesDeterminismPartition) {
  const auto s = split_731(100, 7);
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 20u);
  const auto again = split_731(100, 7);
  EXPECT_EQ(s.train, again.train);
  EXPECT_EQ(s.test, again.test);
  EXPECT_NE(split_731(100, 8).train, s.train);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(*all.rbegin(), 99u);
  EXPECT_THROW(split_731(9, 1), ConfigError);
  const auto s30 = split_731(30, 1);
  EXPECT_EQ(s30.train.size() + s30.val.size() + s30.test.size(), 30u);
  EXPECT_EQ(s30.train.size(), 21u);
  EXPECT_EQ(s30.val.size(), 3u);
}

TEST(Split, DayBlocksKeepWindowsDisjoint) {
  SynthConfig cfg;
  cfg.image_size = 8;
  const auto r = synthesize(3, 12, cfg);
  const auto rows = split_rows_by_day(r.dataset, 11);
  std::vector<bool> train(rows.size()), test(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    train[i] = rows[i] == 0;
    test[i] = rows[i] == 2;
  }
  const std::size_t len = 30;
  std::set<std::size_t> train_rows;
  for (auto s : cut_windows(r.dataset, len, 1, train)) {
    for (std::size_t k = 0; k < len; ++k) train_rows.insert(s + k);
  }
  const auto test_windows = cut_windows(r.dataset, len, 6, test);
  EXPECT_FALSE(test_windows.empty());
  for (auto s : test_windows) {
    for (std::size_t k = 0; k < len; ++k) EXPECT_EQ(train_rows.count(s + k), 0u);
  }
}

TEST(Normalize, ZScoreAndInverse) {
  Dataset ds = tiny_dataset(4);
  ds.meteo[0][0] = 400;
  ds.meteo[1][0] = 600;
  ds.meteo[2][0] = 600;
  ds.meteo[3][0] = 400;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 1; c < kMeteoColumns; ++c) ds.meteo[i][c] = static_cast<double>(i * c) + 1.0;
  }
  const auto s = fit_normalization(ds, {true, true, true, true});
  EXPECT_DOUBLE_EQ(s.mean[0], 500.0);
  EXPECT_DOUBLE_EQ(s.stddev[0], 100.0);
  EXPECT_DOUBLE_EQ(normalize_value(s, 0, 600.0), 1.0);
  EXPECT_DOUBLE_EQ(normalize_value(s, 0, 1500.0), 10.0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double v = rng.uniform(-1e3, 1e3);
    EXPECT_NEAR(denormalize_value(s, 0, normalize_value(s, 0, v)), v, 1e-12 * std::max(1.0, std::abs(v)));
  }
  Dataset flat = tiny_dataset(3);
  EXPECT_THROW(fit_normalization(flat, {true, true, true}), DataError);
}

TEST(Synth, CloudlessDayIsClearSky) {
  SynthConfig cfg;
  cfg.image_size = 16;
  cfg.clear_day_prob = 1.0;
  cfg.noise_std = 0.0;
  const auto r = synthesize(5, 1, cfg);
  ASSERT_EQ(r.clear_days, 1u);
  for (std::size_t i = 0; i < r.dataset.size(); ++i) {
    const double minute = static_cast<double>(r.dataset.minutes[i] % 1440);
    EXPECT_DOUBLE_EQ(r.dataset.meteo[i][0], clear_sky_ghi(cfg, minute));
    EXPECT_DOUBLE_EQ(r.occlusion[i], 1.0);
  }
}

TEST(Synth, FullCoverGivesFloor) {
  SynthConfig cfg;
  Scene s = sun_scene(cfg, 720.0);
  ASSERT_TRUE(s.sun_up);
  EXPECT_DOUBLE_EQ(occlusion_factor(s), 1.0);
  s.clouds.push_back({s.sun_x, s.sun_y, 0.3, 0.3, 0.0, 1.0});
  EXPECT_DOUBLE_EQ(occlusion_factor(s), 0.2);
  s.clouds[0].opacity = 0.5;
  EXPECT_DOUBLE_EQ(occlusion_factor(s), 0.6);
}

TEST(Synth, MaskClasses) {
  SynthConfig cfg;
  Scene s = sun_scene(cfg, 720.0);
  s.sun_x = 0.25;
  s.sun_y = 0.25;
  s.clouds.push_back({0.75, 0.25, 0.1, 0.1, 0.0, 0.3});  // thin
  s.clouds.push_back({0.75, 0.75, 0.1, 0.1, 0.0, 0.8});  // thick
  Image im;
  Mask m;
  render(s, 32, im, m);
  const auto at = [&](double x, double y) {
    return m.labels[static_cast<std::size_t>(y * 32) * 32 + static_cast<std::size_t>(x * 32)];
  };
  EXPECT_EQ(at(0.25, 0.25), kSun);
  EXPECT_EQ(at(0.75, 0.25), kWhiteCloud);
  EXPECT_EQ(at(0.75, 0.75), kGrayCloud);
  EXPECT_EQ(at(0.25, 0.75), kBackground);
  // Cloud over the sun takes the pixel.
  s.clouds.push_back({0.25, 0.25, 0.05, 0.05, 0.0, 0.55});
  render(s, 32, im, m);
  EXPECT_EQ(at(0.25, 0.25), kGrayCloud);
}

TEST(Synth, InvariantsOverManyDays) {
  SynthConfig cfg;
  cfg.image_size = 16;
  const auto r = synthesize(9, 6, cfg);
  const auto& ds = r.dataset;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_NO_THROW(validate_row(ds.meteo[i]));
    const double minute = static_cast<double>(ds.minutes[i] % 1440);
    if (minute <= cfg.sunrise || minute >= cfg.sunset) EXPECT_EQ(ds.meteo[i][0], 0.0);
    const Scene sun = sun_scene(cfg, minute);
    for (std::size_t p = 0; p < 256; ++p) {
      if (ds.masks[i].labels[p] != kSun) continue;
      const double x = (static_cast<double>(p % 16) + 0.5) / 16.0, y = (static_cast<double>(p / 16) + 0.5) / 16.0;
      EXPECT_TRUE(sun.sun_up);
      EXPECT_LE(std::hypot(x - sun.sun_x, y - sun.sun_y), sun.sun_r + 1e-12);
    }
  }
  std::size_t occluded = 0;
  for (double o : r.occlusion) occluded += o < 0.99;
  EXPECT_GT(occluded, 0u);
}

TEST(Synth, DeterministicOnDisk) {
  SynthConfig cfg;
  cfg.image_size = 8;
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  synth_generate(a, 42, 3, cfg);
  synth_generate(b, 42, 3, cfg);
  EXPECT_EQ(slurp(a / "series.csv"), slurp(b / "series.csv"));
  EXPECT_TRUE(fs::exists(a / "manifest.txt"));
  const auto back = load_dataset(a, {true});
  EXPECT_EQ(back.size(), 3u * 85u);
  EXPECT_TRUE(back.has_masks());
  const std::string csv = slurp(a / "series.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3 * 85 + 1);
  EXPECT_THROW(synthesize(1, 0, cfg), ConfigError);
}

TEST(Synth, LoaderNormalizeRoundTripOnTarget) {
  SynthConfig cfg;
  cfg.image_size = 8;
  const auto dir = scratch("synth_rt");
  synth_generate(dir, 4, 2, cfg);
  const auto ds = load_dataset(dir);
  std::vector<bool> use(ds.size(), true);
  const auto s = fit_normalization(ds, use);
  const auto z = normalize_rows(s, ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_NEAR(denormalize_value(s, 0, z[i * kMeteoColumns]), ds.meteo[i][0], 1e-12 * std::max(1.0, ds.meteo[i][0]));
  }
}

}  // namespace
}  // namespace m3s
