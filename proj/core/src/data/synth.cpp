// SPDX-License-Identifier: Apache-2.0
#include "m3s/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "m3s/error.hpp"
#include "m3s/tensor/rng.hpp"

namespace m3s::data {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::array<double, 3> kSky{0.35, 0.55, 0.85};
constexpr std::array<double, 3> kNightSky{0.04, 0.05, 0.12};
constexpr std::array<double, 3> kSunColor{1.0, 0.93, 0.55};
// Cloud centres live on a torus slightly larger than the image so clouds
// enter and leave smoothly.
constexpr double kTorusLo = -0.35, kTorusSpan = 1.7;

double wrap(double v) { return kTorusLo + std::fmod(std::fmod(v - kTorusLo, kTorusSpan) + kTorusSpan, kTorusSpan); }

struct CloudTrack {
  Cloud shape;    // position at record_start
  double vx, vy;  // image widths per hour
};

struct BoundedWalk {
  double value, lo, hi, step;
  double next(Rng& rng) {
    value += rng.normal() * step;
    if (value < lo) value = 2 * lo - value;
    if (value > hi) value = 2 * hi - value;
    value = std::clamp(value, lo, hi);
    return value;
  }
};

bool in_disk(const Scene& s, double x, double y) {
  return (x - s.sun_x) * (x - s.sun_x) + (y - s.sun_y) * (y - s.sun_y) <= s.sun_r * s.sun_r;
}

}  // namespace

bool Cloud::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
  return u * u + v * v <= 1.0;
}

double clear_sky_ghi(const SynthConfig& cfg, double t) {
  if (t <= cfg.sunrise || t >= cfg.sunset) return 0.0;
  return cfg.g_max * std::max(0.0, std::sin(kPi * (t - cfg.sunrise) / (cfg.sunset - cfg.sunrise)));
}

Scene sun_scene(const SynthConfig& cfg, double t) {
  Scene s;
  s.sun_r = cfg.sun_radius;
  const double progress = (t - cfg.sunrise) / (cfg.sunset - cfg.sunrise);
  s.sun_up = progress > 0.0 && progress < 1.0;
  s.sun_x = 0.15 + 0.7 * progress;
  s.sun_y = 0.8 - 0.55 * std::sin(kPi * std::clamp(progress, 0.0, 1.0));
  return s;
}

double occlusion_factor(const Scene& scene) {
  constexpr int kGrid = 25;
  double covered = 0.0;
  int samples = 0;
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      const double x = scene.sun_x + scene.sun_r * (2.0 * (j + 0.5) / kGrid - 1.0);
      const double y = scene.sun_y + scene.sun_r * (2.0 * (i + 0.5) / kGrid - 1.0);
      if (!in_disk(scene, x, y)) continue;
      double clear = 1.0;
      for (const auto& c : scene.clouds) {
        if (c.contains(x, y)) clear *= 1.0 - c.opacity;
      }
      covered += 1.0 - clear;
      ++samples;
    }
  }
  return 1.0 - 0.8 * covered / samples;
}

void render(const Scene& scene, std::size_t size, Image& image, Mask& mask) {
  image = {size, size, std::vector<std::uint8_t>(size * size * 3)};
  mask = {size, size, std::vector<std::uint8_t>(size * size)};
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(size);
      const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(size);
      std::array<double, 3> col = scene.sun_up ? kSky : kNightSky;
      const bool sun = scene.sun_up && in_disk(scene, x, y);
      if (sun) col = kSunColor;
      double top = -1.0;
      for (const auto& c : scene.clouds) {
        if (!c.contains(x, y)) continue;
        const double g = c.opacity < 0.5 ? kThinCloudGray : kThickCloudGray;
        for (auto& v : col) v = (1.0 - c.opacity) * v + c.opacity * g;
        top = std::max(top, c.opacity);
      }
      const std::size_t p = i * size + j;
      for (std::size_t k = 0; k < 3; ++k) {
        image.rgb[p * 3 + k] = static_cast<std::uint8_t>(std::lround(std::clamp(col[k], 0.0, 1.0) * 255.0));
      }
      mask.labels[p] = top >= 0.0 ? (top < 0.5 ? kWhiteCloud : kGrayCloud) : (sun ? kSun : kBackground);
    }
  }
}

SynthResult synthesize(std::uint64_t seed, std::size_t days, const SynthConfig& cfg) {
  if (days == 0) throw ConfigError("synthetic generation needs at least one day");
  if (cfg.image_size == 0 || cfg.record_end < cfg.record_start || !(cfg.sunset > cfg.sunrise)) {
    throw ConfigError("invalid synthetic configuration");
  }
  SynthResult out;
  Rng master(seed);
  BoundedWalk ws{4.0, 0.0, 15.0, 0.25}, temp{18.0, -10.0, 40.0, 0.1}, rh{60.0, 5.0, 100.0, 0.8},
      pressure{101300.0, 99000.0, 103000.0, 8.0};
  for (std::size_t day = 0; day < days; ++day) {
    Rng rng = master.split();
    const bool clear = rng.uniform() < cfg.clear_day_prob;
    out.clear_days += clear;
    std::vector<CloudTrack> tracks;
    const double speed = rng.uniform(0.15, 0.5);
    const double heading = rng.uniform(0.0, 2 * kPi);
    const double vx = speed * std::cos(heading), vy = speed * std::sin(heading);
    const std::size_t n_clouds = clear ? 0 : 1 + rng.index(cfg.max_clouds);
    for (std::size_t k = 0; k < n_clouds; ++k) {
      CloudTrack t;
      t.shape.cx = rng.uniform(kTorusLo, kTorusLo + kTorusSpan);
      t.shape.cy = rng.uniform(kTorusLo, kTorusLo + kTorusSpan);
      t.shape.a = rng.uniform(0.08, 0.28);
      t.shape.b = rng.uniform(0.05, 0.16);
      t.shape.angle = rng.uniform(0.0, kPi);
      t.shape.opacity = rng.uniform() < 0.4 ? rng.uniform(0.25, 0.45) : rng.uniform(0.6, 1.0);
      t.vx = vx * rng.uniform(0.85, 1.15);
      t.vy = vy * rng.uniform(0.85, 1.15);
      tracks.push_back(t);
    }
    const double wd = std::fmod(heading * 180.0 / kPi + 360.0, 360.0);
    for (std::int64_t m = cfg.record_start; m <= cfg.record_end; m += kIntervalMinutes) {
      const double hours = static_cast<double>(m - cfg.record_start) / 60.0;
      Scene scene = sun_scene(cfg, static_cast<double>(m));
      for (const auto& t : tracks) {
        Cloud c = t.shape;
        c.cx = wrap(c.cx + t.vx * hours);
        c.cy = wrap(c.cy + t.vy * hours);
        scene.clouds.push_back(c);
      }
      const double gc = clear_sky_ghi(cfg, static_cast<double>(m));
      const double o = scene.sun_up ? occlusion_factor(scene) : 1.0;
      double ghi = 0.0;
      if (gc > 0.0) {
        const double noise = cfg.noise_std > 0.0 ? cfg.noise_std * rng.normal() : 0.0;
        ghi = std::max(0.0, gc * o + noise);
      }
      const double cos_z = gc / cfg.g_max;
      const double beam_h = std::min(ghi, 0.85 * gc * (o - 0.2) / 0.8);
      const double dni = gc > 0.0 ? beam_h / std::max(cos_z, 0.1) : 0.0;
      const double dhi = ghi - beam_h;
      const double diurnal = std::sin(kPi * (static_cast<double>(m) - cfg.sunrise) / (cfg.sunset - cfg.sunrise));
      MeteoRow row{ghi,
                   dni,
                   std::max(0.0, dhi),
                   std::max(0.0, ws.next(rng) + speed * 4.0 - 1.0),
                   wd,
                   temp.next(rng) + 6.0 * diurnal * o,
                   std::clamp(rh.next(rng) + 15.0 * (1.0 - o), 0.0, 100.0),
                   pressure.next(rng)};
      validate_row(row);
      const std::int64_t stamp = cfg.first_day + static_cast<std::int64_t>(day) * 1440 + m;
      Image img;
      Mask mask;
      render(scene, cfg.image_size, img, mask);
      out.dataset.timestamps.push_back(format_timestamp(stamp));
      out.dataset.minutes.push_back(stamp);
      out.dataset.meteo.push_back(row);
      out.dataset.images.push_back(std::move(img));
      out.dataset.masks.push_back(std::move(mask));
      out.occlusion.push_back(o);
      out.clear_sky.push_back(gc);
    }
  }
  return out;
}

SynthResult synth_generate(const std::filesystem::path& root, std::uint64_t seed, std::size_t days,
                           const SynthConfig& cfg) {
  SynthResult r = synthesize(seed, days, cfg);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw DataError("cannot create " + root.string() + ": " + ec.message());
  write_dataset(root, r.dataset);
  std::ofstream m(root / "manifest.txt");
  if (!m) throw DataError("cannot write " + (root / "manifest.txt").string());
  m << "seed=" << seed << "\ndays=" << days << "\nrows=" << r.dataset.size() << "\nclear_days=" << r.clear_days
    << "\nimage_size=" << cfg.image_size << "\ninterval_minutes=" << kIntervalMinutes
    << "\nrecord_start=" << cfg.record_start << "\nrecord_end=" << cfg.record_end << "\nsunrise=" << cfg.sunrise
    << "\nsunset=" << cfg.sunset << "\ng_max=" << cfg.g_max << "\nsun_radius=" << cfg.sun_radius
    << "\nnoise_std=" << cfg.noise_std << "\nclear_day_prob=" << cfg.clear_day_prob
    << "\nmax_clouds=" << cfg.max_clouds << "\n";
  return r;
}

}  // namespace m3s::data
