// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m3s/data/dataset.hpp"

namespace m3s::data {

/// Mask classes.
enum SkyClass : std::uint8_t { kWhiteCloud = 0, kGrayCloud = 1, kSun = 2, kBackground = 3 };

struct SynthConfig {
  std::size_t image_size = 64;
  std::int64_t first_day = 20250 * 1440;  // minutes since epoch of day 0, 00:00
  std::int64_t record_start = 5 * 60;     // first row of each day, minutes after midnight
  std::int64_t record_end = 19 * 60;      // last row of each day (inclusive)
  double sunrise = 6 * 60.0;
  double sunset = 18 * 60.0;
  double g_max = 1000.0;
  double sun_radius = 0.1;
  double noise_std = 5.0;       // W/m^2, daylight only
  double clear_day_prob = 0.1;  // days without clouds
  std::size_t max_clouds = 6;
};

struct Cloud {
  double cx = 0, cy = 0;  // centre in [0, 1]^2, y pointing down
  double a = 0, b = 0;    // semi-axes
  double angle = 0;       // radians
  double opacity = 0;
  bool contains(double x, double y) const;
};

struct Scene {
  double sun_x = 0.5, sun_y = 0.5, sun_r = 0.1;
  bool sun_up = false;
  std::vector<Cloud> clouds;
};

/// Clear-sky GHI: g_max * max(0, sin(pi (t - sunrise) / (sunset - sunrise))), t in minutes after midnight.
double clear_sky_ghi(const SynthConfig& cfg, double minute_of_day);
/// Sun disk position for a minute of day; sun_up is false outside (sunrise, sunset).
Scene sun_scene(const SynthConfig& cfg, double minute_of_day);
/// 1 - 0.8 * mean over the sun disk of the composited cloud alpha 1 - prod(1 - opacity).
double occlusion_factor(const Scene& scene);
/// RGB render plus the exact class mask.
void render(const Scene& scene, std::size_t size, Image& image, Mask& mask);

/// Thin clouds draw opacity in [0.25, 0.45], thick ones in [0.6, 1.0].
inline constexpr double kThinCloudGray = 0.95;
inline constexpr double kThickCloudGray = 0.55;

struct SynthResult {
  Dataset dataset;
  std::vector<double> occlusion;  // per row
  std::vector<double> clear_sky;  // per row
  std::size_t clear_days = 0;
};

/// Fully deterministic for (seed, days, cfg); each day draws from its own
/// sub-stream.
SynthResult synthesize(std::uint64_t seed, std::size_t days, const SynthConfig& cfg = {});
/// synthesize + write_dataset + manifest.txt.
SynthResult synth_generate(const std::filesystem::path& out, std::uint64_t seed, std::size_t days,
                           const SynthConfig& cfg = {});

}  // namespace m3s::data
