// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace m3s::training {

enum class Scheme { Full, A, B, C, D, E, F, Persistence };

/// "full", "A".."F", "persistence". Throws ConfigError.
Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme s);

struct ExperimentConfig {
  Scheme scheme = Scheme::Full;
  // Windows
  std::size_t lookback = 96;
  std::size_t horizon = 6;
  std::size_t frames = 0;  // trailing lookback frames fed to the visual branch; 0 means all
  std::size_t image_size = 64;
  std::size_t train_stride = 1;
  // Architecture
  std::size_t d_model = 128;
  std::size_t width = 64;
  std::size_t state = 16;
  std::size_t scales = 2;
  std::size_t top_k = 3;
  std::size_t window = 4;
  std::size_t interval = 4;
  std::size_t depth = 2;
  std::size_t heads = 4;
  double partial_ratio = 0.25;
  // Optimisation
  double beta = 0.1;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  std::size_t batch = 16;
  std::size_t epochs = 60;
  std::size_t patience = 10;
  std::uint64_t seed = 1;

  std::size_t frame_count() const { return frames == 0 ? lookback : frames; }
  bool uses_images() const { return scheme != Scheme::A && scheme != Scheme::Persistence; }
  /// Throws ConfigError on inconsistent or out-of-range values.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every key accepted by set_config_value, with defaults.
std::vector<ConfigKey> config_keys();

/// Throws ConfigError on an unknown key or unparsable value.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

/// key=value lines; '#' starts a comment. Throws ConfigError naming the line.
std::map<std::string, std::string> parse_key_values(const std::string& text);
ExperimentConfig config_from_text(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
/// All keys in config_keys() order.
std::string config_to_text(const ExperimentConfig& cfg);

/// Applies M3S_SEED from the environment when set. Throws ConfigError on a bad value.
void apply_seed_override(ExperimentConfig& cfg);

}  // namespace m3s::training
