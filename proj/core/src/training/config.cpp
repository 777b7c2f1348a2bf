// SPDX-License-Identifier: Apache-2.0
#include "m3s/training/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "m3s/error.hpp"

namespace m3s::training {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
  }
  return out;
}

template <class T>
std::string format_number(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Field {
  std::string name, help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field number_field(const char* name, const char* help, T ExperimentConfig::*member) {
  return {name, help, [=](ExperimentConfig& c, const std::string& v) { c.*member = parse_number<T>(name, v); },
          [=](const ExperimentConfig& c) { return format_number(c.*member); }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> f = {
      {"scheme", "full, A-F or persistence",
       [](C& c, const std::string& v) { c.scheme = parse_scheme(v); },
       [](const C& c) { return scheme_name(c.scheme); }},
      number_field("lookback", "input window length L (rows)", &C::lookback),
      number_field("horizon", "forecast steps (10 min each)", &C::horizon),
      number_field("frames", "trailing images per window, 0 = lookback", &C::frames),
      number_field("image_size", "square image side in pixels", &C::image_size),
      number_field("train_stride", "row stride between training windows", &C::train_stride),
      number_field("d_model", "shared feature width", &C::d_model),
      number_field("width", "visual encoder base width", &C::width),
      number_field("state", "selective scan state size", &C::state),
      number_field("scales", "temporal pyramid depth M", &C::scales),
      number_field("top_k", "dominant periods", &C::top_k),
      number_field("window", "dense attention window", &C::window),
      number_field("interval", "sparse attention stride", &C::interval),
      number_field("depth", "dense+sparse attention pairs", &C::depth),
      number_field("heads", "attention heads", &C::heads),
      number_field("partial_ratio", "channel fraction of partial operators", &C::partial_ratio),
      number_field("beta", "segmentation loss weight", &C::beta),
      number_field("lr", "learning rate", &C::lr),
      number_field("adam_beta1", "first-moment decay", &C::adam_beta1),
      number_field("adam_beta2", "second-moment decay", &C::adam_beta2),
      number_field("adam_eps", "denominator epsilon", &C::adam_eps),
      number_field("clip_norm", "gradient norm bound, 0 disables", &C::clip_norm),
      number_field("batch", "windows per update", &C::batch),
      number_field("epochs", "maximum epochs", &C::epochs),
      number_field("patience", "early-stopping patience in epochs", &C::patience),
      number_field("seed", "initialisation and shuffling seed", &C::seed),
  };
  return f;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

Scheme parse_scheme(const std::string& n) {
  if (n == "full") return Scheme::Full;
  if (n == "A") return Scheme::A;
  if (n == "B") return Scheme::B;
  if (n == "C") return Scheme::C;
  if (n == "D") return Scheme::D;
  if (n == "E") return Scheme::E;
  if (n == "F") return Scheme::F;
  if (n == "persistence") return Scheme::Persistence;
  throw ConfigError("unknown scheme '" + n + "' (expected full, A-F or persistence)");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Full: return "full";
    case Scheme::A: return "A";
    case Scheme::B: return "B";
    case Scheme::C: return "C";
    case Scheme::D: return "D";
    case Scheme::E: return "E";
    case Scheme::F: return "F";
    case Scheme::Persistence: return "persistence";
  }
  return "full";
}

void ExperimentConfig::validate() const {
  const auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(lookback >= 1, "lookback must be at least 1");
  need(horizon >= 1, "horizon must be at least 1");
  need(frames <= lookback, "frames must not exceed lookback");
  need(train_stride >= 1, "train_stride must be at least 1");
  need(batch >= 1, "batch must be at least 1");
  need(lr >= 0.0, "lr must be non-negative");
  need(beta >= 0.0, "beta must be non-negative");
  if (scheme == Scheme::Persistence) return;
  need(scales < 20 && lookback >= (std::size_t{1} << scales), "lookback must be at least 2^scales");
  need(((lookback - 1) >> scales) + 1 >= 4, "coarsest pyramid scale needs at least 4 rows");
  need(d_model >= 1 && heads >= 1 && d_model % heads == 0, "d_model must be a positive multiple of heads");
  need(top_k >= 1 && window >= 1 && interval >= 1 && depth >= 1 && state >= 1, "top_k, window, interval, depth and state must be positive");
  if (uses_images()) {
    need(image_size >= 32 && image_size % 32 == 0, "image_size must be a positive multiple of 32");
    need(width >= 1, "width must be positive");
    need(partial_ratio > 0.0 && partial_ratio <= 1.0, "partial_ratio must lie in (0, 1]");
  }
}

std::vector<ConfigKey> config_keys() {
  const ExperimentConfig def;
  std::vector<ConfigKey> out;
  for (const auto& f : fields()) out.push_back({f.name, f.get(def), f.help});
  return out;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, trim(value));
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return field(key).get(cfg); }

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

ExperimentConfig config_from_text(const std::string& text, ExperimentConfig cfg) {
  for (const auto& [k, v] : parse_key_values(text)) set_config_value(cfg, k, v);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return config_from_text(os.str(), base);
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.name + "=" + f.get(cfg) + "\n";
  return out;
}

void apply_seed_override(ExperimentConfig& cfg) {
  if (const char* s = std::getenv("M3S_SEED"); s != nullptr && *s != '\0') set_config_value(cfg, "seed", s);
}

}  // namespace m3s::training
