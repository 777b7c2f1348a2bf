// SPDX-License-Identifier: Apache-2.0
#include "m3s/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "m3s/error.hpp"
#include "m3s/tensor/rng.hpp"

namespace m3s::data {
namespace {

std::int64_t to_int(const std::string& s, std::size_t pos, std::size_t len) {
  std::int64_t v = 0;
  const char* b = s.data() + pos;
  const auto r = std::from_chars(b, b + len, v);
  if (r.ec != std::errc() || r.ptr != b + len) throw DataError("bad timestamp '" + s + "'");
  return v;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::int64_t parse_timestamp(const std::string& ts) {
  if (ts.size() != 12) throw DataError("timestamp '" + ts + "' is not YYYYMMDDHHMM");
  const auto y = static_cast<int>(to_int(ts, 0, 4));
  const auto mo = static_cast<unsigned>(to_int(ts, 4, 2));
  const auto d = static_cast<unsigned>(to_int(ts, 6, 2));
  const auto hh = to_int(ts, 8, 2), mm = to_int(ts, 10, 2);
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
  if (!ymd.ok() || hh > 23 || mm > 59) throw DataError("timestamp '" + ts + "' is not a valid date/time");
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 1440 + hh * 60 + mm;
}

std::string format_timestamp(std::int64_t minutes) {
  const std::int64_t days = minutes >= 0 ? minutes / 1440 : (minutes - 1439) / 1440;
  const std::int64_t rem = minutes - days * 1440;
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << std::setw(2)
     << static_cast<unsigned>(ymd.month()) << std::setw(2) << static_cast<unsigned>(ymd.day()) << std::setw(2)
     << rem / 60 << std::setw(2) << rem % 60;
  return os.str();
}

void validate_row(const MeteoRow& r) {
  for (std::size_t c = 0; c < kMeteoColumns; ++c) {
    if (!std::isfinite(r[c])) throw DataError(std::string(kColumnNames[c]) + " is not finite");
  }
  for (std::size_t c = 0; c < 3; ++c) {
    if (r[c] < 0.0) throw DataError(std::string(kColumnNames[c]) + " is negative");
  }
  if (r[3] < 0.0) throw DataError("ws is negative");
  if (!(r[4] >= 0.0 && r[4] < 360.0)) throw DataError("wd outside [0, 360)");
  if (!(r[6] >= 0.0 && r[6] <= 100.0)) throw DataError("rh outside [0, 100]");
  if (!(r[7] > 0.0)) throw DataError("p is not positive");
}

Dataset load_dataset(const std::filesystem::path& root, const LoadOptions& opt) {
  const auto csv = root / "series.csv";
  std::ifstream in(csv);
  if (!in) throw DataError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(csv.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSeriesHeader) throw DataError(csv.string() + " line 1: header must be '" + kSeriesHeader + "'");
  Dataset ds;
  std::size_t lineno = 1;
  std::int64_t previous = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = csv.string() + " line " + std::to_string(lineno) + ": ";
    const auto fields = split_fields(line);
    if (fields.size() != kMeteoColumns + 1) {
      throw DataError(where + "expected " + std::to_string(kMeteoColumns + 1) + " fields, got " +
                      std::to_string(fields.size()));
    }
    MeteoRow row{};
    std::int64_t t = 0;
    try {
      t = parse_timestamp(fields[0]);
      for (std::size_t c = 0; c < kMeteoColumns; ++c) {
        const auto& f = fields[c + 1];
        const auto r = std::from_chars(f.data(), f.data() + f.size(), row[c]);
        if (r.ec != std::errc() || r.ptr != f.data() + f.size()) throw DataError("bad number '" + f + "'");
      }
      validate_row(row);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (!first && t <= previous) throw DataError(where + "timestamps must be strictly increasing");
    if (!first && (t - previous) % kIntervalMinutes != 0) throw DataError(where + "timestamp off the 10-minute grid");
    first = false;
    previous = t;
    const auto img = root / "images" / (fields[0] + ".png");
    if (!std::filesystem::exists(img)) {
      ++ds.dropped_rows;
      continue;
    }
    ds.timestamps.push_back(fields[0]);
    ds.minutes.push_back(t);
    ds.meteo.push_back(row);
    ds.images.push_back(read_png_rgb(img));
    const auto& im = ds.images.back();
    if (im.height != ds.images.front().height || im.width != ds.images.front().width) {
      throw DataError(img.string() + ": image size differs from the first image");
    }
  }
  const auto mask_dir = root / "masks";
  if (std::filesystem::is_directory(mask_dir)) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto p = mask_dir / (ds.timestamps[i] + ".png");
      if (!std::filesystem::exists(p)) {
        if (opt.require_masks) throw DataError("missing mask " + p.string());
        ds.masks.clear();
        break;
      }
      ds.masks.push_back(read_png_mask(p));
      if (ds.masks.back().height != ds.images[i].height || ds.masks.back().width != ds.images[i].width) {
        throw DataError(p.string() + ": mask size differs from its image");
      }
    }
  } else if (opt.require_masks) {
    throw DataError("missing directory " + mask_dir.string());
  }
  if (ds.size() == 0) throw DataError(csv.string() + ": no rows with images");
  return ds;
}

void write_dataset(const std::filesystem::path& root, const Dataset& ds) {
  std::filesystem::create_directories(root / "images");
  if (ds.has_masks()) std::filesystem::create_directories(root / "masks");
  std::ofstream out(root / "series.csv");
  if (!out) throw DataError("cannot write " + (root / "series.csv").string());
  out << kSeriesHeader << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.timestamps[i];
    for (double v : ds.meteo[i]) {
      char buf[64];
      const auto r = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string(buf, r.ptr);
    }
    out << '\n';
    write_png(root / "images" / (ds.timestamps[i] + ".png"), ds.images[i]);
    if (ds.has_masks()) write_png(root / "masks" / (ds.timestamps[i] + ".png"), ds.masks[i]);
  }
  if (!out) throw DataError("write failed for series.csv");
}

std::vector<std::size_t> cut_windows(const Dataset& ds, std::size_t length, std::size_t stride,
                                     const std::vector<bool>& allowed) {
  if (length == 0 || stride == 0) throw ConfigError("window length and stride must be positive");
  if (!allowed.empty() && allowed.size() != ds.size()) throw ContractError("cut_windows: mask size mismatch");
  const auto ok = [&](std::size_t i) { return allowed.empty() || allowed[i]; };
  std::vector<std::size_t> starts;
  std::size_t i = 0;
  while (i < ds.size()) {
    if (!ok(i)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < ds.size() && ok(j) && ds.minutes[j] - ds.minutes[j - 1] == kIntervalMinutes) ++j;
    for (std::size_t s = i; s + length <= j; s += stride) starts.push_back(s);
    i = j;
  }
  return starts;
}

Split split_731(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw ConfigError("7:1:2 split needs at least 10 units, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

std::vector<int> split_rows_by_day(const Dataset& ds, std::uint64_t seed) {
  std::map<std::int64_t, std::size_t> day_index;
  for (auto m : ds.minutes) day_index.emplace(m / 1440, 0);
  std::size_t k = 0;
  for (auto& [day, idx] : day_index) idx = k++;
  const auto s = split_731(day_index.size(), seed);
  std::vector<int> day_split(day_index.size(), 0);
  for (auto d : s.val) day_split[d] = 1;
  for (auto d : s.test) day_split[d] = 2;
  std::vector<int> rows(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) rows[i] = day_split[day_index.at(ds.minutes[i] / 1440)];
  return rows;
}

NormStats fit_normalization(const Dataset& ds, const std::vector<bool>& use) {
  NormStats s;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!use[i]) continue;
    ++n;
    for (std::size_t c = 0; c < kMeteoColumns; ++c) s.mean[c] += ds.meteo[i][c];
  }
  if (n == 0) throw DataError("normalization: no training rows");
  for (auto& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!use[i]) continue;
    for (std::size_t c = 0; c < kMeteoColumns; ++c) {
      const double d = ds.meteo[i][c] - s.mean[c];
      s.stddev[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < kMeteoColumns; ++c) {
    s.stddev[c] = std::sqrt(s.stddev[c] / static_cast<double>(n));
    if (!(s.stddev[c] > 0.0)) throw DataError(std::string("normalization: column ") + kColumnNames[c] + " has zero variance on the training split");
  }
  return s;
}

double normalize_value(const NormStats& s, std::size_t c, double v) { return (v - s.mean[c]) / s.stddev[c]; }
double denormalize_value(const NormStats& s, std::size_t c, double z) { return z * s.stddev[c] + s.mean[c]; }

std::vector<double> normalize_rows(const NormStats& s, const Dataset& ds) {
  std::vector<double> out(ds.size() * kMeteoColumns);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t c = 0; c < kMeteoColumns; ++c) out[i * kMeteoColumns + c] = normalize_value(s, c, ds.meteo[i][c]);
  }
  return out;
}

}  // namespace m3s::data
