// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m3s/data/image.hpp"

namespace m3s::data {

inline constexpr std::size_t kMeteoColumns = 8;
inline constexpr std::array<const char*, kMeteoColumns> kColumnNames{"ghi", "dni", "dhi", "ws", "wd", "t", "rh", "p"};
inline constexpr const char* kSeriesHeader = "timestamp,ghi,dni,dhi,ws,wd,t,rh,p";
/// Minutes between consecutive rows.
inline constexpr std::int64_t kIntervalMinutes = 10;

using MeteoRow = std::array<double, kMeteoColumns>;

/// "YYYYMMDDHHMM" <-> minutes since 1970-01-01 00:00. Throws DataError.
std::int64_t parse_timestamp(const std::string& ts);
std::string format_timestamp(std::int64_t minutes);

/// Throws DataError naming the violated invariant.
void validate_row(const MeteoRow& row);

struct Dataset {
  std::vector<std::string> timestamps;
  std::vector<std::int64_t> minutes;
  std::vector<MeteoRow> meteo;
  std::vector<Image> images;
  std::vector<Mask> masks;  // empty, or one per row
  std::size_t dropped_rows = 0;

  std::size_t size() const { return meteo.size(); }
  bool has_masks() const { return !masks.empty(); }
};

struct LoadOptions {
  bool require_masks = false;
};

/// Reads root/series.csv and root/images/<timestamp>.png (masks/<timestamp>.png
/// when present). Rows without an image are dropped and counted.
Dataset load_dataset(const std::filesystem::path& root, const LoadOptions& opt = {});
/// Writes the layout read by load_dataset (no manifest).
void write_dataset(const std::filesystem::path& root, const Dataset& ds);

/// Window start rows: each window covers `length` consecutive rows one
/// interval apart, all with allowed[row] set. An empty `allowed` allows all.
std::vector<std::size_t> cut_windows(const Dataset& ds, std::size_t length, std::size_t stride,
                                     const std::vector<bool>& allowed = {});

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle of 0..n-1 cut at round(0.7n) and round(0.1n); n < 10 is a
/// ConfigError.
Split split_731(std::size_t n, std::uint64_t seed);

/// Assigns whole calendar days to train/val/test with split_731 over days.
/// Returns per-row split index 0/1/2.
std::vector<int> split_rows_by_day(const Dataset& ds, std::uint64_t seed);

struct NormStats {
  MeteoRow mean{};
  MeteoRow stddev{};
};

/// Population mean and standard deviation over rows with use[row] set.
/// Throws DataError on a zero-variance column.
NormStats fit_normalization(const Dataset& ds, const std::vector<bool>& use);
double normalize_value(const NormStats& s, std::size_t column, double v);
double denormalize_value(const NormStats& s, std::size_t column, double z);
/// Row-major [rows, kMeteoColumns] z-scores of every row.
std::vector<double> normalize_rows(const NormStats& s, const Dataset& ds);

}  // namespace m3s::data
