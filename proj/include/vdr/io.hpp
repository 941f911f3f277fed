#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "vdr/collect.hpp"
#include "vdr/core.hpp"
#include "vdr/denoise.hpp"
#include "vdr/query.hpp"

namespace vdr::io {

inline constexpr std::uint32_t kHistogramVersion = 1;
inline constexpr std::uint32_t kModelVersion = 1;

// Points CSV: user_id,lat,lon,t_unix with an optional header line.
Dataset read_points_csv(std::istream& in);
Dataset read_points_csv(const std::filesystem::path& path);
/// Shortest round-trip decimal form, so write -> read is bit-exact.
void write_points_csv(std::ostream& out, const Dataset& dataset);
void write_points_csv(const std::filesystem::path& path, const Dataset& dataset);

// Histogram: "VDRH", u32 version, u32 M, u32 M, u32 T, u32 reserved (0),
// 6 f64 bounds, counts. Header 24 bytes + 48 bytes of bounds.
std::vector<std::uint8_t> encode_histogram(const Histogram3D& hist);
Histogram3D decode_histogram(const std::vector<std::uint8_t>& bytes);
void write_histogram(const std::filesystem::path& path, const Histogram3D& hist);
Histogram3D read_histogram(const std::filesystem::path& path);

// Model: "VDRM", u32 version, architecture and per-layer shapes, then every
// weight and bias, the codebook with its EMA state, and input_scale.
std::vector<std::uint8_t> encode_model(const ModelParams& model);
ModelParams decode_model(const std::vector<std::uint8_t>& bytes);
void write_model(const std::filesystem::path& path, const ModelParams& model);
ModelParams read_model(const std::filesystem::path& path);

// Workload: one query per line, rcq / hot / fc records.
using WorkloadQuery = std::variant<RangeQuery, HotspotQuery, ForecastQuery>;
std::vector<WorkloadQuery> read_workload(std::istream& in);
std::vector<WorkloadQuery> read_workload(const std::filesystem::path& path);
void write_workload(std::ostream& out, const std::vector<WorkloadQuery>& queries);
void write_workload(const std::filesystem::path& path, const std::vector<WorkloadQuery>& queries);

// Metrics table: query_id,metric,value.
struct MetricRow {
  std::string query_id;
  std::string metric;
  double value = 0.0;
};
void write_metrics(std::ostream& out, const std::vector<MetricRow>& rows);
void write_metrics(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

// Ledger: label,epsilon lines after a header.
void write_ledger(std::ostream& out, const PrivacyLedger& ledger);
void write_ledger(const std::filesystem::path& path, const PrivacyLedger& ledger);
PrivacyLedger read_ledger(const std::filesystem::path& path);

/// Flat key = value file; '#' starts a comment. Later keys override earlier.
std::map<std::string, std::string> read_config(const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);
/// Whole-string double parse; throws ParseError naming `what`.
double parse_double(std::string_view text, const std::string& what);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace vdr::io
