#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stflow/time.hpp"

namespace stflow::ingest {

/// One cleaned ride.
struct TripRecord {
  Timestamp started_at = 0;
  Timestamp ended_at = 0;
  std::string start_station_id;
  std::string end_station_id;
  std::string start_station_name;
  std::string end_station_name;
  double start_lat = 0.0;
  double start_lng = 0.0;
  double end_lat = 0.0;
  double end_lng = 0.0;
};

struct IngestReport {
  std::uint64_t rows_read = 0;
  std::uint64_t rows_kept = 0;
  std::uint64_t rows_dropped_malformed = 0;
  std::uint64_t rows_dropped_missing_station = 0;
  std::uint64_t rows_dropped_negative_duration = 0;

  std::uint64_t rows_dropped() const {
    return rows_dropped_malformed + rows_dropped_missing_station + rows_dropped_negative_duration;
  }
  bool balanced() const { return rows_read == rows_kept + rows_dropped(); }
};

/// Reads a trip CSV with a header row. Rows are classified in this order:
/// wrong field count -> malformed; empty station id -> missing station;
/// unparsable timestamp or coordinate -> malformed; ended_at < started_at ->
/// negative duration. Throws IngestError when the header is missing a
/// required column or the stream is unreadable.
std::vector<TripRecord> parse_trips(std::istream& in, IngestReport& report);
std::vector<TripRecord> parse_trips(const std::filesystem::path& path, IngestReport& report);

struct Station {
  std::string id;
  std::string name;
  double latitude = 0.0;
  double longitude = 0.0;
  std::size_t index = 0;
};

/// Stations indexed 0..N-1 in lexicographic id order.
class StationRegistry {
 public:
  StationRegistry() = default;
  explicit StationRegistry(std::vector<Station> stations);

  std::size_t size() const { return stations_.size(); }
  bool empty() const { return stations_.empty(); }
  const Station& operator[](std::size_t i) const { return stations_[i]; }
  std::span<const Station> stations() const { return stations_; }

  /// Index of `id`, or npos when absent.
  std::size_t find(const std::string& id) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Registry restricted to `indices` (any order), re-indexed lexicographically.
  StationRegistry subset(std::span<const std::size_t> indices) const;

  /// Hash of the ordered id list. Binds checkpoints to a node ordering.
  std::uint64_t fingerprint() const;

 private:
  std::vector<Station> stations_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// One station per distinct start or end id; coordinates are the mean over
/// every occurrence in either role. Throws IngestError("no stations") on
/// empty input.
StationRegistry build_station_registry(std::span<const TripRecord> trips);

/// [T x N] counts of departures plus arrivals per 30-minute bin.
struct TrafficTensor {
  std::size_t steps = 0;     // T
  std::size_t stations = 0;  // N
  Timestamp origin = 0;      // left edge of bin 0
  std::vector<std::uint32_t> values;  // time-major

  std::uint32_t at(std::size_t t, std::size_t n) const { return values[t * stations + n]; }
  std::uint32_t& at(std::size_t t, std::size_t n) { return values[t * stations + n]; }
  Timestamp bin_start(std::size_t t) const {
    return origin + static_cast<Timestamp>(t) * kBinSeconds;
  }
  std::uint64_t total() const;

  /// Columns restricted to `station_indices` (kept in the given order).
  TrafficTensor select_stations(std::span<const std::size_t> station_indices) const;
};

/// Bins are half-open [edge, edge + 1800). Endpoint events outside
/// [range_start, range_end) are dropped individually. Throws ParameterError
/// on unaligned or empty ranges and DataError when a trip names a station
/// missing from the registry.
TrafficTensor aggregate_traffic(std::span<const TripRecord> trips, const StationRegistry& registry,
                                Timestamp range_start, Timestamp range_end);

/// Whole-day range covering every kept trip's start time: midnight of the
/// earliest start to the midnight after the latest start.
std::pair<Timestamp, Timestamp> infer_range(std::span<const TripRecord> trips);

/// Indices of the `k` stations with the largest total traffic (ties broken by
/// lower index), returned in ascending index order.
std::vector<std::size_t> busiest_stations(const TrafficTensor& traffic, std::size_t k);

struct Histogram {
  double bin_width = 0.0;
  std::vector<std::uint64_t> counts;  // bin i covers [i*w, (i+1)*w)

  double center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * bin_width; }
};

Histogram histogram(std::span<const double> values, double bin_width);

struct StatsBundle {
  std::vector<double> step_means;     // per time step, mean over stations
  std::vector<double> station_means;  // per station, mean over time
  Histogram station_mean_histogram;
};

StatsBundle traffic_stats(const TrafficTensor& traffic, double histogram_bin_width = 0.25);

/// Mode structure of a per-station mean histogram. The secondary mode is the
/// tallest bin after the first local minimum that follows bin 0.
struct ModeSummary {
  bool zero_bin_dominant = false;
  std::optional<double> secondary_mode;
};
ModeSummary summarize_modes(const Histogram& h);

}  // namespace stflow::ingest
