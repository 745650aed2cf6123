#include "stflow/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "stflow/binary_io.hpp"
#include "stflow/csv.hpp"
#include "stflow/error.hpp"

namespace stflow::ingest {

namespace {

enum Column : std::size_t {
  kStartedAt,
  kEndedAt,
  kStartStationId,
  kEndStationId,
  kStartLat,
  kStartLng,
  kEndLat,
  kEndLng,
  kStartStationName,
  kEndStationName,
  kColumnCount,
};

constexpr std::array<const char*, kColumnCount> kColumnNames = {
    "started_at", "ended_at", "start_station_id", "end_station_id", "start_lat",
    "start_lng",  "end_lat",  "end_lng",          "start_station_name", "end_station_name"};

constexpr std::size_t kRequiredColumns = kStartStationName;
constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool parse_coordinate(std::string_view text, double limit, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return false;
  return std::isfinite(out) && out >= -limit && out <= limit;
}

}  // namespace

std::vector<TripRecord> parse_trips(std::istream& in, IngestReport& report) {
  std::string line;
  std::vector<std::string> fields;
  if (!in || !std::getline(in, line)) throw IngestError("missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  csv::split_line(line, fields);

  std::array<std::size_t, kColumnCount> col;
  col.fill(kAbsent);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto name = trim(fields[i]);
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      if (name == kColumnNames[c]) col[c] = i;
    }
  }
  for (std::size_t c = 0; c < kRequiredColumns; ++c) {
    if (col[c] == kAbsent) {
      throw IngestError(std::string("header lacks column '") + kColumnNames[c] + "'");
    }
  }
  const std::size_t width = fields.size();

  std::vector<TripRecord> trips;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++report.rows_read;
    if (!csv::split_line(line, fields) || fields.size() != width) {
      ++report.rows_dropped_malformed;
      continue;
    }
    TripRecord rec;
    rec.start_station_id = std::string(trim(fields[col[kStartStationId]]));
    rec.end_station_id = std::string(trim(fields[col[kEndStationId]]));
    if (rec.start_station_id.empty() || rec.end_station_id.empty()) {
      ++report.rows_dropped_missing_station;
      continue;
    }
    const auto started = parse_timestamp(fields[col[kStartedAt]]);
    const auto ended = parse_timestamp(fields[col[kEndedAt]]);
    if (!started || !ended || !parse_coordinate(fields[col[kStartLat]], 90.0, rec.start_lat) ||
        !parse_coordinate(fields[col[kStartLng]], 180.0, rec.start_lng) ||
        !parse_coordinate(fields[col[kEndLat]], 90.0, rec.end_lat) ||
        !parse_coordinate(fields[col[kEndLng]], 180.0, rec.end_lng)) {
      ++report.rows_dropped_malformed;
      continue;
    }
    if (*ended < *started) {
      ++report.rows_dropped_negative_duration;
      continue;
    }
    rec.started_at = *started;
    rec.ended_at = *ended;
    if (col[kStartStationName] != kAbsent) rec.start_station_name = fields[col[kStartStationName]];
    if (col[kEndStationName] != kAbsent) rec.end_station_name = fields[col[kEndStationName]];
    trips.push_back(std::move(rec));
    ++report.rows_kept;
  }
  if (in.bad()) throw IngestError("read error");
  return trips;
}

std::vector<TripRecord> parse_trips(const std::filesystem::path& path, IngestReport& report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  return parse_trips(in, report);
}

StationRegistry::StationRegistry(std::vector<Station> stations) : stations_(std::move(stations)) {
  std::sort(stations_.begin(), stations_.end(),
            [](const Station& a, const Station& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < stations_.size(); ++i) {
    stations_[i].index = i;
    if (!by_id_.emplace(stations_[i].id, i).second) {
      throw DataError("duplicate station id '" + stations_[i].id + "'");
    }
  }
}

std::size_t StationRegistry::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? npos : it->second;
}

StationRegistry StationRegistry::subset(std::span<const std::size_t> indices) const {
  std::vector<Station> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(stations_.at(i));
  return StationRegistry(std::move(picked));
}

std::uint64_t StationRegistry::fingerprint() const {
  std::uint64_t h = io::fnv1a64("stflow-registry");
  for (const auto& s : stations_) {
    h = io::fnv1a64(s.id, h);
    h = io::fnv1a64("\n", h);
  }
  return h;
}

StationRegistry build_station_registry(std::span<const TripRecord> trips) {
  struct Accum {
    double lat = 0.0;
    double lng = 0.0;
    std::size_t count = 0;
    std::string name;
  };
  std::map<std::string, Accum, std::less<>> acc;
  auto visit = [&](const std::string& id, const std::string& name, double lat, double lng) {
    auto& a = acc[id];
    if (a.count == 0) a.name = name;
    a.lat += lat;
    a.lng += lng;
    ++a.count;
  };
  for (const auto& t : trips) {
    visit(t.start_station_id, t.start_station_name, t.start_lat, t.start_lng);
    visit(t.end_station_id, t.end_station_name, t.end_lat, t.end_lng);
  }
  if (acc.empty()) throw IngestError("no stations");
  std::vector<Station> stations;
  stations.reserve(acc.size());
  for (auto& [id, a] : acc) {
    const double n = static_cast<double>(a.count);
    stations.push_back({id, std::move(a.name), a.lat / n, a.lng / n, 0});
  }
  return StationRegistry(std::move(stations));
}

std::uint64_t TrafficTensor::total() const {
  return std::accumulate(values.begin(), values.end(), std::uint64_t{0});
}

TrafficTensor TrafficTensor::select_stations(std::span<const std::size_t> station_indices) const {
  TrafficTensor out;
  out.steps = steps;
  out.stations = station_indices.size();
  out.origin = origin;
  out.values.resize(out.steps * out.stations);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < station_indices.size(); ++j) {
      out.values[t * out.stations + j] = at(t, station_indices[j]);
    }
  }
  return out;
}

TrafficTensor aggregate_traffic(std::span<const TripRecord> trips, const StationRegistry& registry,
                                Timestamp range_start, Timestamp range_end) {
  if (!is_bin_aligned(range_start) || !is_bin_aligned(range_end)) {
    throw ParameterError("traffic range must be aligned to 30-minute edges");
  }
  if (range_end <= range_start) throw ParameterError("traffic range is empty");

  TrafficTensor out;
  out.origin = range_start;
  out.steps = static_cast<std::size_t>((range_end - range_start) / kBinSeconds);
  out.stations = registry.size();
  out.values.assign(out.steps * out.stations, 0);

  auto count = [&](Timestamp ts, const std::string& id) {
    const std::size_t n = registry.find(id);
    if (n == StationRegistry::npos) {
      throw DataError("trip references station '" + id + "' absent from the registry");
    }
    if (ts < range_start || ts >= range_end) return;
    ++out.at(static_cast<std::size_t>((ts - range_start) / kBinSeconds), n);
  };
  for (const auto& t : trips) {
    count(t.started_at, t.start_station_id);
    count(t.ended_at, t.end_station_id);
  }
  return out;
}

std::pair<Timestamp, Timestamp> infer_range(std::span<const TripRecord> trips) {
  if (trips.empty()) throw IngestError("no trips to infer a date range from");
  Timestamp lo = trips.front().started_at;
  Timestamp hi = lo;
  for (const auto& t : trips) {
    lo = std::min(lo, t.started_at);
    hi = std::max(hi, t.started_at);
  }
  return {floor_to(lo, kDaySeconds), floor_to(hi, kDaySeconds) + kDaySeconds};
}

std::vector<std::size_t> busiest_stations(const TrafficTensor& traffic, std::size_t k) {
  std::vector<std::uint64_t> totals(traffic.stations, 0);
  for (std::size_t t = 0; t < traffic.steps; ++t) {
    for (std::size_t n = 0; n < traffic.stations; ++n) totals[n] += traffic.at(t, n);
  }
  std::vector<std::size_t> order(traffic.stations);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return totals[a] > totals[b]; });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

Histogram histogram(std::span<const double> values, double bin_width) {
  if (!(bin_width > 0.0)) throw ParameterError("histogram bin width must be positive");
  Histogram h;
  h.bin_width = bin_width;
  for (double v : values) {
    const auto bin = static_cast<std::size_t>(std::max(0.0, std::floor(v / bin_width)));
    if (bin >= h.counts.size()) h.counts.resize(bin + 1, 0);
    ++h.counts[bin];
  }
  return h;
}

StatsBundle traffic_stats(const TrafficTensor& traffic, double histogram_bin_width) {
  StatsBundle s;
  s.step_means.assign(traffic.steps, 0.0);
  s.station_means.assign(traffic.stations, 0.0);
  for (std::size_t t = 0; t < traffic.steps; ++t) {
    double row = 0.0;
    for (std::size_t n = 0; n < traffic.stations; ++n) {
      const double v = traffic.at(t, n);
      row += v;
      s.station_means[n] += v;
    }
    if (traffic.stations > 0) s.step_means[t] = row / static_cast<double>(traffic.stations);
  }
  if (traffic.steps > 0) {
    for (double& m : s.station_means) m /= static_cast<double>(traffic.steps);
  }
  s.station_mean_histogram = histogram(s.station_means, histogram_bin_width);
  return s;
}

ModeSummary summarize_modes(const Histogram& h) {
  ModeSummary out;
  if (h.counts.empty()) return out;
  out.zero_bin_dominant =
      std::all_of(h.counts.begin(), h.counts.end(), [&](auto c) { return c <= h.counts[0]; });
  std::size_t valley = 0;
  while (valley + 1 < h.counts.size() && h.counts[valley + 1] <= h.counts[valley]) ++valley;
  if (valley + 1 >= h.counts.size()) return out;
  auto it = std::max_element(h.counts.begin() + static_cast<std::ptrdiff_t>(valley) + 1, h.counts.end());
  out.secondary_mode = h.center(static_cast<std::size_t>(it - h.counts.begin()));
  return out;
}

}  // namespace stflow::ingest
