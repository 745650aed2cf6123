#include "stflow/run/artifacts.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "stflow/binary_io.hpp"
#include "stflow/csv.hpp"
#include "stflow/error.hpp"

namespace stflow::run {

namespace {

// Parses `NAME v1 key=value ...`; returns the key=value pairs.
std::vector<std::pair<std::string, std::string>> read_header(std::istream& is, std::string_view magic) {
  std::string line;
  if (!std::getline(is, line)) throw DataError(std::string(magic) + ": empty artifact");
  std::istringstream ss(line);
  std::string name, version;
  ss >> name >> version;
  if (name != magic) throw FormatVersionError("expected " + std::string(magic) + ", found '" + name + "'");
  if (version != "v1") throw FormatVersionError(std::string(magic) + " " + version + " is not supported (v1 only)");
  std::vector<std::pair<std::string, std::string>> kv;
  std::string token;
  while (ss >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw DataError(std::string(magic) + ": bad header token '" + token + "'");
    kv.emplace_back(token.substr(0, eq), token.substr(eq + 1));
  }
  return kv;
}

template <typename T>
T header_value(const std::vector<std::pair<std::string, std::string>>& kv, const std::string& key,
               std::string_view magic) {
  for (const auto& [k, v] : kv) {
    if (k != key) continue;
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) break;
    return out;
  }
  throw DataError(std::string(magic) + ": header lacks a valid '" + key + "'");
}

}  // namespace

void write_traffic_binary(std::ostream& os, const ingest::TrafficTensor& traffic) {
  os << "STFLOW-TRAFFIC v1 T=" << traffic.steps << " N=" << traffic.stations
     << " origin=" << traffic.origin << " bin=" << kBinSeconds << '\n';
  io::write_le<std::uint32_t>(os, traffic.values);
}

ingest::TrafficTensor read_traffic_binary(std::istream& is) {
  constexpr std::string_view kMagic = "STFLOW-TRAFFIC";
  const auto kv = read_header(is, kMagic);
  if (header_value<std::int64_t>(kv, "bin", kMagic) != kBinSeconds) {
    throw FormatVersionError("traffic bin width other than 1800 s");
  }
  ingest::TrafficTensor t;
  t.steps = header_value<std::size_t>(kv, "T", kMagic);
  t.stations = header_value<std::size_t>(kv, "N", kMagic);
  t.origin = header_value<std::int64_t>(kv, "origin", kMagic);
  t.values.resize(t.steps * t.stations);
  if (!io::read_le<std::uint32_t>(is, t.values)) throw DataError("traffic payload truncated");
  return t;
}

void write_traffic_csv(std::ostream& os, const ingest::TrafficTensor& traffic,
                       const ingest::StationRegistry& registry) {
  os << "bin_timestamp";
  for (const auto& s : registry.stations()) os << ',' << csv::escape(s.id);
  os << '\n';
  for (std::size_t t = 0; t < traffic.steps; ++t) {
    os << format_timestamp(traffic.bin_start(t));
    for (std::size_t n = 0; n < traffic.stations; ++n) os << ',' << traffic.at(t, n);
    os << '\n';
  }
}

void write_registry_csv(std::ostream& os, const ingest::StationRegistry& registry) {
  os << "station_id,name,latitude,longitude,index\n";
  for (const auto& s : registry.stations()) {
    os << csv::escape(s.id) << ',' << csv::escape(s.name) << ',' << csv::format_double(s.latitude)
       << ',' << csv::format_double(s.longitude) << ',' << s.index << '\n';
  }
}

ingest::StationRegistry read_registry_csv(std::istream& is) {
  std::string line;
  std::vector<std::string> f;
  if (!std::getline(is, line) || !csv::split_line(line, f) || f.size() != 5 || f[0] != "station_id") {
    throw DataError("registry: missing header");
  }
  std::vector<ingest::Station> stations;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (!csv::split_line(line, f) || f.size() != 5) throw DataError("registry: malformed row '" + line + "'");
    ingest::Station s;
    s.id = f[0];
    s.name = f[1];
    auto parse = [&](const std::string& text, auto& out) {
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
      if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError("registry: bad number '" + text + "'");
      }
    };
    parse(f[2], s.latitude);
    parse(f[3], s.longitude);
    parse(f[4], s.index);
    stations.push_back(std::move(s));
  }
  std::vector<std::string> file_order;
  for (const auto& s : stations) file_order.push_back(s.id);
  std::vector<std::size_t> declared;
  for (const auto& s : stations) declared.push_back(s.index);
  ingest::StationRegistry registry(std::move(stations));
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (declared[i] != i || registry[i].id != file_order[i]) {
      throw DataError("registry: rows not in lexicographic index order");
    }
  }
  return registry;
}

void write_ingest_report(std::ostream& os, const ingest::IngestReport& r) {
  os << "rows_read = " << r.rows_read << '\n'
     << "rows_kept = " << r.rows_kept << '\n'
     << "rows_dropped_malformed = " << r.rows_dropped_malformed << '\n'
     << "rows_dropped_missing_station = " << r.rows_dropped_missing_station << '\n'
     << "rows_dropped_negative_duration = " << r.rows_dropped_negative_duration << '\n';
}

void write_matrix_binary(std::ostream& os, const graph::SquareMatrix& m) {
  os << "STFLOW-MATRIX v1 N=" << m.n << '\n';
  io::write_le<double>(os, m.data);
}

graph::SquareMatrix read_matrix_binary(std::istream& is) {
  constexpr std::string_view kMagic = "STFLOW-MATRIX";
  const auto kv = read_header(is, kMagic);
  graph::SquareMatrix m(header_value<std::size_t>(kv, "N", kMagic));
  if (!io::read_le<double>(is, m.data)) throw DataError("matrix payload truncated");
  return m;
}

void write_matrix_csv(std::ostream& os, const graph::SquareMatrix& m,
                      const ingest::StationRegistry& registry) {
  os << "station_id";
  for (const auto& s : registry.stations()) os << ',' << csv::escape(s.id);
  os << '\n';
  for (std::size_t i = 0; i < m.n; ++i) {
    os << csv::escape(registry[i].id);
    for (double v : m.row(i)) os << ',' << csv::format_double(v);
    os << '\n';
  }
}

IngestArtifacts load_ingest_artifacts(const fs::path& dir) {
  IngestArtifacts a;
  {
    std::ifstream is(dir / kRegistryFile, std::ios::binary);
    if (!is) throw DataError("cannot open " + (dir / kRegistryFile).string());
    a.registry = read_registry_csv(is);
  }
  {
    std::ifstream is(dir / kTrafficFile, std::ios::binary);
    if (!is) throw DataError("cannot open " + (dir / kTrafficFile).string());
    a.traffic = read_traffic_binary(is);
  }
  if (a.traffic.stations != a.registry.size()) {
    throw DataError("traffic has " + std::to_string(a.traffic.stations) + " stations, registry " +
                    std::to_string(a.registry.size()));
  }
  return a;
}

}  // namespace stflow::run
