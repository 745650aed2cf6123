#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "stflow/graph.hpp"
#include "stflow/ingest.hpp"

namespace stflow::run {

namespace fs = std::filesystem;

// Traffic tensor: header line
//   STFLOW-TRAFFIC v1 T=<T> N=<N> origin=<unix-seconds> bin=1800
// then T*N little-endian uint32 counts, time-major.
void write_traffic_binary(std::ostream& os, const ingest::TrafficTensor& traffic);
ingest::TrafficTensor read_traffic_binary(std::istream& is);

// Lossless CSV alternative: `bin_timestamp,<station ids...>` header then one
// row per bin.
void write_traffic_csv(std::ostream& os, const ingest::TrafficTensor& traffic,
                       const ingest::StationRegistry& registry);

// `station_id,name,latitude,longitude,index`
void write_registry_csv(std::ostream& os, const ingest::StationRegistry& registry);
ingest::StationRegistry read_registry_csv(std::istream& is);

void write_ingest_report(std::ostream& os, const ingest::IngestReport& report);

// Square matrix: header line `STFLOW-MATRIX v1 N=<N>` then N*N
// little-endian float64, row-major.
void write_matrix_binary(std::ostream& os, const graph::SquareMatrix& m);
graph::SquareMatrix read_matrix_binary(std::istream& is);

// Wide CSV for heatmaps: header `station_id,<ids...>`, then one row per station.
void write_matrix_csv(std::ostream& os, const graph::SquareMatrix& m,
                      const ingest::StationRegistry& registry);

// File names inside an ingest output directory.
inline constexpr const char* kTrafficFile = "traffic.bin";
inline constexpr const char* kTrafficCsvFile = "traffic.csv";
inline constexpr const char* kRegistryFile = "registry.csv";
inline constexpr const char* kIngestReportFile = "ingest_report.txt";
inline constexpr const char* kDistanceFile = "distance.bin";
inline constexpr const char* kAdjacencyFile = "adjacency.bin";
inline constexpr const char* kPropagationFile = "propagation.bin";

struct IngestArtifacts {
  ingest::StationRegistry registry;
  ingest::TrafficTensor traffic;
};

/// Loads traffic.bin and registry.csv from `dir`, checking they agree on N.
IngestArtifacts load_ingest_artifacts(const fs::path& dir);

}  // namespace stflow::run
