#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stflow/pipeline.hpp"
#include "stflow/stgcn.hpp"

namespace stflow::run {

inline constexpr int kCheckpointVersion = 1;

/// Trained model bound to the station ordering it was fit on.
///
/// On disk: the line `STFLOW-CKPT v1`, one JSON metadata line, then the
/// parameters as little-endian float64 in stgcn::ModelParams::flat() order.
struct Checkpoint {
  int version = kCheckpointVersion;
  stgcn::STGCNConfig config;
  pipeline::Normalizer normalizer;
  std::uint64_t station_fingerprint = 0;
  std::size_t top_stations = 0;
  double sigma_sq = 0.0;  // resolved kernel bandwidth used in training
  double epsilon = 0.0;
  pipeline::SplitSpec split;
  std::vector<double> parameters;

  bool operator==(const Checkpoint& other) const;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
/// Throws FormatVersionError for unknown headers or versions and DataError
/// for truncated payloads.
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws FingerprintMismatchError unless `fingerprint` matches.
void require_fingerprint(const Checkpoint& ckpt, std::uint64_t fingerprint);

}  // namespace stflow::run
