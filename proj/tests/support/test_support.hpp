#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "stflow/ingest.hpp"
#include "stflow/time.hpp"

namespace stflow::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(STFLOW_FIXTURE_DIR) / name;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("stflow_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Timestamp ts(const std::string& text) { return *parse_timestamp(text); }

inline ingest::TrafficTensor make_tensor(std::size_t steps, std::size_t stations, Timestamp origin) {
  ingest::TrafficTensor t;
  t.steps = steps;
  t.stations = stations;
  t.origin = origin;
  t.values.assign(steps * stations, 0);
  return t;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace stflow::testing
