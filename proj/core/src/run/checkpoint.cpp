#include "stflow/run/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "stflow/binary_io.hpp"
#include "stflow/error.hpp"

namespace stflow::run {

namespace {

constexpr std::string_view kMagic = "STFLOW-CKPT";

nlohmann::ordered_json metadata(const Checkpoint& c) {
  nlohmann::ordered_json j;
  j["format"] = "stflow-checkpoint";
  j["version"] = c.version;
  j["model"] = {{"history_steps", c.config.history_steps},
                {"horizon_steps", c.config.horizon_steps},
                {"temporal_kernel", c.config.temporal_kernel},
                {"channels", {c.config.c_in, c.config.c_t1, c.config.c_s, c.config.c_t2}},
                {"n_blocks", c.config.n_blocks},
                {"n_nodes", c.config.n_nodes}};
  j["normalizer"] = {{"mean", c.normalizer.mean}, {"std", c.normalizer.std}};
  j["station_fingerprint"] = io::hex64(c.station_fingerprint);
  j["top_stations"] = c.top_stations;
  j["graph"] = {{"sigma_sq", c.sigma_sq}, {"epsilon", c.epsilon}};
  j["split"] = {{"test_days", c.split.test_days}, {"val_days", c.split.val_days}};
  j["parameter_count"] = c.parameters.size();
  j["parameter_order"] =
      "per block: temporal1 kernel, temporal1 bias, spatial theta, spatial bias, temporal2 kernel, "
      "temporal2 bias; then output kernel, output bias, fc weight, fc bias; row-major";
  return j;
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  return version == o.version && config == o.config && normalizer.mean == o.normalizer.mean &&
         normalizer.std == o.normalizer.std && station_fingerprint == o.station_fingerprint &&
         top_stations == o.top_stations && sigma_sq == o.sigma_sq && epsilon == o.epsilon &&
         split.test_days == o.split.test_days && split.val_days == o.split.val_days &&
         parameters == o.parameters;
}

void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  os << kMagic << " v" << c.version << '\n' << metadata(c).dump() << '\n';
  io::write_le<double>(os, c.parameters);
}

Checkpoint read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("checkpoint: empty file");
  if (line.rfind(kMagic, 0) != 0) throw FormatVersionError("not a checkpoint (header '" + line + "')");
  if (line != std::string(kMagic) + " v1") {
    throw FormatVersionError("checkpoint header '" + line + "' is not supported (v1 only)");
  }
  if (!std::getline(is, line)) throw DataError("checkpoint: missing metadata line");
  Checkpoint c;
  try {
    const auto j = nlohmann::json::parse(line);
    c.version = j.at("version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw FormatVersionError("checkpoint metadata version " + std::to_string(c.version));
    }
    const auto& m = j.at("model");
    c.config.history_steps = m.at("history_steps").get<std::size_t>();
    c.config.horizon_steps = m.at("horizon_steps").get<std::size_t>();
    c.config.temporal_kernel = m.at("temporal_kernel").get<std::size_t>();
    const auto ch = m.at("channels").get<std::vector<std::size_t>>();
    if (ch.size() != 4) throw DataError("checkpoint: channels needs four entries");
    c.config.c_in = ch[0];
    c.config.c_t1 = ch[1];
    c.config.c_s = ch[2];
    c.config.c_t2 = ch[3];
    c.config.n_blocks = m.at("n_blocks").get<std::size_t>();
    c.config.n_nodes = m.at("n_nodes").get<std::size_t>();
    c.normalizer.mean = j.at("normalizer").at("mean").get<double>();
    c.normalizer.std = j.at("normalizer").at("std").get<double>();
    c.station_fingerprint = std::stoull(j.at("station_fingerprint").get<std::string>(), nullptr, 16);
    c.top_stations = j.at("top_stations").get<std::size_t>();
    c.sigma_sq = j.at("graph").at("sigma_sq").get<double>();
    c.epsilon = j.at("graph").at("epsilon").get<double>();
    c.split.test_days = j.at("split").at("test_days").get<std::size_t>();
    c.split.val_days = j.at("split").at("val_days").get<std::size_t>();
    c.parameters.resize(j.at("parameter_count").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  if (!io::read_le<double>(is, c.parameters)) throw DataError("checkpoint: parameter payload truncated");
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint: trailing bytes after payload");
  if (c.parameters.size() != stgcn::parameter_count(c.config)) {
    throw DataError("checkpoint: payload size does not match the model config");
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  io::write_atomic(path, [&](std::ostream& os) { write_checkpoint(os, c); });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

void require_fingerprint(const Checkpoint& c, std::uint64_t fingerprint) {
  if (c.station_fingerprint != fingerprint) {
    throw FingerprintMismatchError("checkpoint was trained on station order " +
                                   io::hex64(c.station_fingerprint) + ", data has " +
                                   io::hex64(fingerprint));
  }
}

}  // namespace stflow::run
