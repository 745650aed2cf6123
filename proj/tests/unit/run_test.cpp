#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "stflow/error.hpp"
#include "stflow/run/artifacts.hpp"
#include "stflow/run/checkpoint.hpp"
#include "stflow/run/config.hpp"
#include "test_support.hpp"

namespace stflow::run {
namespace {

TEST(Config, DefaultsAreDocumentedValues) {
  RunConfig c;
  EXPECT_EQ(c.history_steps, 12u);
  EXPECT_EQ(c.horizon_steps, 1u);
  EXPECT_EQ(c.temporal_kernel, 3u);
  EXPECT_EQ(c.channels, (std::vector<std::size_t>{1, 32, 16, 32}));
  EXPECT_EQ(c.n_blocks, 1u);
  EXPECT_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.max_epochs, 100u);
  EXPECT_EQ(c.patience, 10u);
  EXPECT_EQ(c.epsilon, 0.5);
  EXPECT_FALSE(c.sigma_sq.has_value());
  EXPECT_EQ(c.test_days, 3u);
  EXPECT_EQ(c.val_days, 3u);
  c.validate();
}

TEST(Config, ParseOverridesAndComments) {
  auto c = parse_config(
      "# comment line\n"
      "lr = 0.01   # trailing comment\n"
      "channels = 1,8,4,8\n"
      "sigma_sq = 2.5\n"
      "range_start = 2021-06-01 00:00:00\n"
      "\n");
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.channels, (std::vector<std::size_t>{1, 8, 4, 8}));
  EXPECT_EQ(c.sigma_sq, 2.5);
  EXPECT_EQ(c.range_start, "2021-06-01 00:00:00");
  auto back = parse_config("sigma_sq = auto\n", c);
  EXPECT_FALSE(back.sigma_sq.has_value());
}

TEST(Config, UnknownKeyIsRejected) {
  EXPECT_THROW(parse_config("learning_rate = 0.1\n"), ConfigError);
  RunConfig c;
  EXPECT_THROW(set_value(c, "bogus", "1"), ConfigError);
  EXPECT_THROW(set_value(c, "batch_size", "many"), ConfigError);
  EXPECT_THROW(parse_config("lr 0.1\n"), ConfigError);
}

TEST(Config, InconsistentValuesAreRejected) {
  RunConfig c;
  c.precision = "f32";
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.history_steps = 4;  // does not survive one block with Kt = 3
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.epsilon = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, SerializeRoundTrips) {
  RunConfig c;
  c.input = "/data/trips, june.csv";
  c.sigma_sq = 0.123456789012345;
  c.lr = 3e-4;
  c.channels = {1, 16, 8, 16};
  c.seed = 123456789012345ULL;
  c.top_stations = 200;
  c.range_end = "2021-07-01";
  auto text = serialize(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(serialize(parse_config(text)), text);
  EXPECT_EQ(parse_config(serialize(RunConfig{})), RunConfig{});
  EXPECT_NE(config_hash(c), config_hash(RunConfig{}));
  RunConfig moved = c;
  moved.out = "elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(c));
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config.history_steps = 5;
  c.config.temporal_kernel = 2;
  c.config.c_t1 = 2;
  c.config.c_s = 2;
  c.config.c_t2 = 2;
  c.config.n_nodes = 3;
  c.normalizer = {1.25, 0.1 + 0.2};
  c.station_fingerprint = 0xfeedfacecafebeefULL;
  c.top_stations = 3;
  c.sigma_sq = 1.0 / 3.0;
  c.epsilon = 0.5;
  c.split = {2, 1};
  for (std::size_t i = 0; i < stgcn::parameter_count(c.config); ++i) c.parameters.push_back(std::sin(double(i)));
  return c;
}

TEST(Checkpoint, RoundTripIsExact) {
  auto c = sample_checkpoint();
  std::stringstream ss;
  write_checkpoint(ss, c);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.rfind("STFLOW-CKPT v1\n", 0), 0u);
  auto back = read_checkpoint(ss);
  EXPECT_TRUE(back == c);
  std::stringstream again;
  write_checkpoint(again, back);
  EXPECT_EQ(again.str(), bytes);
}

TEST(Checkpoint, VersionMismatchIsNamed) {
  auto c = sample_checkpoint();
  std::stringstream ss;
  write_checkpoint(ss, c);
  std::string bytes = ss.str();
  bytes.replace(0, 14, "STFLOW-CKPT v2");
  std::istringstream v2(bytes);
  EXPECT_THROW(read_checkpoint(v2), FormatVersionError);
  std::istringstream junk("hello\n");
  EXPECT_THROW(read_checkpoint(junk), FormatVersionError);
}

TEST(Checkpoint, TruncatedOrPaddedPayloadIsDataError) {
  std::stringstream ss;
  write_checkpoint(ss, sample_checkpoint());
  std::string bytes = ss.str();
  std::istringstream cut(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(cut), DataError);
  std::istringstream padded(bytes + "x");
  EXPECT_THROW(read_checkpoint(padded), DataError);
}

TEST(Checkpoint, FingerprintMismatchIsRefused) {
  auto c = sample_checkpoint();
  EXPECT_NO_THROW(require_fingerprint(c, c.station_fingerprint));
  EXPECT_THROW(require_fingerprint(c, c.station_fingerprint ^ 1), FingerprintMismatchError);
}

TEST(Checkpoint, FileSaveAndLoad) {
  stflow::testing::TempDir dir("ckpt");
  auto c = sample_checkpoint();
  save_checkpoint(dir / "nested/model.ckpt", c);
  EXPECT_TRUE(load_checkpoint(dir / "nested/model.ckpt") == c);
  EXPECT_FALSE(std::filesystem::exists(dir / "nested/model.ckpt.tmp"));
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DataError);
}

TEST(Artifacts, TrafficBinaryRoundTrip) {
  auto t = stflow::testing::make_tensor(3, 2, stflow::testing::ts("2021-06-01"));
  t.values = {0, 1, 2, 3, 4, 4000000000u};
  std::stringstream ss;
  write_traffic_binary(ss, t);
  auto back = read_traffic_binary(ss);
  EXPECT_EQ(back.steps, 3u);
  EXPECT_EQ(back.stations, 2u);
  EXPECT_EQ(back.origin, t.origin);
  EXPECT_EQ(back.values, t.values);
  std::istringstream wrong("STFLOW-TRAFFIC v9 T=1 N=1 origin=0 bin=1800\n");
  EXPECT_THROW(read_traffic_binary(wrong), FormatVersionError);
}

TEST(Artifacts, RegistryCsvRoundTrip) {
  std::vector<ingest::Station> s{{"b", "Quoted, \"name\"", 40.5, -73.25, 0}, {"a", "plain", 40.125, -74.0, 0}};
  ingest::StationRegistry reg(s);
  std::stringstream ss;
  write_registry_csv(ss, reg);
  auto back = read_registry_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].name, "Quoted, \"name\"");
  EXPECT_EQ(back[0].latitude, 40.125);
  EXPECT_EQ(back.fingerprint(), reg.fingerprint());
}

TEST(Artifacts, MatrixBinaryRoundTrip) {
  graph::SquareMatrix m(2);
  m.data = {1.0, 1.0 / 3.0, -2.5, 1e-300};
  std::stringstream ss;
  write_matrix_binary(ss, m);
  auto back = read_matrix_binary(ss);
  EXPECT_EQ(back.n, 2u);
  EXPECT_EQ(back.data, m.data);
}

}  // namespace
}  // namespace stflow::run
