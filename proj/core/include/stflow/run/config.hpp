#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stflow/autodiff/adam.hpp"
#include "stflow/pipeline.hpp"
#include "stflow/stgcn.hpp"

namespace stflow::run {

/// Every setting a command may read. Defaults are the documented values.
struct RunConfig {
  // data
  std::string input;     // raw trip CSV (ingest)
  std::string data_dir;  // ingest artifacts (train, evaluate, predict, export-plots)
  std::string range_start;  // `YYYY-MM-DD[ HH:MM:SS]`; empty infers whole days from the data
  std::string range_end;
  std::size_t top_stations = 0;  // 0 keeps every station

  // graph
  std::optional<double> sigma_sq;  // unset: squared std of off-diagonal distances
  double epsilon = 0.5;

  // model
  std::size_t history_steps = 12;
  std::size_t horizon_steps = 1;
  std::size_t temporal_kernel = 3;
  std::vector<std::size_t> channels{1, 32, 16, 32};
  std::size_t n_blocks = 1;

  // training
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 42;
  std::string precision = "f64";

  // evaluation
  std::size_t test_days = 3;
  std::size_t val_days = 3;
  double hist_bin_width = 0.25;

  std::string out = "out";

  bool operator==(const RunConfig&) const = default;

  stgcn::STGCNConfig model_config(std::size_t n_nodes = 0) const;
  pipeline::TrainOptions train_options() const;
  pipeline::SplitSpec split_spec() const { return {test_days, val_days}; }

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Applies one `key = value` assignment. Unknown keys and unparsable
/// values throw ConfigError.
void set_value(RunConfig& config, std::string_view key, std::string_view value);

/// Flat `key = value` lines, `#` starts a comment. Values are applied on
/// top of `base`.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// Canonical text form listing every key; parse_config(serialize(c)) == c.
std::string serialize(const RunConfig& config);

/// Hash of every setting except the output directory.
std::uint64_t config_hash(const RunConfig& config);

}  // namespace stflow::run
