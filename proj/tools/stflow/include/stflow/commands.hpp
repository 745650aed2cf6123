#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "stflow/run/config.hpp"
#include "stflow/time.hpp"

namespace stflow::cli {

namespace fs = std::filesystem;

// Every command writes into config.out atomically and leaves a
// manifest_<command>.json recording the config hash, seed and input
// fingerprints. Errors derive from stflow::Error.

/// Raw trip CSV -> traffic.bin, traffic.csv, registry.csv, ingest_report.txt.
void cmd_ingest(const run::RunConfig& config);

/// Ingest dir -> distance.bin, adjacency.bin, propagation.bin.
void cmd_build_graph(const run::RunConfig& config);

/// Ingest dir -> checkpoint.ckpt, history.csv, train_summary.txt.
void cmd_train(const run::RunConfig& config);

/// Checkpoint + ingest dir -> metrics.txt (model and baselines), metrics.csv.
void cmd_evaluate(const run::RunConfig& config, const fs::path& checkpoint);

/// Forecast of the H bins starting at `at`, from the M bins before it.
void cmd_predict(const run::RunConfig& config, const fs::path& checkpoint, Timestamp at);

/// Data behind the traffic, distance and prediction plots. Prediction
/// files are written only when a checkpoint is given.
void cmd_export_plots(const run::RunConfig& config, const std::optional<fs::path>& checkpoint);

/// Parses argv, dispatches, and maps failures to exit codes
/// (0 ok, 1 usage/config, 2 data, 3 numerical).
int run(int argc, char** argv);

}  // namespace stflow::cli
