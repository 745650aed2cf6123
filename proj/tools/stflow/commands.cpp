#include "stflow/commands.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "stflow/binary_io.hpp"
#include "stflow/csv.hpp"
#include "stflow/error.hpp"
#include "stflow/graph.hpp"
#include "stflow/ingest.hpp"
#include "stflow/pipeline.hpp"
#include "stflow/run/artifacts.hpp"
#include "stflow/run/checkpoint.hpp"
#include "stflow/stgcn.hpp"

namespace stflow::cli {

namespace {

using nlohmann::ordered_json;

constexpr const char* kCheckpointFile = "checkpoint.ckpt";

void write_manifest(const run::RunConfig& config, const std::string& command,
                    const std::vector<fs::path>& inputs) {
  ordered_json j;
  j["command"] = command;
  j["config_hash"] = io::hex64(run::config_hash(config));
  j["seed"] = config.seed;
  ordered_json in = ordered_json::array();
  for (const auto& p : inputs) {
    in.push_back({{"path", p.generic_string()}, {"fingerprint", io::hex64(io::file_fingerprint(p))}});
  }
  j["inputs"] = in;
  io::write_text_atomic(fs::path(config.out) / ("manifest_" + command + ".json"), j.dump(2) + "\n");
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fill) {
  io::write_atomic(path, [&](std::ostream& os) { fill(os); });
}

fs::path require_data_dir(const run::RunConfig& config) {
  if (config.data_dir.empty()) throw ConfigError("data_dir is required (--data)");
  return config.data_dir;
}

std::vector<fs::path> ingest_inputs(const fs::path& dir) {
  return {dir / run::kTrafficFile, dir / run::kRegistryFile};
}

/// Ingest artifacts restricted to the busiest stations plus the graph built
/// over them.
struct PreparedData {
  ingest::StationRegistry registry;
  ingest::TrafficTensor traffic;
  graph::DistanceMatrix distances;
  double sigma_sq = 0.0;
  double epsilon = 0.0;
  ad::Tensor propagation;
};

PreparedData prepare(const fs::path& data_dir, std::size_t top_stations,
                     std::optional<double> sigma_sq, double epsilon) {
  auto artifacts = run::load_ingest_artifacts(data_dir);
  PreparedData d;
  if (top_stations > 0 && top_stations < artifacts.registry.size()) {
    const auto keep = ingest::busiest_stations(artifacts.traffic, top_stations);
    d.registry = artifacts.registry.subset(keep);
    d.traffic = artifacts.traffic.select_stations(keep);
  } else {
    d.registry = std::move(artifacts.registry);
    d.traffic = std::move(artifacts.traffic);
  }
  d.distances = graph::distance_matrix(d.registry);
  d.sigma_sq = sigma_sq.value_or(graph::default_sigma_sq(d.distances));
  d.epsilon = epsilon;
  const auto p = graph::normalize(graph::gaussian_adjacency(d.distances, d.sigma_sq, d.epsilon));
  d.propagation = ad::Tensor::from_values({p.p.n, p.p.n}, p.p.data);
  return d;
}

PreparedData prepare_for_checkpoint(const fs::path& data_dir, const run::Checkpoint& ckpt) {
  auto d = prepare(data_dir, ckpt.top_stations, ckpt.sigma_sq, ckpt.epsilon);
  run::require_fingerprint(ckpt, d.registry.fingerprint());
  return d;
}

std::vector<std::string> station_ids(const ingest::StationRegistry& registry) {
  std::vector<std::string> ids;
  for (const auto& s : registry.stations()) ids.push_back(s.id);
  return ids;
}

Timestamp require_timestamp(const std::string& text, const char* key) {
  const auto ts = parse_timestamp(text);
  if (!ts) throw ConfigError(std::string("bad timestamp for ") + key + ": '" + text + "'");
  return *ts;
}

}  // namespace

void cmd_ingest(const run::RunConfig& config) {
  if (config.input.empty()) throw ConfigError("input is required (--input)");
  const fs::path out = config.out;
  ingest::IngestReport report;
  const auto trips = ingest::parse_trips(fs::path(config.input), report);
  const auto registry = ingest::build_station_registry(trips);
  auto [start, end] = ingest::infer_range(trips);
  if (!config.range_start.empty()) start = require_timestamp(config.range_start, "range_start");
  if (!config.range_end.empty()) end = require_timestamp(config.range_end, "range_end");
  const auto traffic = ingest::aggregate_traffic(trips, registry, start, end);

  write_file(out / run::kTrafficFile, [&](std::ostream& os) { run::write_traffic_binary(os, traffic); });
  write_file(out / run::kTrafficCsvFile,
             [&](std::ostream& os) { run::write_traffic_csv(os, traffic, registry); });
  write_file(out / run::kRegistryFile, [&](std::ostream& os) { run::write_registry_csv(os, registry); });
  write_file(out / run::kIngestReportFile, [&](std::ostream& os) { run::write_ingest_report(os, report); });
  write_manifest(config, "ingest", {config.input});
  std::cerr << "ingest: " << report.rows_kept << " of " << report.rows_read << " rows kept, "
            << registry.size() << " stations, " << traffic.steps << " bins\n";
}

void cmd_build_graph(const run::RunConfig& config) {
  const auto dir = require_data_dir(config);
  const auto d = prepare(dir, config.top_stations, config.sigma_sq, config.epsilon);
  const auto adjacency = graph::gaussian_adjacency(d.distances, d.sigma_sq, d.epsilon);
  const auto p = graph::normalize(adjacency);
  const fs::path out = config.out;
  write_file(out / run::kDistanceFile, [&](std::ostream& os) { run::write_matrix_binary(os, d.distances.d); });
  write_file(out / run::kAdjacencyFile, [&](std::ostream& os) { run::write_matrix_binary(os, adjacency.w); });
  write_file(out / run::kPropagationFile, [&](std::ostream& os) { run::write_matrix_binary(os, p.p); });
  io::write_text_atomic(out / "graph_params.txt", "sigma_sq = " + csv::format_double(d.sigma_sq) +
                                                      "\nepsilon = " + csv::format_double(d.epsilon) +
                                                      "\nstations = " + std::to_string(d.registry.size()) + "\n");
  write_manifest(config, "build-graph", ingest_inputs(dir));
}

void cmd_train(const run::RunConfig& config) {
  const auto dir = require_data_dir(config);
  const auto d = prepare(dir, config.top_stations, config.sigma_sq, config.epsilon);
  const auto model = config.model_config(d.registry.size());
  const auto dataset = pipeline::make_windows(d.traffic, model.history_steps, model.horizon_steps);
  const auto splits = pipeline::split_by_time(dataset, config.split_spec());
  const auto norm = pipeline::fit_normalizer(dataset, splits.train);
  const auto initial = stgcn::init_params(model, config.seed);

  auto options = config.train_options();
  options.on_epoch = [](const pipeline::EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " train " << csv::format_double(e.train_loss) << " val "
              << csv::format_double(e.val_loss) << (e.is_best ? " *" : "") << '\n';
  };
  const auto result = pipeline::train(model, initial, d.propagation, dataset, splits, norm, options);

  run::Checkpoint ckpt;
  ckpt.config = model;
  ckpt.normalizer = norm;
  ckpt.station_fingerprint = d.registry.fingerprint();
  ckpt.top_stations = config.top_stations;
  ckpt.sigma_sq = d.sigma_sq;
  ckpt.epsilon = d.epsilon;
  ckpt.split = config.split_spec();
  for (const auto& t : result.best.flat()) {
    ckpt.parameters.insert(ckpt.parameters.end(), t.values().begin(), t.values().end());
  }
  const fs::path out = config.out;
  run::save_checkpoint(out / kCheckpointFile, ckpt);
  write_file(out / "history.csv", [&](std::ostream& os) { pipeline::write_history_csv(os, result.history); });

  const auto& h = result.history;
  const auto& last = h.epochs.back();
  const auto& best = h.epochs.at(h.best_epoch - 1);
  std::ostringstream summary;
  summary << "epochs = " << h.epochs.size() << "\nbest_epoch = " << h.best_epoch
          << "\nbest_train_loss = " << csv::format_double(best.train_loss)
          << "\nbest_val_loss = " << csv::format_double(best.val_loss)
          << "\nfinal_train_loss = " << csv::format_double(last.train_loss)
          << "\nfinal_val_loss = " << csv::format_double(last.val_loss)
          << "\nstopped_early = " << (h.stopped_early ? "true" : "false")
          << "\ntest_loss = "
          << csv::format_double(pipeline::evaluate_loss(model, result.best, d.propagation, dataset,
                                                        splits.test, norm))
          << "\n";
  io::write_text_atomic(out / "train_summary.txt", summary.str());
  write_manifest(config, "train", ingest_inputs(dir));
}

void cmd_evaluate(const run::RunConfig& config, const fs::path& checkpoint) {
  const auto dir = require_data_dir(config);
  const auto ckpt = run::load_checkpoint(checkpoint);
  const auto d = prepare_for_checkpoint(dir, ckpt);
  const auto params = stgcn::params_from_flat(ckpt.config, ckpt.parameters);
  const auto dataset =
      pipeline::make_windows(d.traffic, ckpt.config.history_steps, ckpt.config.horizon_steps);
  const auto splits = pipeline::split_by_time(dataset, ckpt.split);
  const auto model = pipeline::evaluate(ckpt.config, params, d.propagation, dataset, splits.test,
                                        ckpt.normalizer);
  const auto persistence = pipeline::baseline_persistence(dataset, splits.test);
  const auto historical = pipeline::baseline_historical_average(dataset, splits.val_start, splits.test);

  const fs::path out = config.out;
  write_file(out / "metrics.txt", [&](std::ostream& os) {
    pipeline::write_metrics_text(os, model);
    pipeline::write_metrics_text(os, persistence, "persistence.");
    pipeline::write_metrics_text(os, historical, "historical_average.");
  });
  write_file(out / "metrics.csv", [&](std::ostream& os) { pipeline::write_metrics_csv(os, model); });
  write_manifest(config, "evaluate", {checkpoint, dir / run::kTrafficFile, dir / run::kRegistryFile});
  std::cerr << "test MAE " << csv::format_double(model.mae) << ", RMSE " << csv::format_double(model.rmse)
            << " (persistence MAE " << csv::format_double(persistence.mae) << ", historical average MAE "
            << csv::format_double(historical.mae) << ")\n";
}

void cmd_predict(const run::RunConfig& config, const fs::path& checkpoint, Timestamp at) {
  const auto dir = require_data_dir(config);
  const auto ckpt = run::load_checkpoint(checkpoint);
  const auto d = prepare_for_checkpoint(dir, ckpt);
  const auto params = stgcn::params_from_flat(ckpt.config, ckpt.parameters);
  const std::size_t m = ckpt.config.history_steps;
  const std::size_t n = d.traffic.stations;
  if (!is_bin_aligned(at)) throw ConfigError("--at must fall on a 30-minute boundary");
  const Timestamp first = at - static_cast<Timestamp>(m) * kBinSeconds;
  const Timestamp data_end = d.traffic.bin_start(d.traffic.steps);
  if (first < d.traffic.origin || at > data_end) {
    throw DataError("forecast at " + format_timestamp(at) + " needs history from " +
                    format_timestamp(first) + ", data covers " + format_timestamp(d.traffic.origin) +
                    " to " + format_timestamp(data_end));
  }
  const auto t0 = static_cast<std::size_t>((first - d.traffic.origin) / kBinSeconds);
  std::vector<double> x(m * n);
  for (std::size_t t = 0; t < m; ++t) {
    for (std::size_t s = 0; s < n; ++s) x[t * n + s] = ckpt.normalizer.apply(d.traffic.at(t0 + t, s));
  }
  const auto pred = stgcn::forward(ad::Tensor::from_values({1, m, n, 1}, std::move(x)), d.propagation,
                                   params.clone(false), ckpt.config);
  const auto ids = station_ids(d.registry);
  write_file(fs::path(config.out) / "forecast.csv", [&](std::ostream& os) {
    os << "bin_timestamp,station_id,y_pred\n";
    const auto v = pred.values();
    for (std::size_t h = 0; h < ckpt.config.horizon_steps; ++h) {
      const auto ts = format_timestamp(at + static_cast<Timestamp>(h) * kBinSeconds);
      for (std::size_t s = 0; s < n; ++s) {
        os << ts << ',' << csv::escape(ids[s]) << ','
           << csv::format_double(std::max(0.0, ckpt.normalizer.invert(v[h * n + s]))) << '\n';
      }
    }
  });
  write_manifest(config, "predict", {checkpoint, dir / run::kTrafficFile, dir / run::kRegistryFile});
}

void cmd_export_plots(const run::RunConfig& config, const std::optional<fs::path>& checkpoint) {
  const auto dir = require_data_dir(config);
  const fs::path out = config.out;
  std::optional<run::Checkpoint> ckpt;
  if (checkpoint) ckpt = run::load_checkpoint(*checkpoint);
  const auto d = ckpt ? prepare_for_checkpoint(dir, *ckpt)
                      : prepare(dir, config.top_stations, config.sigma_sq, config.epsilon);
  const auto ids = station_ids(d.registry);

  const auto stats = ingest::traffic_stats(d.traffic, config.hist_bin_width);
  write_file(out / "fig1_step_means.csv", [&](std::ostream& os) {
    os << "bin_timestamp,mean_traffic\n";
    for (std::size_t t = 0; t < stats.step_means.size(); ++t) {
      os << format_timestamp(d.traffic.bin_start(t)) << ',' << csv::format_double(stats.step_means[t]) << '\n';
    }
  });
  write_file(out / "fig2_station_means.csv", [&](std::ostream& os) {
    os << "station_id,mean_traffic\n";
    for (std::size_t s = 0; s < ids.size(); ++s) {
      os << csv::escape(ids[s]) << ',' << csv::format_double(stats.station_means[s]) << '\n';
    }
  });
  write_file(out / "fig2_station_mean_hist.csv", [&](std::ostream& os) {
    const auto& h = stats.station_mean_histogram;
    os << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      os << csv::format_double(static_cast<double>(i) * h.bin_width) << ','
         << csv::format_double(static_cast<double>(i + 1) * h.bin_width) << ',' << h.counts[i] << '\n';
    }
  });
  write_file(out / "fig4_distance.csv",
             [&](std::ostream& os) { run::write_matrix_csv(os, d.distances.d, d.registry); });

  std::vector<fs::path> inputs = ingest_inputs(dir);
  if (ckpt) {
    const auto params = stgcn::params_from_flat(ckpt->config, ckpt->parameters);
    const auto dataset =
        pipeline::make_windows(d.traffic, ckpt->config.history_steps, ckpt->config.horizon_steps);
    const auto splits = pipeline::split_by_time(dataset, ckpt->split);
    const auto raw = pipeline::predict(ckpt->config, params, d.propagation, dataset, splits.test,
                                       ckpt->normalizer);
    const auto e = pipeline::export_predictions(dataset, splits.test, raw, config.hist_bin_width);
    write_file(out / "predictions.csv", [&](std::ostream& os) { pipeline::write_predictions_csv(os, e, ids); });
    write_file(out / "fig5_step_means.csv", [&](std::ostream& os) { pipeline::write_step_series_csv(os, e); });
    write_file(out / "fig6_station_means.csv",
               [&](std::ostream& os) { pipeline::write_station_series_csv(os, e, ids); });
    write_file(out / "fig6_station_mean_hist.csv",
               [&](std::ostream& os) { pipeline::write_station_histogram_csv(os, e); });
    inputs.push_back(*checkpoint);
  }
  write_manifest(config, "export-plots", inputs);
}

int run(int argc, char** argv) {
  CLI::App app{"stflow: station traffic forecasting with a spatio-temporal graph network"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out, "output directory");
  app.add_option("--set", sets, "override a config key (key=value), repeatable");

  std::optional<std::string> input, data, range_start, range_end, checkpoint, at;
  std::optional<std::size_t> top_stations;
  auto* ingest_cmd = app.add_subcommand("ingest", "aggregate a trip CSV into 30-minute station traffic");
  ingest_cmd->add_option("--input", input, "trip CSV");
  ingest_cmd->add_option("--range-start", range_start, "first bin, YYYY-MM-DD[ HH:MM:SS]");
  ingest_cmd->add_option("--range-end", range_end, "end of range (exclusive)");

  auto* graph_cmd = app.add_subcommand("build-graph", "distance matrix and propagation operator");
  auto* train_cmd = app.add_subcommand("train", "fit the model with early stopping");
  auto* eval_cmd = app.add_subcommand("evaluate", "test-split metrics against baselines");
  auto* predict_cmd = app.add_subcommand("predict", "forecast the bins starting at a timestamp");
  auto* plots_cmd = app.add_subcommand("export-plots", "CSV data behind the plots");
  for (auto* cmd : {graph_cmd, train_cmd, eval_cmd, predict_cmd, plots_cmd}) {
    cmd->add_option("--data", data, "ingest output directory");
  }
  for (auto* cmd : {graph_cmd, train_cmd, plots_cmd}) {
    cmd->add_option("--top-stations", top_stations, "keep only the N busiest stations");
  }
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--at", at, "first forecast bin, YYYY-MM-DD HH:MM:SS")->required();
  plots_cmd->add_option("--checkpoint", checkpoint, "checkpoint for prediction plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(ErrorKind::kUsage);
  }

  try {
    run::RunConfig config;
    if (!config_path.empty()) config = run::load_config(config_path);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      run::set_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) config.seed = *seed;
    if (out) config.out = *out;
    if (input) config.input = *input;
    if (data) config.data_dir = *data;
    if (range_start) config.range_start = *range_start;
    if (range_end) config.range_end = *range_end;
    if (top_stations) config.top_stations = *top_stations;
    config.validate();

    if (ingest_cmd->parsed()) cmd_ingest(config);
    if (graph_cmd->parsed()) cmd_build_graph(config);
    if (train_cmd->parsed()) cmd_train(config);
    if (eval_cmd->parsed()) cmd_evaluate(config, *checkpoint);
    if (predict_cmd->parsed()) cmd_predict(config, *checkpoint, require_timestamp(*at, "--at"));
    if (plots_cmd->parsed()) {
      cmd_export_plots(config, checkpoint ? std::optional<fs::path>(*checkpoint) : std::nullopt);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "stflow: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "stflow: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kData);
  }
}

}  // namespace stflow::cli
