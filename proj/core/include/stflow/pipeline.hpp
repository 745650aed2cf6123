#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stflow/autodiff/adam.hpp"
#include "stflow/ingest.hpp"
#include "stflow/stgcn.hpp"

namespace stflow::pipeline {

using ad::Tensor;

/// Supervised windows over a traffic tensor. Sample k uses bins [k, k+M) as
/// history and [k+M, k+M+H) as target.
class WindowedDataset {
 public:
  /// Throws DataError("series too short") when T < M + H.
  WindowedDataset(const ingest::TrafficTensor& traffic, std::size_t history, std::size_t horizon);

  std::size_t size() const { return steps_ - history_ - horizon_ + 1; }
  std::size_t history() const { return history_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t stations() const { return stations_; }
  std::size_t steps() const { return steps_; }
  Timestamp origin() const { return origin_; }

  /// Timestamp of the first target bin of sample k.
  Timestamp target_time(std::size_t k) const;
  Timestamp bin_time(std::size_t t) const { return origin_ + static_cast<Timestamp>(t) * kBinSeconds; }
  /// Raw count at bin t, station n.
  double value(std::size_t t, std::size_t n) const { return series_[t * stations_ + n]; }

  /// History of sample k as [M][N] values and target as [H][N] values.
  std::span<const double> history_slice(std::size_t k) const;
  std::span<const double> target_slice(std::size_t k) const;

 private:
  std::vector<double> series_;
  std::size_t steps_ = 0;
  std::size_t stations_ = 0;
  std::size_t history_ = 0;
  std::size_t horizon_ = 0;
  Timestamp origin_ = 0;
};

WindowedDataset make_windows(const ingest::TrafficTensor& traffic, std::size_t history,
                             std::size_t horizon);

struct SplitSpec {
  std::size_t test_days = 3;
  std::size_t val_days = 3;
};

/// Sample indices, chronological.
struct DatasetSplits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  Timestamp val_start = 0;
  Timestamp test_start = 0;
};

/// Test holds the samples whose target falls in the last `test_days`
/// calendar days of the series; validation the `val_days` before that.
/// Throws DataError when any split comes out empty.
DatasetSplits split_by_time(const WindowedDataset& dataset, const SplitSpec& spec = {});

struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  double apply(double x) const { return (x - mean) / std; }
  double invert(double z) const { return z * std + mean; }
};

/// Z-score statistics over every bin touched by a training history window.
/// A constant training series falls back to std = 1.
Normalizer fit_normalizer(const WindowedDataset& dataset, std::span<const std::size_t> train);

/// Model inputs [B, M, N, 1] and targets [B, H, N], normalized.
std::pair<Tensor, Tensor> make_batch(const WindowedDataset& dataset,
                                     std::span<const std::size_t> samples, const Normalizer& norm);

/// Added to |truth| in the raw MAPE denominator.
inline constexpr double kRawMapeFloor = 1e-5;

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape_masked = 0.0;  // percent, over cells with truth >= 1
  double mape_raw = 0.0;     // percent, all cells; unreliable on zero-heavy truth
  bool mape_raw_unreliable = true;
  std::size_t cells = 0;
  std::size_t masked_cells = 0;
};

/// Metrics over paired cells. Predictions are used as given.
MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> truth);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool is_best = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

struct TrainOptions {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  ad::AdamOptions adam;
  std::uint64_t seed = 42;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  stgcn::ModelParams best;
  TrainHistory history;
};

/// Mini-batch MSE training with Adam and early stopping on validation loss.
/// lr = 0 freezes the parameters. Throws NumericalError on a non-finite
/// batch loss, naming epoch, batch and value.
TrainResult train(const stgcn::STGCNConfig& config, const stgcn::ModelParams& initial,
                  const Tensor& propagation, const WindowedDataset& dataset,
                  const DatasetSplits& splits, const Normalizer& norm,
                  const TrainOptions& options);

/// Mean MSE in normalized units over `samples`.
double evaluate_loss(const stgcn::STGCNConfig& config, const stgcn::ModelParams& params,
                     const Tensor& propagation, const WindowedDataset& dataset,
                     std::span<const std::size_t> samples, const Normalizer& norm,
                     std::size_t batch_size = 32);

/// Raw (unclipped) predictions in count units, laid out [sample][h][n].
std::vector<double> predict(const stgcn::STGCNConfig& config, const stgcn::ModelParams& params,
                            const Tensor& propagation, const WindowedDataset& dataset,
                            std::span<const std::size_t> samples, const Normalizer& norm,
                            std::size_t batch_size = 32);

/// Targets of `samples` in count units, laid out like predict().
std::vector<double> gather_truth(const WindowedDataset& dataset, std::span<const std::size_t> samples);

/// Predictions clipped at zero, scored against the test targets.
MetricsReport evaluate(const stgcn::STGCNConfig& config, const stgcn::ModelParams& params,
                       const Tensor& propagation, const WindowedDataset& dataset,
                       std::span<const std::size_t> test, const Normalizer& norm);

/// Every horizon step predicts the last history bin.
MetricsReport baseline_persistence(const WindowedDataset& dataset, std::span<const std::size_t> test);

/// Predicts the mean of the training-period bins sharing the target's
/// station and time of day. Training period: bins before `train_end`.
MetricsReport baseline_historical_average(const WindowedDataset& dataset, Timestamp train_end,
                                          std::span<const std::size_t> test);

struct PredictionRow {
  Timestamp bin_timestamp = 0;
  std::size_t station = 0;
  double y_true = 0.0;
  double y_pred = 0.0;  // clipped at zero
};

/// Detail table plus the aggregate series behind the prediction plots.
struct PredictionExport {
  std::vector<PredictionRow> rows;
  std::vector<Timestamp> step_times;
  std::vector<double> step_mean_true;  // per bin, mean over stations
  std::vector<double> step_mean_pred;
  std::vector<double> station_mean_true;  // per station, mean over the window
  std::vector<double> station_mean_pred;
  ingest::Histogram station_hist_true;
  ingest::Histogram station_hist_pred;
};

/// Builds the export from raw predictions laid out like predict(). Each
/// (bin, station) pair appears once per covering (sample, h).
PredictionExport export_predictions(const WindowedDataset& dataset,
                                    std::span<const std::size_t> samples,
                                    std::span<const double> raw_predictions,
                                    double histogram_bin_width = 0.25);

/// Recomputes the aggregate series from detail rows alone (same order of
/// summation as export_predictions).
PredictionExport aggregate_rows(std::vector<PredictionRow> rows, std::size_t stations,
                                double histogram_bin_width = 0.25);

void write_history_csv(std::ostream& os, const TrainHistory& history);
void write_metrics_text(std::ostream& os, const MetricsReport& m, const std::string& prefix = "");
void write_metrics_csv(std::ostream& os, const MetricsReport& m);
void write_predictions_csv(std::ostream& os, const PredictionExport& e,
                           std::span<const std::string> station_ids);
void write_step_series_csv(std::ostream& os, const PredictionExport& e);
void write_station_series_csv(std::ostream& os, const PredictionExport& e,
                              std::span<const std::string> station_ids);
void write_station_histogram_csv(std::ostream& os, const PredictionExport& e);

}  // namespace stflow::pipeline
