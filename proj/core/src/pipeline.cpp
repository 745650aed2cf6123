#include "stflow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <random>

#include "stflow/autodiff/ops.hpp"
#include "stflow/csv.hpp"
#include "stflow/error.hpp"

namespace stflow::pipeline {

WindowedDataset::WindowedDataset(const ingest::TrafficTensor& traffic, std::size_t history,
                                 std::size_t horizon)
    : steps_(traffic.steps),
      stations_(traffic.stations),
      history_(history),
      horizon_(horizon),
      origin_(traffic.origin) {
  if (history == 0 || horizon == 0) throw ParameterError("window sizes must be at least 1");
  if (traffic.steps < history + horizon) {
    throw DataError("series too short: " + std::to_string(traffic.steps) + " steps for M=" +
                    std::to_string(history) + ", H=" + std::to_string(horizon));
  }
  series_.assign(traffic.values.begin(), traffic.values.end());
}

Timestamp WindowedDataset::target_time(std::size_t k) const { return bin_time(k + history_); }

std::span<const double> WindowedDataset::history_slice(std::size_t k) const {
  return {series_.data() + k * stations_, history_ * stations_};
}

std::span<const double> WindowedDataset::target_slice(std::size_t k) const {
  return {series_.data() + (k + history_) * stations_, horizon_ * stations_};
}

WindowedDataset make_windows(const ingest::TrafficTensor& traffic, std::size_t history,
                             std::size_t horizon) {
  return WindowedDataset(traffic, history, horizon);
}

DatasetSplits split_by_time(const WindowedDataset& dataset, const SplitSpec& spec) {
  if (spec.test_days == 0 || spec.val_days == 0) throw ParameterError("split day counts must be >= 1");
  const Timestamp last_bin = dataset.bin_time(dataset.steps() - 1);
  const Timestamp last_day = floor_to(last_bin, kDaySeconds);
  DatasetSplits out;
  out.test_start = last_day - static_cast<Timestamp>(spec.test_days - 1) * kDaySeconds;
  out.val_start = out.test_start - static_cast<Timestamp>(spec.val_days) * kDaySeconds;
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    const Timestamp t = dataset.target_time(k);
    if (t >= out.test_start) {
      out.test.push_back(k);
    } else if (t >= out.val_start) {
      out.val.push_back(k);
    } else {
      out.train.push_back(k);
    }
  }
  if (out.train.empty() || out.val.empty() || out.test.empty()) {
    throw DataError("series spans too few days for a " + std::to_string(spec.val_days) + "+" +
                    std::to_string(spec.test_days) + " day holdout (train " +
                    std::to_string(out.train.size()) + ", val " + std::to_string(out.val.size()) +
                    ", test " + std::to_string(out.test.size()) + " samples)");
  }
  return out;
}

Normalizer fit_normalizer(const WindowedDataset& dataset, std::span<const std::size_t> train) {
  if (train.empty()) throw DataError("cannot fit a normalizer on an empty training split");
  std::vector<bool> covered(dataset.steps(), false);
  for (std::size_t k : train) {
    for (std::size_t t = k; t < k + dataset.history(); ++t) covered[t] = true;
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < dataset.steps(); ++t) {
    if (!covered[t]) continue;
    for (std::size_t n = 0; n < dataset.stations(); ++n) sum += dataset.value(t, n);
    count += dataset.stations();
  }
  Normalizer norm;
  norm.mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t t = 0; t < dataset.steps(); ++t) {
    if (!covered[t]) continue;
    for (std::size_t n = 0; n < dataset.stations(); ++n) {
      const double e = dataset.value(t, n) - norm.mean;
      ss += e * e;
    }
  }
  const double sd = std::sqrt(ss / static_cast<double>(count));
  norm.std = sd > 0.0 ? sd : 1.0;
  return norm;
}

std::pair<Tensor, Tensor> make_batch(const WindowedDataset& dataset,
                                     std::span<const std::size_t> samples, const Normalizer& norm) {
  const std::size_t b = samples.size();
  const std::size_t m = dataset.history(), h = dataset.horizon(), n = dataset.stations();
  std::vector<double> x(b * m * n), y(b * h * n);
  for (std::size_t i = 0; i < b; ++i) {
    const auto hs = dataset.history_slice(samples[i]);
    const auto ts = dataset.target_slice(samples[i]);
    std::transform(hs.begin(), hs.end(), x.begin() + static_cast<std::ptrdiff_t>(i * m * n),
                   [&](double v) { return norm.apply(v); });
    std::transform(ts.begin(), ts.end(), y.begin() + static_cast<std::ptrdiff_t>(i * h * n),
                   [&](double v) { return norm.apply(v); });
  }
  return {Tensor::from_values({b, m, n, 1}, std::move(x)), Tensor::from_values({b, h, n}, std::move(y))};
}

MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " targets");
  }
  if (pred.empty()) throw DataError("metrics over an empty set");
  MetricsReport r;
  double abs_sum = 0.0, sq_sum = 0.0, masked_sum = 0.0, raw_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = std::abs(pred[i] - truth[i]);
    abs_sum += e;
    sq_sum += e * e;
    raw_sum += e / (std::abs(truth[i]) + kRawMapeFloor);
    if (truth[i] >= 1.0) {
      masked_sum += e / std::abs(truth[i]);
      ++r.masked_cells;
    }
  }
  r.cells = pred.size();
  const double n = static_cast<double>(r.cells);
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(sq_sum / n);
  r.mape_raw = 100.0 * raw_sum / n;
  r.mape_masked = r.masked_cells ? 100.0 * masked_sum / static_cast<double>(r.masked_cells) : 0.0;
  r.mape_raw_unreliable = true;
  return r;
}

namespace {

template <typename Fn>
void for_each_batch(std::span<const std::size_t> samples, std::size_t batch_size, Fn&& fn) {
  if (batch_size == 0) throw ParameterError("batch size must be at least 1");
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    fn(samples.subspan(start, std::min(batch_size, samples.size() - start)));
  }
}

}  // namespace

double evaluate_loss(const stgcn::STGCNConfig& config, const stgcn::ModelParams& params,
                     const Tensor& propagation, const WindowedDataset& dataset,
                     std::span<const std::size_t> samples, const Normalizer& norm,
                     std::size_t batch_size) {
  if (samples.empty()) throw DataError("loss over an empty split");
  const auto frozen = params.clone(false);
  double total = 0.0;
  for_each_batch(samples, batch_size, [&](std::span<const std::size_t> batch) {
    auto [x, y] = make_batch(dataset, batch, norm);
    const auto loss = ad::mse_loss(stgcn::forward(x, propagation, frozen, config), y);
    total += loss.item() * static_cast<double>(batch.size());
  });
  return total / static_cast<double>(samples.size());
}

TrainResult train(const stgcn::STGCNConfig& config, const stgcn::ModelParams& initial,
                  const Tensor& propagation, const WindowedDataset& dataset,
                  const DatasetSplits& splits, const Normalizer& norm, const TrainOptions& options) {
  if (options.batch_size == 0) throw ParameterError("batch size must be at least 1");
  if (options.adam.lr < 0.0) throw ParameterError("learning rate must not be negative");
  if (splits.train.empty() || splits.val.empty()) throw DataError("training needs train and val samples");

  TrainResult result;
  auto params = initial.clone(true);
  auto flat = params.flat();
  const bool frozen = options.adam.lr == 0.0;
  ad::AdamState adam;
  if (!frozen) adam = ad::make_adam_state(flat, options.adam);

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(splits.train.begin(), splits.train.end());
  result.best = params.clone(true);
  result.history.best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for_each_batch(order, options.batch_size, [&](std::span<const std::size_t> batch) {
      ++batch_index;
      for (auto& p : flat) p.zero_grad();
      auto [x, y] = make_batch(dataset, batch, norm);
      const auto loss = ad::mse_loss(stgcn::forward(x, propagation, params, config), y);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite training loss " + csv::format_double(value) + " at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      loss_sum += value * static_cast<double>(batch.size());
      if (!frozen) {
        ad::backward(loss);
        ad::adam_step(flat, adam);
      }
    });

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = evaluate_loss(config, params, propagation, dataset, splits.val, norm,
                                 options.batch_size);
    if (!std::isfinite(rec.val_loss)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    if (rec.val_loss < result.history.best_val_loss) {
      rec.is_best = true;
      result.history.best_val_loss = rec.val_loss;
      result.history.best_epoch = epoch;
      result.best = params.clone(true);
      stale = 0;
    } else {
      ++stale;
    }
    result.history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    if (stale >= options.patience) {
      result.history.stopped_early = epoch < options.max_epochs;
      break;
    }
  }
  return result;
}

std::vector<double> predict(const stgcn::STGCNConfig& config, const stgcn::ModelParams& params,
                            const Tensor& propagation, const WindowedDataset& dataset,
                            std::span<const std::size_t> samples, const Normalizer& norm,
                            std::size_t batch_size) {
  const auto frozen = params.clone(false);
  std::vector<double> out;
  out.reserve(samples.size() * dataset.horizon() * dataset.stations());
  for_each_batch(samples, batch_size, [&](std::span<const std::size_t> batch) {
    auto [x, y] = make_batch(dataset, batch, norm);
    const auto pred = stgcn::forward(x, propagation, frozen, config);
    for (double z : pred.values()) out.push_back(norm.invert(z));
  });
  return out;
}

std::vector<double> gather_truth(const WindowedDataset& dataset, std::span<const std::size_t> samples) {
  std::vector<double> out;
  out.reserve(samples.size() * dataset.horizon() * dataset.stations());
  for (std::size_t k : samples) {
    const auto ts = dataset.target_slice(k);
    out.insert(out.end(), ts.begin(), ts.end());
  }
  return out;
}

namespace {

std::vector<double> clipped(std::vector<double> v) {
  for (double& x : v) x = std::max(0.0, x);
  return v;
}

}  // namespace

MetricsReport evaluate(const stgcn::STGCNConfig& config, const stgcn::ModelParams& params,
                       const Tensor& propagation, const WindowedDataset& dataset,
                       std::span<const std::size_t> test, const Normalizer& norm) {
  if (test.empty()) throw DataError("empty test split");
  const auto pred = clipped(predict(config, params, propagation, dataset, test, norm));
  return compute_metrics(pred, gather_truth(dataset, test));
}

MetricsReport baseline_persistence(const WindowedDataset& dataset, std::span<const std::size_t> test) {
  if (test.empty()) throw DataError("empty test split");
  const std::size_t n = dataset.stations();
  std::vector<double> pred;
  pred.reserve(test.size() * dataset.horizon() * n);
  for (std::size_t k : test) {
    const std::size_t last = k + dataset.history() - 1;
    for (std::size_t h = 0; h < dataset.horizon(); ++h) {
      for (std::size_t s = 0; s < n; ++s) pred.push_back(dataset.value(last, s));
    }
  }
  return compute_metrics(pred, gather_truth(dataset, test));
}

MetricsReport baseline_historical_average(const WindowedDataset& dataset, Timestamp train_end,
                                          std::span<const std::size_t> test) {
  if (test.empty()) throw DataError("empty test split");
  constexpr std::size_t kSlots = kDaySeconds / kBinSeconds;
  const std::size_t n = dataset.stations();
  auto slot_of = [](Timestamp ts) {
    return static_cast<std::size_t>((ts - floor_to(ts, kDaySeconds)) / kBinSeconds);
  };
  std::vector<double> sums(kSlots * n, 0.0);
  std::vector<std::size_t> counts(kSlots, 0);
  for (std::size_t t = 0; t < dataset.steps() && dataset.bin_time(t) < train_end; ++t) {
    const std::size_t slot = slot_of(dataset.bin_time(t));
    ++counts[slot];
    for (std::size_t s = 0; s < n; ++s) sums[slot * n + s] += dataset.value(t, s);
  }
  std::vector<double> pred;
  pred.reserve(test.size() * dataset.horizon() * n);
  for (std::size_t k : test) {
    for (std::size_t h = 0; h < dataset.horizon(); ++h) {
      const std::size_t slot = slot_of(dataset.target_time(k) + static_cast<Timestamp>(h) * kBinSeconds);
      for (std::size_t s = 0; s < n; ++s) {
        pred.push_back(counts[slot] ? sums[slot * n + s] / static_cast<double>(counts[slot]) : 0.0);
      }
    }
  }
  return compute_metrics(pred, gather_truth(dataset, test));
}

PredictionExport aggregate_rows(std::vector<PredictionRow> rows, std::size_t stations,
                                double histogram_bin_width) {
  PredictionExport e;
  struct StepAccum {
    double true_sum = 0.0;
    double pred_sum = 0.0;
    std::size_t count = 0;
  };
  std::map<Timestamp, StepAccum> steps;
  std::vector<double> st_true(stations, 0.0), st_pred(stations, 0.0);
  std::vector<std::size_t> st_count(stations, 0);
  for (const auto& r : rows) {
    auto& a = steps[r.bin_timestamp];
    a.true_sum += r.y_true;
    a.pred_sum += r.y_pred;
    ++a.count;
    st_true.at(r.station) += r.y_true;
    st_pred.at(r.station) += r.y_pred;
    ++st_count.at(r.station);
  }
  for (const auto& [ts, a] : steps) {
    e.step_times.push_back(ts);
    e.step_mean_true.push_back(a.true_sum / static_cast<double>(a.count));
    e.step_mean_pred.push_back(a.pred_sum / static_cast<double>(a.count));
  }
  for (std::size_t s = 0; s < stations; ++s) {
    const double c = st_count[s] ? static_cast<double>(st_count[s]) : 1.0;
    e.station_mean_true.push_back(st_true[s] / c);
    e.station_mean_pred.push_back(st_pred[s] / c);
  }
  e.station_hist_true = ingest::histogram(e.station_mean_true, histogram_bin_width);
  e.station_hist_pred = ingest::histogram(e.station_mean_pred, histogram_bin_width);
  e.rows = std::move(rows);
  return e;
}

PredictionExport export_predictions(const WindowedDataset& dataset,
                                    std::span<const std::size_t> samples,
                                    std::span<const double> raw_predictions,
                                    double histogram_bin_width) {
  const std::size_t n = dataset.stations();
  const std::size_t h_count = dataset.horizon();
  if (raw_predictions.size() != samples.size() * h_count * n) {
    throw ShapeError("prediction export: " + std::to_string(raw_predictions.size()) +
                     " values for " + std::to_string(samples.size()) + " samples");
  }
  std::vector<PredictionRow> rows;
  rows.reserve(raw_predictions.size());
  std::size_t i = 0;
  for (std::size_t k : samples) {
    const auto truth = dataset.target_slice(k);
    for (std::size_t h = 0; h < h_count; ++h) {
      const Timestamp ts = dataset.target_time(k) + static_cast<Timestamp>(h) * kBinSeconds;
      for (std::size_t s = 0; s < n; ++s, ++i) {
        rows.push_back({ts, s, truth[h * n + s], std::max(0.0, raw_predictions[i])});
      }
    }
  }
  return aggregate_rows(std::move(rows), n, histogram_bin_width);
}

void write_history_csv(std::ostream& os, const TrainHistory& history) {
  os << "epoch,train_loss,val_loss,is_best\n";
  for (const auto& e : history.epochs) {
    os << e.epoch << ',' << csv::format_double(e.train_loss) << ',' << csv::format_double(e.val_loss)
       << ',' << (e.is_best ? 1 : 0) << '\n';
  }
}

void write_metrics_text(std::ostream& os, const MetricsReport& m, const std::string& prefix) {
  os << prefix << "mae = " << csv::format_double(m.mae) << '\n'
     << prefix << "rmse = " << csv::format_double(m.rmse) << '\n'
     << prefix << "mape_masked = " << csv::format_double(m.mape_masked) << '\n'
     << prefix << "mape_raw = " << csv::format_double(m.mape_raw) << '\n'
     << prefix << "mape_raw_unreliable = " << (m.mape_raw_unreliable ? "true" : "false") << '\n'
     << prefix << "cells = " << m.cells << '\n'
     << prefix << "masked_cells = " << m.masked_cells << '\n';
}

void write_metrics_csv(std::ostream& os, const MetricsReport& m) {
  os << "mae,rmse,mape_masked\n"
     << csv::format_double(m.mae) << ',' << csv::format_double(m.rmse) << ','
     << csv::format_double(m.mape_masked) << '\n';
}

void write_predictions_csv(std::ostream& os, const PredictionExport& e,
                           std::span<const std::string> station_ids) {
  os << "bin_timestamp,station_id,y_true,y_pred\n";
  for (const auto& r : e.rows) {
    os << format_timestamp(r.bin_timestamp) << ',' << csv::escape(station_ids[r.station]) << ','
       << csv::format_double(r.y_true) << ',' << csv::format_double(r.y_pred) << '\n';
  }
}

void write_step_series_csv(std::ostream& os, const PredictionExport& e) {
  os << "bin_timestamp,mean_true,mean_pred\n";
  for (std::size_t i = 0; i < e.step_times.size(); ++i) {
    os << format_timestamp(e.step_times[i]) << ',' << csv::format_double(e.step_mean_true[i]) << ','
       << csv::format_double(e.step_mean_pred[i]) << '\n';
  }
}

void write_station_series_csv(std::ostream& os, const PredictionExport& e,
                              std::span<const std::string> station_ids) {
  os << "station_id,mean_true,mean_pred\n";
  for (std::size_t s = 0; s < e.station_mean_true.size(); ++s) {
    os << csv::escape(station_ids[s]) << ',' << csv::format_double(e.station_mean_true[s]) << ','
       << csv::format_double(e.station_mean_pred[s]) << '\n';
  }
}

void write_station_histogram_csv(std::ostream& os, const PredictionExport& e) {
  os << "bin_lo,bin_hi,count_true,count_pred\n";
  const auto& a = e.station_hist_true;
  const auto& b = e.station_hist_pred;
  const std::size_t bins = std::max(a.counts.size(), b.counts.size());
  for (std::size_t i = 0; i < bins; ++i) {
    os << csv::format_double(static_cast<double>(i) * a.bin_width) << ','
       << csv::format_double(static_cast<double>(i + 1) * a.bin_width) << ','
       << (i < a.counts.size() ? a.counts[i] : 0) << ',' << (i < b.counts.size() ? b.counts[i] : 0)
       << '\n';
  }
}

}  // namespace stflow::pipeline
