#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "stflow/error.hpp"
#include "stflow/pipeline.hpp"
#include "test_support.hpp"

namespace stflow::pipeline {
namespace {

using ingest::TrafficTensor;
using stflow::testing::make_tensor;
using stflow::testing::ts;

TrafficTensor ramp(std::size_t steps, std::size_t stations = 1, Timestamp origin = 0) {
  auto t = make_tensor(steps, stations, origin);
  for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = static_cast<std::uint32_t>(i);
  return t;
}

stgcn::STGCNConfig tiny_model(std::size_t m = 4, std::size_t h = 1) {
  stgcn::STGCNConfig c;
  c.history_steps = m;
  c.horizon_steps = h;
  c.temporal_kernel = 2;
  c.c_t1 = 8;
  c.c_s = 4;
  c.c_t2 = 8;
  return c;
}

Tensor identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor::from_values({n, n}, v);
}

TEST(Windows, CountFormulaExamples) {
  EXPECT_EQ(make_windows(ramp(13), 12, 1).size(), 1u);
  auto d = make_windows(ramp(20), 12, 1);
  ASSERT_EQ(d.size(), 8u);
  for (std::size_t k = 1; k < d.size(); ++k) EXPECT_GT(d.target_time(k), d.target_time(k - 1));
  EXPECT_THROW(make_windows(ramp(12), 12, 1), DataError);
}

TEST(Windows, RampSliceZero) {
  auto d = make_windows(ramp(20), 12, 1);
  auto x = d.history_slice(0);
  ASSERT_EQ(x.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(x[i], static_cast<double>(i));
  auto y = d.target_slice(0);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], 12.0);
  EXPECT_EQ(d.target_time(0), 12 * kBinSeconds);
}

TEST(Windows, CountFormulaHoldsForRandomShapes) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 300; ++i) {
    std::size_t m = 1 + rng() % 20, h = 1 + rng() % 5;
    std::size_t t = m + h + rng() % 50;
    auto d = make_windows(ramp(t, 2), m, h);
    ASSERT_EQ(d.size(), t - m - h + 1);
    std::size_t last = d.size() - 1;
    EXPECT_EQ(d.target_slice(last).back(), static_cast<double>((t - 1) * 2 + 1));
  }
}

TEST(Split, JuneTestStartsOnTheTwentyEighth) {
  auto june = make_tensor(1440, 2, ts("2021-06-01"));
  auto d = make_windows(june, 12, 1);
  auto s = split_by_time(d);
  EXPECT_EQ(s.test_start, ts("2021-06-28"));
  EXPECT_EQ(s.val_start, ts("2021-06-25"));
  EXPECT_EQ(d.target_time(s.test.front()), ts("2021-06-28 00:00:00"));
  EXPECT_EQ(d.target_time(s.test.back()), ts("2021-06-30 23:30:00"));
  EXPECT_EQ(s.test.size(), 3u * 48u);
  EXPECT_EQ(s.val.size(), 3u * 48u);
  EXPECT_EQ(s.train.size(), d.size() - 6u * 48u);
}

TEST(Split, PartitionAndNoLeakage) {
  auto d = make_windows(make_tensor(1440, 1, ts("2021-06-01")), 12, 1);
  auto s = split_by_time(d);
  std::set<std::size_t> all;
  all.insert(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), d.size());
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), d.size());
  EXPECT_LT(d.target_time(s.train.back()), d.target_time(s.val.front()));
  EXPECT_LT(d.target_time(s.val.back()), d.target_time(s.test.front()));
  EXPECT_LT(d.target_time(s.train.back()), s.val_start);
}

TEST(Split, TooShortThrows) {
  auto d = make_windows(make_tensor(48 * 5, 1, ts("2021-06-01")), 12, 1);
  EXPECT_THROW(split_by_time(d), DataError);
}

TEST(Normalizer, HandZScore) {
  auto t = make_tensor(3, 1, 0);
  t.values = {0, 2, 9};
  // M = 1: samples 0 and 1 touch history bins {0, 2}; bin 2 is only a target.
  auto n = fit_normalizer(make_windows(t, 1, 1), std::vector<std::size_t>{0, 1});
  EXPECT_EQ(n.mean, 1.0);
  EXPECT_EQ(n.std, 1.0);
  EXPECT_EQ(n.apply(2.0), 1.0);
}

TEST(Normalizer, ConstantSeriesFallsBack) {
  auto t = make_tensor(10, 2, 0);
  std::fill(t.values.begin(), t.values.end(), 4u);
  auto d = make_windows(t, 3, 1);
  std::vector<std::size_t> train{0, 1, 2};
  auto n = fit_normalizer(d, train);
  EXPECT_EQ(n.mean, 4.0);
  EXPECT_EQ(n.std, 1.0);
  EXPECT_EQ(n.apply(4.0), 0.0);
}

TEST(Normalizer, RoundTrip) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  Normalizer n{3.7, 2.9};
  for (int i = 0; i < 10000; ++i) {
    double x = u(rng);
    EXPECT_NEAR(n.invert(n.apply(x)), x, 1e-12);
  }
}

TEST(Batch, ShapesAndNormalizedValues) {
  auto d = make_windows(ramp(10, 3), 4, 2);
  Normalizer n{1.0, 2.0};
  std::vector<std::size_t> samples{1, 3};
  auto [x, y] = make_batch(d, samples, n);
  EXPECT_EQ(x.shape(), (ad::Shape{2, 4, 3, 1}));
  EXPECT_EQ(y.shape(), (ad::Shape{2, 2, 3}));
  EXPECT_EQ(x.values()[0], n.apply(d.value(1, 0)));
  EXPECT_EQ(y.values()[6 + 5], n.apply(d.value(3 + 4 + 1, 2)));
}

TEST(Metrics, HandExample) {
  std::vector<double> pred{1, 2}, truth{2, 4};
  auto m = compute_metrics(pred, truth);
  EXPECT_DOUBLE_EQ(m.mae, 1.5);
  EXPECT_NEAR(m.rmse, 1.5811388300841898, 1e-15);
  EXPECT_DOUBLE_EQ(m.mape_masked, 50.0);
  EXPECT_EQ(m.cells, 2u);
  EXPECT_EQ(m.masked_cells, 2u);
}

TEST(Metrics, PerfectPredictions) {
  std::vector<double> v{0, 3, 1, 7};
  auto m = compute_metrics(v, v);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
}

TEST(Metrics, ZeroTruthExcludedFromMaskedMape) {
  std::vector<double> pred{1, 2, 0.5}, truth{0, 2, 0};
  auto m = compute_metrics(pred, truth);
  EXPECT_EQ(m.masked_cells, 1u);
  EXPECT_EQ(m.mape_masked, 0.0);
  EXPECT_TRUE(m.mape_raw_unreliable);
  EXPECT_GT(m.mape_raw, 1e6);
}

TEST(Metrics, RmseDominatesMae) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    std::size_t n = 1 + rng() % 30;
    std::vector<double> p(n), t(n);
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = u(rng);
      t[k] = std::floor(u(rng));
    }
    auto m = compute_metrics(p, t);
    EXPECT_GE(m.rmse, m.mae - 1e-12 * m.mae);
  }
}

TEST(Baselines, ConstantSeriesPersistenceIsExact) {
  auto t = make_tensor(48 * 8, 3, ts("2021-06-01"));
  std::fill(t.values.begin(), t.values.end(), 5u);
  auto d = make_windows(t, 12, 1);
  auto s = split_by_time(d);
  auto m = baseline_persistence(d, s.test);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
}

TEST(Baselines, DailyPeriodicHistoricalAverageIsExact) {
  auto t = make_tensor(48 * 8, 2, ts("2021-06-01"));
  for (std::size_t k = 0; k < t.steps; ++k) {
    t.at(k, 0) = static_cast<std::uint32_t>(k % 48);
    t.at(k, 1) = static_cast<std::uint32_t>((k * 7) % 48 / 5);
  }
  auto d = make_windows(t, 12, 1);
  auto s = split_by_time(d);
  auto m = baseline_historical_average(d, s.val_start, s.test);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_GT(baseline_persistence(d, s.test).mae, 0.0);
}

TEST(Baselines, RandomWalkPersistenceByEnumeration) {
  std::mt19937_64 rng(13);
  auto t = make_tensor(48 * 7, 2, ts("2021-06-01"));
  std::int64_t level[2] = {50, 80};
  for (std::size_t k = 0; k < t.steps; ++k)
    for (std::size_t n = 0; n < 2; ++n) {
      level[n] = std::max<std::int64_t>(0, level[n] + static_cast<std::int64_t>(rng() % 5) - 2);
      t.at(k, n) = static_cast<std::uint32_t>(level[n]);
    }
  const std::size_t m = 6, h = 2;
  auto d = make_windows(t, m, h);
  auto s = split_by_time(d, {2, 2});
  double abs_sum = 0.0;
  std::size_t cells = 0;
  for (std::size_t k : s.test)
    for (std::size_t step = 0; step < h; ++step)
      for (std::size_t n = 0; n < 2; ++n) {
        double last = t.at(k + m - 1, n);
        double truth = t.at(k + m + step, n);
        abs_sum += std::abs(last - truth);
        ++cells;
      }
  auto r = baseline_persistence(d, s.test);
  EXPECT_EQ(r.cells, cells);
  EXPECT_NEAR(r.mae, abs_sum / static_cast<double>(cells), 1e-12);
}

TEST(Export, AggregatesMatchDetailTable) {
  std::mt19937_64 rng(14);
  auto t = make_tensor(40, 3, ts("2021-06-01"));
  for (auto& v : t.values) v = static_cast<std::uint32_t>(rng() % 6);
  auto d = make_windows(t, 4, 2);
  std::vector<std::size_t> samples{10, 11, 12, 20};
  std::normal_distribution<double> noise(1.0, 2.0);
  std::vector<double> raw(samples.size() * 2 * 3);
  for (double& v : raw) v = noise(rng);
  auto e = export_predictions(d, samples, raw);
  EXPECT_EQ(e.rows.size(), raw.size());
  for (const auto& r : e.rows) EXPECT_GE(r.y_pred, 0.0);
  auto again = aggregate_rows(e.rows, 3);
  EXPECT_EQ(again.step_times, e.step_times);
  EXPECT_EQ(again.step_mean_true, e.step_mean_true);
  EXPECT_EQ(again.step_mean_pred, e.step_mean_pred);
  EXPECT_EQ(again.station_mean_true, e.station_mean_true);
  EXPECT_EQ(again.station_mean_pred, e.station_mean_pred);
  EXPECT_EQ(again.station_hist_pred.counts, e.station_hist_pred.counts);
}

TEST(Export, ZeroModelHasZeroPredictedAggregates) {
  auto d = make_windows(ramp(30, 2, ts("2021-06-01")), 4, 1);
  std::vector<std::size_t> samples{0, 5, 9};
  auto e = export_predictions(d, samples, std::vector<double>(6, 0.0));
  for (double v : e.step_mean_pred) EXPECT_EQ(v, 0.0);
  for (double v : e.station_mean_pred) EXPECT_EQ(v, 0.0);
}

TEST(Export, GoldenCsv) {
  auto t = make_tensor(6, 2, ts("2021-06-01"));
  for (std::size_t i = 0; i < 12; ++i) t.values[i] = static_cast<std::uint32_t>(i);
  auto d = make_windows(t, 2, 1);
  std::vector<std::size_t> samples{2, 3};
  std::vector<double> raw{7.5, -1.0, 10.25, 11.0};
  auto e = export_predictions(d, samples, raw);
  std::ostringstream os;
  std::vector<std::string> ids{"A", "B"};
  write_predictions_csv(os, e, ids);
  EXPECT_EQ(os.str(), stflow::testing::slurp(stflow::testing::fixture("golden_predictions.csv")));
}

TEST(Export, HistoryCsvHeader) {
  TrainHistory h;
  h.epochs = {{1, 0.5, 0.75, true}, {2, 0.25, 1.0, false}};
  std::ostringstream os;
  write_history_csv(os, h);
  EXPECT_EQ(os.str(), "epoch,train_loss,val_loss,is_best\n1,0.5,0.75,1\n2,0.25,1,0\n");
}

struct TinyProblem {
  TrafficTensor traffic;
  WindowedDataset dataset;
  DatasetSplits splits;
  Normalizer norm;
  Tensor p;
  stgcn::STGCNConfig config;

  explicit TinyProblem(std::uint64_t seed)
      : traffic(make_series(seed)),
        dataset(traffic, 4, 1),
        splits(split_by_time(dataset, {1, 1})),
        norm(fit_normalizer(dataset, splits.train)),
        p(identity(3)),
        config(tiny_model()) {
    config.n_nodes = 3;
  }

  static TrafficTensor make_series(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto t = make_tensor(48 * 3, 3, ts("2021-06-01"));
    for (std::size_t k = 0; k < t.steps; ++k)
      for (std::size_t n = 0; n < 3; ++n)
        t.at(k, n) = static_cast<std::uint32_t>(3 + 2 * std::sin(double(k) / 5.0 + double(n)) + rng() % 3);
    return t;
  }
};

TEST(Train, ZeroLearningRateFreezesParameters) {
  TinyProblem prob(1);
  auto init = stgcn::init_params(prob.config, 5);
  TrainOptions opt;
  opt.adam.lr = 0.0;
  opt.max_epochs = 3;
  auto r = train(prob.config, init, prob.p, prob.dataset, prob.splits, prob.norm, opt);
  EXPECT_EQ(r.history.epochs.size(), 3u);
  auto a = init.flat(), b = r.best.flat();
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_TRUE(std::equal(a[i].values().begin(), a[i].values().end(), b[i].values().begin()));
}

TEST(Train, MemorizesFiveSamples) {
  TinyProblem prob(2);
  DatasetSplits five = prob.splits;
  five.train = {0, 7, 13, 21, 30};
  five.val = five.train;
  TrainOptions opt;
  opt.adam.lr = 0.01;
  opt.batch_size = 5;
  opt.max_epochs = 500;
  opt.patience = 500;
  auto r = train(prob.config, stgcn::init_params(prob.config, 3), prob.p, prob.dataset, five, prob.norm, opt);
  double loss = evaluate_loss(prob.config, r.best, prob.p, prob.dataset, five.train, prob.norm);
  EXPECT_LT(loss, 1e-3);
  EXPECT_DOUBLE_EQ(loss, r.history.best_val_loss);
}

TEST(Train, HistoryExposesBestAndFinal) {
  TinyProblem prob(3);
  TrainOptions opt;
  opt.adam.lr = 0.05;
  opt.batch_size = 8;
  opt.max_epochs = 30;
  opt.patience = 4;
  std::size_t callbacks = 0;
  opt.on_epoch = [&](const EpochRecord&) { ++callbacks; };
  auto r = train(prob.config, stgcn::init_params(prob.config, 4), prob.p, prob.dataset, prob.splits,
                 prob.norm, opt);
  const auto& h = r.history;
  ASSERT_FALSE(h.epochs.empty());
  EXPECT_EQ(callbacks, h.epochs.size());
  double min_val = h.epochs.front().val_loss;
  for (const auto& e : h.epochs) min_val = std::min(min_val, e.val_loss);
  EXPECT_EQ(h.best_val_loss, min_val);
  EXPECT_TRUE(h.epochs[h.best_epoch - 1].is_best);
  EXPECT_GE(h.epochs.back().val_loss, h.best_val_loss);
  double replay = evaluate_loss(prob.config, r.best, prob.p, prob.dataset, prob.splits.val, prob.norm, 8);
  EXPECT_NEAR(replay, h.best_val_loss, 1e-12);
  if (h.stopped_early) EXPECT_EQ(h.epochs.size(), h.best_epoch + opt.patience);
}

TEST(Train, SeedMakesTrainingBitReproducible) {
  auto run = [] {
    TinyProblem prob(4);
    TrainOptions opt;
    opt.max_epochs = 3;
    opt.batch_size = 7;
    auto r = train(prob.config, stgcn::init_params(prob.config, 9), prob.p, prob.dataset, prob.splits,
                   prob.norm, opt);
    std::vector<double> out;
    for (const auto& t : r.best.flat()) out.insert(out.end(), t.values().begin(), t.values().end());
    for (const auto& e : r.history.epochs) out.push_back(e.val_loss);
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, NonFiniteLossAbortsWithDiagnostics) {
  TinyProblem prob(5);
  Normalizer broken{0.0, 1e-320};
  TrainOptions opt;
  opt.max_epochs = 1;
  try {
    train(prob.config, stgcn::init_params(prob.config, 1), prob.p, prob.dataset, prob.splits, broken, opt);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
  }
}

TEST(Evaluate, ClipsNegativePredictions) {
  TinyProblem prob(6);
  auto zero = stgcn::params_from_flat(prob.config,
                                      std::vector<double>(stgcn::parameter_count(prob.config), 0.0));
  Normalizer shifted{-2.0, 1.0};  // zero model predicts -2 before clipping
  auto m = evaluate(prob.config, zero, prob.p, prob.dataset, prob.splits.test, shifted);
  auto truth = gather_truth(prob.dataset, prob.splits.test);
  double mae = 0.0;
  for (double v : truth) mae += v;
  EXPECT_NEAR(m.mae, mae / double(truth.size()), 1e-12);
  auto raw = predict(prob.config, zero, prob.p, prob.dataset, prob.splits.test, shifted);
  for (double v : raw) EXPECT_EQ(v, -2.0);
}

}  // namespace
}  // namespace stflow::pipeline
