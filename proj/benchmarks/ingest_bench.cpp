#include <benchmark/benchmark.h>

#include <sstream>

#include "stflow/ingest.hpp"
#include "stflow/synth.hpp"

namespace {

using namespace stflow;

std::string synthetic_csv(std::size_t stations, std::size_t days) {
  synth::SynthOptions o;
  o.stations = stations;
  o.days = days;
  std::ostringstream os;
  synth::write_trip_csv(os, o);
  return os.str();
}

void BM_ParseTrips(benchmark::State& state) {
  const std::string text = synthetic_csv(100, 7);
  std::size_t rows = 0;
  for (auto _ : state) {
    std::istringstream in(text);
    ingest::IngestReport report;
    auto trips = ingest::parse_trips(in, report);
    rows = report.rows_read;
    benchmark::DoNotOptimize(trips.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ParseTrips)->Unit(benchmark::kMillisecond);

void BM_AggregateTraffic(benchmark::State& state) {
  std::istringstream in(synthetic_csv(100, 7));
  ingest::IngestReport report;
  const auto trips = ingest::parse_trips(in, report);
  const auto registry = ingest::build_station_registry(trips);
  const auto [lo, hi] = ingest::infer_range(trips);
  for (auto _ : state) {
    auto t = ingest::aggregate_traffic(trips, registry, lo, hi);
    benchmark::DoNotOptimize(t.values.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * trips.size()));
}
BENCHMARK(BM_AggregateTraffic)->Unit(benchmark::kMillisecond);

}  // namespace
