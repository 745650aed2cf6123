#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace stflow::synth {

/// Knobs for the synthetic trip generator. The output follows the public
/// trip-file schema: commute-shaped weekday profiles, flat weekend
/// afternoons, day-level weather shocks and rain spells, and morning/evening
/// flows between residential and business stations.
struct SynthOptions {
  std::size_t stations = 200;
  std::size_t days = 30;
  std::string start_date = "2021-06-01";
  std::uint64_t seed = 7;
  double departures_per_station_day = 40.0;  // network mean
  double popularity_sigma = 1.0;              // lognormal spread across stations
  double weather_sigma = 0.35;
  double rain_probability = 0.25;
  double dirty_fraction = 0.0;  // share of rows corrupted in a counted way
};

struct SynthSummary {
  std::uint64_t rows = 0;
  std::uint64_t clean_rows = 0;
  std::uint64_t malformed_rows = 0;
  std::uint64_t missing_station_rows = 0;
  std::uint64_t negative_duration_rows = 0;
};

SynthSummary write_trip_csv(std::ostream& os, const SynthOptions& options);

}  // namespace stflow::synth
