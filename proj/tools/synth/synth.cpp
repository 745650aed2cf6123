#include "stflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <vector>

#include "stflow/error.hpp"
#include "stflow/graph.hpp"
#include "stflow/time.hpp"

namespace stflow::synth {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() {
    const double u1 = std::max(uniform(), 0x1.0p-53);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * uniform());
  }
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }
  std::uint64_t poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    if (lambda > 30.0) {
      return static_cast<std::uint64_t>(std::max(0.0, std::round(lambda + std::sqrt(lambda) * normal())));
    }
    const double limit = std::exp(-lambda);
    std::uint64_t k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

 private:
  std::mt19937_64 engine_;
};

double bump(double hour, double center, double width) {
  const double z = (hour - center) / width;
  return std::exp(-0.5 * z * z);
}

// Relative departure intensity at a given hour; each profile averages to 1.
std::vector<double> profile(bool weekend) {
  std::vector<double> slots(48);
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const double h = (static_cast<double>(s) + 0.5) / 2.0;
    const double night = 0.04 + 0.2 * bump(h, 0.0, 2.0) + 0.2 * bump(h, 24.0, 2.0);
    slots[s] = weekend ? night + 1.6 * bump(h, 14.5, 3.5)
                       : night + 1.8 * bump(h, 8.5, 1.1) + 2.2 * bump(h, 17.8, 1.4) +
                             0.9 * bump(h, 12.5, 2.0);
  }
  double mean = 0.0;
  for (double v : slots) mean += v;
  mean /= static_cast<double>(slots.size());
  for (double& v : slots) v /= mean;
  return slots;
}

struct SynthStation {
  std::string id;
  std::string name;
  double lat = 0.0;
  double lng = 0.0;
  double popularity = 1.0;
  double business = 0.5;  // 1: office district, 0: residential
};

void write_coord(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  os << buf;
}

}  // namespace

SynthSummary write_trip_csv(std::ostream& os, const SynthOptions& o) {
  const auto start = parse_timestamp(o.start_date);
  if (!start || o.stations < 2 || o.days == 0) throw ParameterError("synth: bad options");
  Rng rng(o.seed);

  std::vector<SynthStation> st(o.stations);
  for (std::size_t i = 0; i < st.size(); ++i) {
    auto& s = st[i];
    char id[32];
    std::snprintf(id, sizeof id, "%zu.%02zu", 3000 + 7 * i, i % 100);
    s.id = id;
    s.name = "Synthetic St & " + std::to_string(i + 1) + " Ave";
    s.lat = 40.68 + 0.14 * rng.uniform();
    s.lng = -74.02 + 0.09 * rng.uniform();
    s.popularity = std::exp(o.popularity_sigma * rng.normal());
    // Office districts sit toward the south-west corner of the box.
    const double south = (40.82 - s.lat) / 0.14;
    s.business = std::clamp(0.7 * south + 0.3 * rng.uniform(), 0.0, 1.0);
  }
  double pop_mean = 0.0;
  for (const auto& s : st) pop_mean += s.popularity;
  pop_mean /= static_cast<double>(st.size());
  for (auto& s : st) s.popularity /= pop_mean;

  const std::size_t n = st.size();
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dist[i * n + j] = graph::haversine_km(st[i].lat, st[i].lng, st[j].lat, st[j].lng);
    }
  }
  // Cumulative destination weights per origin for three regimes:
  // morning (toward offices), evening (toward homes), other.
  std::vector<std::vector<double>> cumulative(3, std::vector<double>(n * n));
  for (std::size_t regime = 0; regime < 3; ++regime) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double w = st[j].popularity * std::exp(-dist[i * n + j] / 2.0);
        if (regime == 0) w *= 0.3 + 2.0 * st[j].business;
        if (regime == 1) w *= 0.3 + 2.0 * (1.0 - st[j].business);
        if (i == j) w *= 0.2;
        acc += w;
        cumulative[regime][i * n + j] = acc;
      }
    }
  }

  const auto weekday_profile = profile(false);
  const auto weekend_profile = profile(true);

  os << "ride_id,rideable_type,started_at,ended_at,start_station_name,start_station_id,"
        "end_station_name,end_station_id,start_lat,start_lng,end_lat,end_lng,member_casual\n";
  SynthSummary summary;
  std::uint64_t ride = 0;
  for (std::size_t day = 0; day < o.days; ++day) {
    const Timestamp day_start = *start + static_cast<Timestamp>(day) * kDaySeconds;
    // 1970-01-01 was a Thursday; days since epoch mod 7 == 2 or 3 are Sat/Sun.
    const auto dow = ((day_start / kDaySeconds) % 7 + 7) % 7;
    const bool weekend = dow == 2 || dow == 3;
    const auto& prof = weekend ? weekend_profile : weekday_profile;
    const double sigma = o.weather_sigma;
    const double weather = std::exp(sigma * rng.normal() - 0.5 * sigma * sigma);
    std::size_t rain_from = 48, rain_to = 48;
    if (rng.uniform() < o.rain_probability) {
      rain_from = 12 + rng.below(24);
      rain_to = rain_from + 4 + rng.below(10);
    }
    double drift = 0.0;
    for (std::size_t slot = 0; slot < 48; ++slot) {
      drift = 0.85 * drift + 0.12 * rng.normal();
      double level = weather * prof[slot] * std::exp(drift);
      if (slot >= rain_from && slot < rain_to) level *= 0.3;
      const double hour = static_cast<double>(slot) / 2.0;
      const std::size_t regime = (!weekend && hour >= 6.5 && hour < 10.5)    ? 0
                                 : (!weekend && hour >= 16.0 && hour < 20.0) ? 1
                                                                             : 2;
      for (std::size_t i = 0; i < n; ++i) {
        double tilt = 1.0;
        if (regime == 0) tilt = 0.4 + 1.2 * (1.0 - st[i].business);
        if (regime == 1) tilt = 0.4 + 1.2 * st[i].business;
        const double lambda =
            o.departures_per_station_day / 48.0 * st[i].popularity * level * tilt;
        const auto departures = rng.poisson(lambda);
        const auto* cum = &cumulative[regime][i * n];
        for (std::uint64_t d = 0; d < departures; ++d) {
          const double pick = rng.uniform() * cum[n - 1];
          const std::size_t j =
              static_cast<std::size_t>(std::upper_bound(cum, cum + n, pick) - cum);
          const std::size_t dest = std::min(j, n - 1);
          const Timestamp t0 = day_start + static_cast<Timestamp>(slot) * kBinSeconds +
                               static_cast<Timestamp>(rng.below(kBinSeconds));
          const double minutes = 3.0 + dist[i * n + dest] / 0.22 + 6.0 * rng.uniform();
          Timestamp t1 = t0 + static_cast<Timestamp>(minutes * 60.0);

          std::string start_id = st[i].id, end_id = st[dest].id;
          bool malformed = false;
          ++summary.rows;
          if (o.dirty_fraction > 0.0 && rng.uniform() < o.dirty_fraction) {
            switch (rng.below(3)) {
              case 0:
                end_id.clear();
                ++summary.missing_station_rows;
                break;
              case 1:
                malformed = true;
                ++summary.malformed_rows;
                break;
              default:
                t1 = t0 - 60;
                ++summary.negative_duration_rows;
                break;
            }
          } else {
            ++summary.clean_rows;
          }
          const double jitter = 1e-5;
          os << std::hex << 0x1000000 + ride++ << std::dec << ",classic_bike,"
             << format_timestamp(t0) << ','
             << (malformed ? std::string("not-a-time") : format_timestamp(t1)) << ",\""
             << st[i].name << "\"," << start_id << ",\"" << st[dest].name << "\"," << end_id << ',';
          write_coord(os, st[i].lat + jitter * rng.normal());
          os << ',';
          write_coord(os, st[i].lng + jitter * rng.normal());
          os << ',';
          write_coord(os, st[dest].lat + jitter * rng.normal());
          os << ',';
          write_coord(os, st[dest].lng + jitter * rng.normal());
          os << (rng.uniform() < 0.8 ? ",member\n" : ",casual\n");
        }
      }
    }
  }
  return summary;
}

}  // namespace stflow::synth
