#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "stflow/error.hpp"
#include "stflow/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stflow-synth: synthetic trip CSV in the public trip-file schema"};
  stflow::synth::SynthOptions o;
  std::string out = "-";
  app.add_option("--out", out, "output CSV path, - for stdout");
  app.add_option("--stations", o.stations);
  app.add_option("--days", o.days);
  app.add_option("--start", o.start_date, "YYYY-MM-DD");
  app.add_option("--seed", o.seed);
  app.add_option("--departures", o.departures_per_station_day, "mean departures per station per day");
  app.add_option("--dirty", o.dirty_fraction, "fraction of corrupted rows");
  CLI11_PARSE(app, argc, argv);
  try {
    if (out == "-") {
      stflow::synth::write_trip_csv(std::cout, o);
    } else {
      std::ofstream os(out, std::ios::binary);
      if (!os) throw stflow::DataError("cannot open " + out);
      const auto s = stflow::synth::write_trip_csv(os, o);
      std::cerr << "wrote " << s.rows << " rows to " << out << '\n';
    }
  } catch (const stflow::Error& e) {
    std::cerr << "stflow-synth: " << e.what() << '\n';
    return e.exit_code();
  }
  return 0;
}
