#include "stflow/run/config.hpp"

#include <charconv>
#include <sstream>

#include "stflow/binary_io.hpp"
#include "stflow/csv.hpp"
#include "stflow/error.hpp"
#include "stflow/time.hpp"

namespace stflow::run {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  text = trim(text);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("invalid value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  }
  return v;
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_number<std::size_t>(key, text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

void set_value(RunConfig& c, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  const auto str = [&] { return std::string(value); };
  const auto size = [&] { return parse_number<std::size_t>(key, value); };
  const auto real = [&] { return parse_number<double>(key, value); };

  if (key == "input") c.input = str();
  else if (key == "data_dir") c.data_dir = str();
  else if (key == "range_start") c.range_start = str();
  else if (key == "range_end") c.range_end = str();
  else if (key == "top_stations") c.top_stations = size();
  else if (key == "sigma_sq") c.sigma_sq = (value == "auto" || value.empty()) ? std::nullopt : std::optional<double>(real());
  else if (key == "epsilon") c.epsilon = real();
  else if (key == "history_steps") c.history_steps = size();
  else if (key == "horizon_steps") c.horizon_steps = size();
  else if (key == "temporal_kernel") c.temporal_kernel = size();
  else if (key == "channels") c.channels = parse_list(key, value);
  else if (key == "n_blocks") c.n_blocks = size();
  else if (key == "lr") c.lr = real();
  else if (key == "beta1") c.beta1 = real();
  else if (key == "beta2") c.beta2 = real();
  else if (key == "adam_eps") c.adam_eps = real();
  else if (key == "batch_size") c.batch_size = size();
  else if (key == "max_epochs") c.max_epochs = size();
  else if (key == "patience") c.patience = size();
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "precision") c.precision = str();
  else if (key == "test_days") c.test_days = size();
  else if (key == "val_days") c.val_days = size();
  else if (key == "hist_bin_width") c.hist_bin_width = real();
  else if (key == "out") c.out = str();
  else throw ConfigError("unknown key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    set_value(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const Error&) {
    throw ConfigError("cannot read " + path);
  }
  return parse_config(text, std::move(base));
}

std::string serialize(const RunConfig& c) {
  std::ostringstream os;
  auto list = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  os << "input = " << c.input << '\n'
     << "data_dir = " << c.data_dir << '\n'
     << "range_start = " << c.range_start << '\n'
     << "range_end = " << c.range_end << '\n'
     << "top_stations = " << c.top_stations << '\n'
     << "sigma_sq = " << (c.sigma_sq ? csv::format_double(*c.sigma_sq) : std::string("auto")) << '\n'
     << "epsilon = " << csv::format_double(c.epsilon) << '\n'
     << "history_steps = " << c.history_steps << '\n'
     << "horizon_steps = " << c.horizon_steps << '\n'
     << "temporal_kernel = " << c.temporal_kernel << '\n'
     << "channels = " << list(c.channels) << '\n'
     << "n_blocks = " << c.n_blocks << '\n'
     << "lr = " << csv::format_double(c.lr) << '\n'
     << "beta1 = " << csv::format_double(c.beta1) << '\n'
     << "beta2 = " << csv::format_double(c.beta2) << '\n'
     << "adam_eps = " << csv::format_double(c.adam_eps) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "max_epochs = " << c.max_epochs << '\n'
     << "patience = " << c.patience << '\n'
     << "seed = " << c.seed << '\n'
     << "precision = " << c.precision << '\n'
     << "test_days = " << c.test_days << '\n'
     << "val_days = " << c.val_days << '\n'
     << "hist_bin_width = " << csv::format_double(c.hist_bin_width) << '\n'
     << "out = " << c.out << '\n';
  return os.str();
}

std::uint64_t config_hash(const RunConfig& config) {
  RunConfig located = config;
  located.out.clear();
  return io::fnv1a64(serialize(located));
}

stgcn::STGCNConfig RunConfig::model_config(std::size_t n_nodes) const {
  stgcn::STGCNConfig m;
  m.history_steps = history_steps;
  m.horizon_steps = horizon_steps;
  m.temporal_kernel = temporal_kernel;
  m.c_in = channels.at(0);
  m.c_t1 = channels.at(1);
  m.c_s = channels.at(2);
  m.c_t2 = channels.at(3);
  m.n_blocks = n_blocks;
  m.n_nodes = n_nodes;
  return m;
}

pipeline::TrainOptions RunConfig::train_options() const {
  pipeline::TrainOptions o;
  o.batch_size = batch_size;
  o.max_epochs = max_epochs;
  o.patience = patience;
  o.adam = {lr, beta1, beta2, adam_eps};
  o.seed = seed;
  return o;
}

void RunConfig::validate() const {
  if (channels.size() != 4) throw ConfigError("channels needs four entries: c_in,c_t1,c_s,c_t2");
  if (channels[0] != 1) throw ConfigError("channels: c_in must be 1 (traffic is a single feature)");
  if (precision != "f64") throw ConfigError("precision '" + precision + "' unsupported; only f64 is built");
  if (sigma_sq && !(*sigma_sq > 0.0)) throw ConfigError("sigma_sq must be positive");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
  if (!(lr >= 0.0)) throw ConfigError("lr must not be negative");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (test_days == 0 || val_days == 0) throw ConfigError("test_days and val_days must be at least 1");
  if (!(hist_bin_width > 0.0)) throw ConfigError("hist_bin_width must be positive");
  for (const auto* r : {&range_start, &range_end}) {
    if (!r->empty() && !parse_timestamp(*r)) throw ConfigError("bad timestamp '" + *r + "'");
  }
  try {
    model_config().validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace stflow::run
