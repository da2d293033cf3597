#include "imputeformer/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace imputeformer::data {

namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError(std::string(what) + " must lie in [0,1], got " + std::to_string(p));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  if (line.empty()) cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> read_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Table of cells: rows = time steps, cols = sensors, header kept apart.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable parse_table(const std::string& text) {
  const auto lines = read_lines(text);
  if (lines.empty()) throw ParseError("csv: missing header row");
  CsvTable t;
  for (const auto& h : split_line(lines[0])) t.header.push_back(trim(h));
  for (std::size_t l = 1; l < lines.size(); ++l) {
    auto cells = split_line(lines[l]);
    if (cells.size() != t.header.size()) {
      throw ParseError("csv: line " + std::to_string(l + 1) + " has " + std::to_string(cells.size()) +
                       " columns, expected " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

double parse_number(const std::string& raw, std::size_t line, std::size_t col) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError("csv: line " + std::to_string(line) + ", column " + std::to_string(col) +
                     ": not a finite number: '" + s + "'");
  }
  return v;
}

}  // namespace

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out << text;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

// --- specs ----------------------------------------------------------------

void WhitenSpec::validate() const {
  if (mode == Mode::fixed) {
    check_probability(rate, "whiten rate");
  } else {
    if (combined_rates.empty()) throw ContractError("combined whitening needs at least one rate");
    for (double r : combined_rates) check_probability(r, "whiten rate");
  }
}

void MissingPatternSpec::validate() const {
  check_probability(point_rate, "point_rate");
  check_probability(drop_rate, "drop_rate");
  check_probability(failure_prob, "failure_prob");
  if (min_duration < 1 || min_duration > max_duration) {
    throw ContractError("block duration bounds must satisfy 1 <= lo <= hi");
  }
  whiten.validate();
}

// --- normalization --------------------------------------------------------

Standardizer Standardizer::fit(const Dataset& ds, const Mask& observed, Eigen::Index begin, Eigen::Index end) {
  Standardizer s;
  const Eigen::Index n = ds.nodes();
  s.mean = Eigen::VectorXd::Zero(n);
  s.std = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0, sq = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index t = begin; t < end; ++t) {
      if (!observed(i, t) || !ds.available(i, t)) continue;
      sum += ds.values(i, t);
      ++count;
    }
    if (count == 0) {
      s.constant_sensors.push_back(i);
      continue;
    }
    const double mean = sum / static_cast<double>(count);
    for (Eigen::Index t = begin; t < end; ++t)
      if (observed(i, t) && ds.available(i, t)) sq += (ds.values(i, t) - mean) * (ds.values(i, t) - mean);
    const double sd = std::sqrt(sq / static_cast<double>(count));
    s.mean(i) = mean;
    if (sd > 1e-12) {
      s.std(i) = sd;
    } else {
      s.constant_sensors.push_back(i);
    }
  }
  return s;
}

// --- generation -----------------------------------------------------------

std::array<TimeRange, 3> split_time(Eigen::Index steps, double train_frac, double val_frac) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0) {
    throw ContractError("split fractions must satisfy train > 0, val >= 0, train + val < 1");
  }
  const auto train_end = static_cast<Eigen::Index>(std::llround(train_frac * static_cast<double>(steps)));
  const auto val_end = train_end + static_cast<Eigen::Index>(std::llround(val_frac * static_cast<double>(steps)));
  return {TimeRange{0, train_end}, TimeRange{train_end, val_end}, TimeRange{val_end, steps}};
}

Dataset synth_lowrank(Eigen::Index nodes, Eigen::Index steps, Eigen::Index rank, double noise, int steps_per_day,
                      std::uint64_t seed) {
  if (rank < 1 || rank > std::min(nodes, steps)) {
    throw ContractError("synth_lowrank: rank " + std::to_string(rank) + " must lie in [1, min(N, steps)]");
  }
  if (noise < 0.0) throw ContractError("synth_lowrank: noise must be non-negative");
  if (steps_per_day < 1) throw ContractError("synth_lowrank: steps_per_day must be >= 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  // Enough harmonics that `rank` generic factors are linearly independent.
  const Eigen::Index harmonics = std::max<Eigen::Index>(3, rank);
  Eigen::MatrixXd factors(steps, rank);
  for (Eigen::Index j = 0; j < rank; ++j) {
    std::vector<double> amp(static_cast<std::size_t>(harmonics)), ph(static_cast<std::size_t>(harmonics));
    for (Eigen::Index k = 0; k < harmonics; ++k) {
      amp[static_cast<std::size_t>(k)] = gauss(rng) / static_cast<double>(k + 1);
      ph[static_cast<std::size_t>(k)] = phase(rng);
    }
    for (Eigen::Index t = 0; t < steps; ++t) {
      double v = 0.0;
      for (Eigen::Index k = 0; k < harmonics; ++k) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(k + 1) / steps_per_day;
        v += amp[static_cast<std::size_t>(k)] * std::sin(w * static_cast<double>(t) + ph[static_cast<std::size_t>(k)]);
      }
      factors(t, j) = v;
    }
  }
  Eigen::MatrixXd loadings(nodes, rank);
  for (auto& v : loadings.reshaped()) v = gauss(rng);

  Dataset ds;
  ds.values = loadings * factors.transpose();
  if (noise > 0.0) {
    const double mean = ds.values.mean();
    const double sd = std::sqrt((ds.values.array() - mean).square().mean());
    for (auto& v : ds.values.reshaped()) v += noise * sd * gauss(rng);
  }
  ds.available = Mask::Constant(nodes, steps, true);
  ds.steps_per_day = steps_per_day;
  ds.sensor_ids = default_sensor_ids(nodes);
  return ds;
}

Mask apply_missing(const Dataset& ds, const MissingPatternSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mask obs = ds.available;
  const Eigen::Index n = ds.nodes(), steps = ds.steps();

  const double drop = spec.kind == MissingKind::point ? spec.point_rate : spec.drop_rate;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index t = 0; t < steps; ++t)
      if (u(rng) < drop) obs(i, t) = false;

  if (spec.kind == MissingKind::block) {
    std::uniform_int_distribution<int> duration(spec.min_duration, spec.max_duration);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index t = 0; t < steps; ++t) {
        if (u(rng) >= spec.failure_prob) continue;
        const Eigen::Index end = std::min<Eigen::Index>(steps, t + duration(rng));
        for (Eigen::Index s = t; s < end; ++s) obs(i, s) = false;
      }
    }
  }
  return obs;
}

void resample_whiten(Window& w, const WhitenSpec& spec, std::mt19937_64& rng) {
  double rate = spec.rate;
  if (spec.mode == WhitenSpec::Mode::combined) {
    std::uniform_int_distribution<std::size_t> pick(0, spec.combined_rates.size() - 1);
    rate = spec.combined_rates[pick(rng)];
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  w.whiten = Mask::Constant(w.nodes(), w.length(), false);
  for (Eigen::Index i = 0; i < w.nodes(); ++i)
    for (Eigen::Index t = 0; t < w.length(); ++t) {
      const bool draw = u(rng) < rate;
      w.whiten(i, t) = w.observed(i, t) && draw;
    }
  w.x = (w.observed && !w.whiten).select(w.y.array(), 0.0).matrix();
}

std::vector<Window> make_windows(const Dataset& ds, const Mask& observed, const Standardizer& scaler,
                                 const WindowOptions& options, const WhitenSpec& whiten, std::uint64_t seed) {
  whiten.validate();
  if (options.length < 1 || options.length > ds.steps()) {
    throw ContractError("make_windows: window length " + std::to_string(options.length) + " exceeds series of " +
                        std::to_string(ds.steps()) + " steps");
  }
  if (options.stride < 1) throw ContractError("make_windows: stride must be >= 1");
  if (observed.rows() != ds.nodes() || observed.cols() != ds.steps()) {
    throw DimensionError("make_windows: observation mask does not match dataset");
  }
  TimeRange range = options.range;
  if (range.size() <= 0) range = {0, ds.steps()};

  std::mt19937_64 rng(seed);
  std::vector<Window> out;
  const Eigen::Index n = ds.nodes(), len = options.length;
  for (Eigen::Index start = range.begin; start + len <= range.end; start += options.stride) {
    Window w;
    w.start_step = start;
    w.observed = observed.block(0, start, n, len) && ds.available.block(0, start, n, len);
    w.eval = ds.available.block(0, start, n, len) && !observed.block(0, start, n, len);
    w.y = Eigen::MatrixXd::Zero(n, len);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index t = 0; t < len; ++t)
        if (ds.available(i, start + t)) w.y(i, t) = scaler.normalize(i, ds.values(i, start + t));
    resample_whiten(w, whiten, rng);
    out.push_back(std::move(w));
  }
  return out;
}

// --- CSV ------------------------------------------------------------------

std::vector<std::string> default_sensor_ids(Eigen::Index n) {
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
  return ids;
}

Dataset parse_csv(const std::string& text, int steps_per_day) {
  const CsvTable t = parse_table(text);
  const auto n = static_cast<Eigen::Index>(t.header.size());
  const auto steps = static_cast<Eigen::Index>(t.rows.size());
  Dataset ds;
  ds.sensor_ids = t.header;
  ds.steps_per_day = steps_per_day;
  ds.values = Eigen::MatrixXd::Zero(n, steps);
  ds.available = Mask::Constant(n, steps, false);
  for (Eigen::Index s = 0; s < steps; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& cell = t.rows[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
      if (trim(cell).empty()) continue;
      ds.values(i, s) = parse_number(cell, static_cast<std::size_t>(s) + 2, static_cast<std::size_t>(i) + 1);
      ds.available(i, s) = true;
    }
  }
  return ds;
}

std::string format_csv(const Dataset& ds) {
  std::string out;
  const auto ids = ds.sensor_ids.empty() ? default_sensor_ids(ds.nodes()) : ds.sensor_ids;
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + ids[i];
  out += '\n';
  for (Eigen::Index s = 0; s < ds.steps(); ++s) {
    for (Eigen::Index i = 0; i < ds.nodes(); ++i) {
      if (i) out += ',';
      if (ds.available(i, s)) out += format_double(ds.values(i, s));
    }
    out += '\n';
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path, int steps_per_day) { return parse_csv(read_file(path), steps_per_day); }

void save_csv(const std::filesystem::path& path, const Dataset& ds) { write_file(path, format_csv(ds)); }

Mask load_mask_csv(const std::filesystem::path& path) {
  const CsvTable t = parse_table(read_file(path));
  const auto n = static_cast<Eigen::Index>(t.header.size());
  const auto steps = static_cast<Eigen::Index>(t.rows.size());
  Mask m(n, steps);
  for (Eigen::Index s = 0; s < steps; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::string cell = trim(t.rows[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)]);
      if (cell != "0" && cell != "1") {
        throw ParseError("mask csv: line " + std::to_string(s + 2) + ", column " + std::to_string(i + 1) +
                         ": expected 0 or 1, got '" + cell + "'");
      }
      m(i, s) = cell == "1";
    }
  }
  return m;
}

void save_mask_csv(const std::filesystem::path& path, const Mask& mask, const std::vector<std::string>& sensor_ids) {
  std::string out;
  const auto ids = sensor_ids.empty() ? default_sensor_ids(mask.rows()) : sensor_ids;
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + ids[i];
  out += '\n';
  for (Eigen::Index s = 0; s < mask.cols(); ++s) {
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
      if (i) out += ',';
      out += mask(i, s) ? '1' : '0';
    }
    out += '\n';
  }
  write_file(path, out);
}

void save_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                     const std::vector<std::string>& sensor_ids) {
  Dataset ds;
  ds.values = m;
  ds.available = Mask::Constant(m.rows(), m.cols(), true);
  ds.sensor_ids = sensor_ids;
  save_csv(path, ds);
}

}  // namespace imputeformer::data
