#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "imputeformer/errors.hpp"

namespace imputeformer::data {

// N x steps boolean grid; true marks a present/selected cell.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Dataset {
  Eigen::MatrixXd values;  // N x steps; meaningless where !available
  Mask available;          // ground truth exists
  int steps_per_day = 24;
  std::vector<std::string> sensor_ids;

  Eigen::Index nodes() const { return values.rows(); }
  Eigen::Index steps() const { return values.cols(); }
};

// Per-sensor standardization fitted on observed cells of a time range.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  std::vector<Eigen::Index> constant_sensors;  // std forced to 1

  static Standardizer fit(const Dataset& ds, const Mask& observed, Eigen::Index begin, Eigen::Index end);
  double normalize(Eigen::Index sensor, double v) const { return (v - mean(sensor)) / std(sensor); }
  double denormalize(Eigen::Index sensor, double z) const { return z * std(sensor) + mean(sensor); }
};

enum class MissingKind { point, block };

struct WhitenSpec {
  enum class Mode { fixed, combined };
  Mode mode = Mode::fixed;
  double rate = 0.25;
  std::vector<double> combined_rates{0.25, 0.5, 0.75};

  void validate() const;
  static WhitenSpec fixed_rate(double r) { return {Mode::fixed, r, {}}; }
  static WhitenSpec combined() { return {Mode::combined, 0.0, {0.25, 0.5, 0.75}}; }
};

struct MissingPatternSpec {
  MissingKind kind = MissingKind::point;
  double point_rate = 0.25;
  double drop_rate = 0.05;
  double failure_prob = 0.0015;
  int min_duration = 12;
  int max_duration = 48;
  WhitenSpec whiten;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Window {
  Eigen::MatrixXd x;  // normalized, zero outside input cells
  Eigen::MatrixXd y;  // normalized ground truth, zero where unavailable
  Mask observed;
  Mask eval;
  Mask whiten;
  Eigen::Index start_step = 0;

  Mask input() const { return observed && !whiten; }
  Eigen::Index nodes() const { return observed.rows(); }
  Eigen::Index length() const { return observed.cols(); }
};

struct TimeRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
  Eigen::Index size() const { return end - begin; }
};

// Chronological train/validation/test split (default 70/10/20).
std::array<TimeRange, 3> split_time(Eigen::Index steps, double train_frac = 0.7, double val_frac = 0.1);

// values = U V^T + noise * std(U V^T) * eps, where V's columns are sums of
// daily harmonics with random phases. With noise = 0 the rank is <= rank.
Dataset synth_lowrank(Eigen::Index nodes, Eigen::Index steps, Eigen::Index rank, double noise, int steps_per_day,
                      std::uint64_t seed);

// Observation mask after simulating the missing pattern on available cells.
Mask apply_missing(const Dataset& ds, const MissingPatternSpec& spec);

struct WindowOptions {
  Eigen::Index length = 24;
  Eigen::Index stride = 24;
  TimeRange range;  // empty range = whole series
};

// Sliding windows over `range`; windows running past the end are skipped.
std::vector<Window> make_windows(const Dataset& ds, const Mask& observed, const Standardizer& scaler,
                                 const WindowOptions& options, const WhitenSpec& whiten, std::uint64_t seed);

// Draws a fresh whitening mask among observed cells and refreshes x.
void resample_whiten(Window& w, const WhitenSpec& spec, std::mt19937_64& rng);

// --- CSV ------------------------------------------------------------------
// One row per time step, one column per sensor, header = sensor ids,
// empty cell = missing.

Dataset load_csv(const std::filesystem::path& path, int steps_per_day = 24);
void save_csv(const std::filesystem::path& path, const Dataset& ds);
Dataset parse_csv(const std::string& text, int steps_per_day = 24);
std::string format_csv(const Dataset& ds);

// Same layout with 0/1 cells.
Mask load_mask_csv(const std::filesystem::path& path);
void save_mask_csv(const std::filesystem::path& path, const Mask& mask, const std::vector<std::string>& sensor_ids);

// Writes a matrix (N x steps) with the dataset orientation; all cells present.
void save_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                     const std::vector<std::string>& sensor_ids);

std::vector<std::string> default_sensor_ids(Eigen::Index n);

// Shortest round-trip decimal (17 significant digits at most).
std::string format_double(double v);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace imputeformer::data
