#pragma once

// Synthetic Hall-effect tactile sensing for the suction cups: a magnet
// dipole signal model with viscoelastic hysteresis, drift and noise, a
// press-cycle calibration data generator, and the learned force estimator.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "softquad/nn.hpp"

namespace softquad {

inline constexpr int kHallSensors = 3;
using HallReadings = std::array<double, kHallSensors>;

struct HallSensorModel {
  std::array<double, kHallSensors> rest_gap{0.004, 0.004, 0.004};  // m, magnet to sensor at zero load
  double dipole_moment = 0.01;      // A·m²
  double cup_stiffness = 12500.0;   // N/m
  double noise_std = 0.2;           // mT
  double hysteresis = 0.15;         // weight of the lagged displacement, [0, 1)
  double hysteresis_time = 0.1;     // s, lag time constant
  double drift_rate = 0.02;         // mT/s at 10 N sustained load
  double drift_relax_time = 5.0;    // s, drift decay when unloaded
  double min_gap_fraction = 0.1;    // saturation: closest allowed approach
};

void validate(const HallSensorModel& m);

/// Per-magnet load share. Full contact loads all magnets equally; partial
/// contact puts 60% on one magnet.
std::array<double, kHallSensors> load_shares(bool partial, int heavy_magnet);

struct HallState {
  std::array<double, kHallSensors> lagged{};  // m, hysteresis memory
  double drift = 0.0;                         // mT
};

struct HallSample {
  HallReadings readings{};
  bool saturated = false;
};

/// Field magnitude (mT) on the axis of a dipole at distance r.
double dipole_field_mt(double moment, double r);

/// Advances the sensor by dt under normal force f_n and returns the readings.
/// `rng` may be null for noise-free output. Throws ModelError for f_n < 0.
HallSample hall_signal(double f_n, const HallSensorModel& model, HallState& state, double dt,
                       const std::array<double, kHallSensors>& shares, std::mt19937_64* rng);

struct PressRecord {
  int cycle = 0;
  int cup = 0;
  double velocity = 0.0;  // mm/s, pressing speed
  bool partial = false;
  HallReadings readings{};
  double force = 0.0;     // N, reference force
  bool validation = false;
};

struct CalibrationProtocol {
  int cycles = 420;
  int cups = 4;
  std::vector<double> velocities{2.0, 8.0};  // mm/s
  double partial_fraction = 0.5;
  double force_min = 4.0;   // N, peak force range of a cycle
  double force_max = 30.0;
  double hold_time = 0.5;   // s at peak
  double rest_time = 1.0;   // s unloaded after each cycle
  double sample_rate = 50.0;
  double validation_fraction = 0.2;
  double cup_variation = 0.03;  // relative spread of per-cup gap and stiffness
};

struct PressCycleDataset {
  std::vector<PressRecord> records;
  double force_range() const;
  int cycle_count() const;
};

/// Per-cup sensor instances with manufacturing spread drawn from `rng`.
std::vector<HallSensorModel> make_cup_models(const HallSensorModel& nominal, int cups, double variation,
                                             std::mt19937_64& rng);

PressCycleDataset generate_calibration_data(const HallSensorModel& nominal, const CalibrationProtocol& protocol,
                                            std::uint64_t seed);

/// Columnar text with a commented header line.
void write_dataset(const PressCycleDataset& data, const std::string& path);
PressCycleDataset read_dataset(const std::string& path);

struct EstimatorReport {
  double rmse = 0.0;         // N, validation split
  double r2 = 0.0;
  double force_range = 0.0;  // N
  double baseline_rmse = 0.0;  // linear least squares on the same split
  int train_samples = 0;
  int validation_samples = 0;
};

/// Input feature of the estimator: log of the field magnitude.
double estimator_feature(double reading_mt);

struct ForceEstimator {
  nn::Mlp<double> net;
  std::array<double, kHallSensors> input_mean{};
  std::array<double, kHallSensors> input_scale{1, 1, 1};
  double output_scale = 1.0;

  /// Single forward pass, clamped at zero.
  double estimate(const HallReadings& r) const;
};

struct EstimatorTraining {
  std::vector<int> hidden{32, 32};
  int steps = 6000;
  int batch = 256;
  double lr = 3e-3;
  double final_lr = 1e-4;
  std::uint64_t seed = 7;
};

struct LinearBaseline {
  std::array<double, kHallSensors + 1> coef{};  // weights then bias
  double predict(const HallReadings& r) const;
};

LinearBaseline fit_linear_baseline(const PressCycleDataset& data);

/// Trains on the training split; the report is computed on the validation
/// split. Throws TrainingError when the loss turns non-finite.
ForceEstimator train_force_estimator(const PressCycleDataset& data, const EstimatorTraining& cfg,
                                     EstimatorReport* report = nullptr);

double estimate_grf(const ForceEstimator& est, const HallReadings& r);

void save_estimator(const ForceEstimator& est, const std::string& path);
ForceEstimator load_estimator(const std::string& path);

}  // namespace softquad
