#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "softquad/error.hpp"
#include "softquad/simulator.hpp"
#include "softquad/tactile.hpp"

using namespace softquad;

namespace {

HallSensorModel quiet_model() {
  HallSensorModel m;
  m.noise_std = 0.0;
  return m;
}

// Trapezoid area between loading and unloading traces of hall1 over force.
double loop_area(const HallSensorModel& m, double f_peak, double rate, double dt) {
  HallState st;
  std::vector<std::pair<double, double>> up, down;
  const auto shares = load_shares(false, 0);
  const int n = static_cast<int>(std::lround(f_peak / (rate * dt)));
  for (int k = 0; k <= n; ++k) {
    const double f = f_peak * k / n;
    up.push_back({f, hall_signal(f, m, st, dt, shares, nullptr).readings[0]});
  }
  for (int k = n; k >= 0; --k) {
    const double f = f_peak * k / n;
    down.push_back({f, hall_signal(f, m, st, dt, shares, nullptr).readings[0]});
  }
  double a = 0.0;
  for (std::size_t i = 1; i < up.size(); ++i)
    a -= 0.5 * (up[i].second + up[i - 1].second) * (up[i].first - up[i - 1].first);
  for (std::size_t i = 1; i < down.size(); ++i)
    a -= 0.5 * (down[i].second + down[i - 1].second) * (down[i].first - down[i - 1].first);
  return a;
}

const PressCycleDataset& default_dataset() {
  static const PressCycleDataset d = generate_calibration_data(HallSensorModel{}, CalibrationProtocol{}, 42);
  return d;
}

}  // namespace

TEST_CASE("hall signal at rest equals the dipole field at the rest gap") {
  const HallSensorModel m = quiet_model();
  HallState st;
  const HallSample s = hall_signal(0.0, m, st, 0.02, load_shares(false, 0), nullptr);
  const double b0 = 1e3 * 1e-7 * 2 * m.dipole_moment / std::pow(m.rest_gap[0], 3);
  for (double r : s.readings) CHECK(r == doctest::Approx(b0).epsilon(1e-12));
  CHECK_FALSE(s.saturated);
  CHECK_THROWS_AS(hall_signal(-1.0, m, st, 0.02, load_shares(false, 0), nullptr), ModelError);
}

TEST_CASE("hall signal is monotone along a press ramp and symmetric under full contact") {
  HallSensorModel m = quiet_model();
  m.drift_rate = 0.0;
  HallState st;
  double prev = 0.0;
  for (int k = 0; k <= 300; ++k) {
    const HallSample s = hall_signal(0.1 * k, m, st, 0.02, load_shares(false, 0), nullptr);
    CHECK(s.readings[0] >= prev);
    CHECK(s.readings[0] == s.readings[1]);
    CHECK(s.readings[1] == s.readings[2]);
    prev = s.readings[0];
  }
}

TEST_CASE("partial contact loads one magnet more") {
  const HallSensorModel m = quiet_model();
  HallState st;
  const HallSample s = hall_signal(10.0, m, st, 0.02, load_shares(true, 1), nullptr);
  CHECK(s.readings[1] > s.readings[0]);
  CHECK(s.readings[0] == s.readings[2]);
}

TEST_CASE("hall signal saturates and flags excessive compression") {
  const HallSensorModel m = quiet_model();
  HallState st;
  const HallSample s = hall_signal(1e4, m, st, 0.02, load_shares(false, 0), nullptr);
  CHECK(s.saturated);
  for (double r : s.readings) CHECK(std::isfinite(r));
}

TEST_CASE("loading and unloading traces enclose a positive loop") {
  HallSensorModel m = quiet_model();
  m.drift_rate = 0.0;
  CHECK(loop_area(m, 25.0, 25.0, 0.02) > 0.0);
  m.hysteresis = 0.0;
  CHECK(std::abs(loop_area(m, 25.0, 25.0, 0.02)) < 1e-9);
}

TEST_CASE("default calibration protocol covers the required conditions") {
  const PressCycleDataset& d = default_dataset();
  CHECK(d.cycle_count() == 420);
  std::set<int> cups;
  std::set<double> velocities;
  std::set<bool> modes;
  std::set<int> val_cycles, all_cycles;
  for (const auto& r : d.records) {
    cups.insert(r.cup);
    velocities.insert(r.velocity);
    modes.insert(r.partial);
    all_cycles.insert(r.cycle);
    if (r.validation) val_cycles.insert(r.cycle);
  }
  CHECK(cups.size() == 4);
  CHECK(velocities.size() >= 2);
  CHECK(modes.size() == 2);
  CHECK(val_cycles.size() == 84);
  // The last sample of every cycle is unloaded and reads the cup's baseline
  // within noise.
  const HallSensorModel nominal;
  const double b0 = dipole_field_mt(nominal.dipole_moment, nominal.rest_gap[0]);
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < d.records.size(); ++i) {
    const auto& r = d.records[i];
    if (r.cycle != d.records[i + 1].cycle) {
      CHECK(r.force == 0.0);
      for (double h : r.readings) worst = std::max(worst, std::abs(h - b0));
    }
  }
  // Per-cup gap spread of 3% moves the baseline by up to about 9%.
  CHECK(worst < 0.1 * b0 + 5 * nominal.noise_std);
}

TEST_CASE("calibration data is reproducible from its seed") {
  CalibrationProtocol p;
  p.cycles = 20;
  const auto a = generate_calibration_data(HallSensorModel{}, p, 5);
  const auto b = generate_calibration_data(HallSensorModel{}, p, 5);
  const auto c = generate_calibration_data(HallSensorModel{}, p, 6);
  REQUIRE(a.records.size() == b.records.size());
  bool same = true;
  for (std::size_t i = 0; i < a.records.size(); ++i)
    same = same && a.records[i].readings == b.records[i].readings && a.records[i].force == b.records[i].force;
  CHECK(same);
  CHECK(a.records[5].readings != c.records[5].readings);
}

TEST_CASE("dataset file round trip") {
  CalibrationProtocol p;
  p.cycles = 8;
  const auto d = generate_calibration_data(HallSensorModel{}, p, 3);
  const auto path = (std::filesystem::temp_directory_path() / "softquad_tactile.txt").string();
  write_dataset(d, path);
  const auto back = read_dataset(path);
  REQUIRE(back.records.size() == d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    CHECK(back.records[i].readings == d.records[i].readings);
    CHECK(back.records[i].force == d.records[i].force);
    CHECK(back.records[i].partial == d.records[i].partial);
    CHECK(back.records[i].validation == d.records[i].validation);
  }
  std::remove(path.c_str());
}

TEST_CASE("noiseless data: estimator error below 1% of range") {
  HallSensorModel m = quiet_model();
  m.hysteresis = 0.0;
  m.drift_rate = 0.0;
  CalibrationProtocol p;
  p.cup_variation = 0.0;
  const auto d = generate_calibration_data(m, p, 8);
  EstimatorReport rep;
  train_force_estimator(d, EstimatorTraining{}, &rep);
  MESSAGE("noiseless rmse " << rep.rmse << " N of range " << rep.force_range);
  CHECK(rep.rmse < 0.01 * rep.force_range);
}

TEST_CASE("default data: estimator beats linear regression and stays under 5% of range") {
  EstimatorReport rep;
  const ForceEstimator est = train_force_estimator(default_dataset(), EstimatorTraining{}, &rep);
  MESSAGE("rmse " << rep.rmse << " N, linear " << rep.baseline_rmse << " N, range " << rep.force_range
                  << " N, r2 " << rep.r2);
  CHECK(rep.rmse < 0.05 * rep.force_range);
  CHECK(rep.rmse < rep.baseline_rmse);
  CHECK(rep.r2 > 0.95);

  // Baseline readings map to roughly zero force; a 10 N press maps to 10 N.
  HallSensorModel m;
  m.noise_std = 0.0;
  HallState st;
  const auto rest = hall_signal(0.0, m, st, 0.02, load_shares(false, 0), nullptr);
  CHECK(est.estimate(rest.readings) < 2 * rep.rmse);
  HallState st2;
  HallSample press;
  for (int k = 0; k < 100; ++k) press = hall_signal(10.0, m, st2, 0.02, load_shares(false, 0), nullptr);
  CHECK(est.estimate(press.readings) == doctest::Approx(10.0).epsilon(rep.rmse / 10.0 + 0.02));
  const HallReadings huge{1e6, 1e6, 1e6};
  CHECK(std::isfinite(est.estimate(huge)));
  CHECK(est.estimate(huge) >= 0.0);
  CHECK(est.estimate(press.readings) == est.estimate(press.readings));

  const auto path = (std::filesystem::temp_directory_path() / "softquad_estimator.bin").string();
  save_estimator(est, path);
  const ForceEstimator back = load_estimator(path);
  CHECK(back.estimate(press.readings) == est.estimate(press.readings));
  std::remove(path.c_str());
}

TEST_CASE("constant-force data: estimator predicts the constant") {
  PressCycleDataset d;
  std::mt19937_64 rng(4);
  HallSensorModel m;
  HallState st;
  for (int k = 0; k < 2000; ++k) {
    const auto s = hall_signal(7.5, m, st, 0.02, load_shares(false, 0), &rng);
    d.records.push_back({k / 10, 0, 2.0, false, s.readings, 7.5, k % 5 == 0});
  }
  EstimatorReport rep;
  const ForceEstimator est = train_force_estimator(d, EstimatorTraining{}, &rep);
  double mean = 0.0;
  int n = 0;
  for (const auto& r : d.records)
    if (r.validation) {
      mean += est.estimate(r.readings);
      ++n;
    }
  MESSAGE("constant: mean " << mean / n << " rmse " << rep.rmse);
  CHECK(mean / n == doctest::Approx(7.5).epsilon(0.01));
  CHECK(rep.rmse < 0.1);
}

TEST_CASE("standing robot: estimated GRF tracks the true contact force") {
  EstimatorReport rep;
  const ForceEstimator est = train_force_estimator(default_dataset(), EstimatorTraining{}, &rep);
  const RobotModel model = default_robot_model();
  SimConfig cfg;
  Simulator sim(model, cfg);
  sim.set_actuation({}, {0.8, 0.8, 0.8, 0.8});
  sim.place_on_ground(1.0);
  std::mt19937_64 rng(9);
  std::vector<HallState> states(kNumLegs);
  double err = 0.0;
  int n = 0;
  for (int k = 0; k < 250; ++k) {
    sim.run_inner_period();
    for (int l = 0; l < kNumLegs; ++l) {
      const double f = sim.mean_grf()[l];
      const auto s = hall_signal(f, HallSensorModel{}, states[l], cfg.pneumatic.dt_inner, load_shares(false, 0), &rng);
      if (k > 50) {
        err += std::abs(est.estimate(s.readings) - f);
        ++n;
      }
    }
  }
  CHECK(err / n < rep.rmse);
}
