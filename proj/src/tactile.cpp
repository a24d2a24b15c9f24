#include "softquad/tactile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "softquad/checkpoint.hpp"
#include "softquad/error.hpp"

namespace softquad {

namespace {
constexpr double kMu0Over4Pi = 1e-7;
constexpr double kDriftReferenceForce = 10.0;  // N
constexpr double kMinFeatureField = 1e-3;     // mT
constexpr char kDatasetHeader[] =
    "# cycle cup velocity_mm_s contact hall1_mT hall2_mT hall3_mT force_N split";
}  // namespace

void validate(const HallSensorModel& m) {
  if (!(m.cup_stiffness > 0)) throw ModelError("cup stiffness must be positive");
  if (!(m.noise_std >= 0)) throw ModelError("sensor noise must be non-negative");
  if (!(m.dipole_moment > 0)) throw ModelError("dipole moment must be positive");
  for (double g : m.rest_gap)
    if (!(g > 0)) throw ModelError("magnet rest gap must be positive");
  if (!(m.hysteresis >= 0 && m.hysteresis < 1)) throw ModelError("hysteresis weight must lie in [0, 1)");
  if (!(m.hysteresis_time > 0 && m.drift_relax_time > 0)) throw ModelError("sensor time constants must be positive");
}

std::array<double, kHallSensors> load_shares(bool partial, int heavy_magnet) {
  if (!partial) return {1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::array<double, kHallSensors> s{0.2, 0.2, 0.2};
  s[heavy_magnet % kHallSensors] = 0.6;
  return s;
}

double dipole_field_mt(double moment, double r) { return 1e3 * kMu0Over4Pi * 2.0 * moment / (r * r * r); }

HallSample hall_signal(double f_n, const HallSensorModel& model, HallState& state, double dt,
                       const std::array<double, kHallSensors>& shares, std::mt19937_64* rng) {
  if (!(f_n >= 0.0)) throw ModelError("hall_signal: normal force must be non-negative");
  HallSample out;
  const double lag = 1.0 - std::exp(-dt / model.hysteresis_time);
  state.drift += dt * (model.drift_rate * f_n / kDriftReferenceForce - state.drift / model.drift_relax_time);
  std::normal_distribution<double> noise(0.0, model.noise_std);
  for (int j = 0; j < kHallSensors; ++j) {
    const double d = kHallSensors * shares[j] * f_n / model.cup_stiffness;
    state.lagged[j] += lag * (d - state.lagged[j]);
    const double d_eff = (1.0 - model.hysteresis) * d + model.hysteresis * state.lagged[j];
    double r = model.rest_gap[j] - d_eff;
    const double r_min = model.min_gap_fraction * model.rest_gap[j];
    if (r < r_min) {
      r = r_min;
      out.saturated = true;
    }
    out.readings[j] = dipole_field_mt(model.dipole_moment, r) + state.drift;
    if (rng && model.noise_std > 0) out.readings[j] += noise(*rng);
  }
  return out;
}

double PressCycleDataset::force_range() const {
  if (records.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(records.begin(), records.end(),
                                      [](const auto& a, const auto& b) { return a.force < b.force; });
  return hi->force - lo->force;
}

int PressCycleDataset::cycle_count() const {
  int n = 0;
  for (const auto& r : records) n = std::max(n, r.cycle + 1);
  return n;
}

std::vector<HallSensorModel> make_cup_models(const HallSensorModel& nominal, int cups, double variation,
                                             std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-variation, variation);
  std::vector<HallSensorModel> out;
  for (int c = 0; c < cups; ++c) {
    HallSensorModel m = nominal;
    for (double& g : m.rest_gap) g *= 1.0 + u(rng);
    m.cup_stiffness *= 1.0 + u(rng);
    out.push_back(m);
  }
  return out;
}

PressCycleDataset generate_calibration_data(const HallSensorModel& nominal, const CalibrationProtocol& p,
                                            std::uint64_t seed) {
  validate(nominal);
  if (p.cycles < 1 || p.cups < 1 || p.velocities.empty() || !(p.sample_rate > 0))
    throw ModelError("calibration protocol needs cycles, cups, velocities and a sample rate");
  std::mt19937_64 rng(seed);
  const auto cups = make_cup_models(nominal, p.cups, p.cup_variation, rng);
  std::vector<HallState> states(p.cups);

  std::vector<int> order(p.cycles);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_val = static_cast<int>(std::lround(p.validation_fraction * p.cycles));
  std::vector<bool> held_out(p.cycles, false);
  for (int i = 0; i < n_val; ++i) held_out[order[i]] = true;

  std::uniform_real_distribution<double> peak(p.force_min, p.force_max);
  std::uniform_int_distribution<int> magnet(0, kHallSensors - 1);
  std::bernoulli_distribution contact(p.partial_fraction);
  const double dt = 1.0 / p.sample_rate;
  const int nv = static_cast<int>(p.velocities.size());
  PressCycleDataset data;
  for (int c = 0; c < p.cycles; ++c) {
    const int cup = c % p.cups;
    const int vi = (c / p.cups) % nv;
    const double velocity = p.velocities[vi];
    const bool partial = contact(rng);
    const auto shares = load_shares(partial, magnet(rng));
    const double f_peak = peak(rng);
    const double rate = cups[cup].cup_stiffness * velocity * 1e-3;  // N/s
    const double ramp = f_peak / rate;
    const double total = 2 * ramp + p.hold_time + p.rest_time;
    const int n = static_cast<int>(std::ceil(total / dt));
    for (int k = 0; k < n; ++k) {
      const double t = (k + 1) * dt;
      double f;
      if (t < ramp) f = rate * t;
      else if (t < ramp + p.hold_time) f = f_peak;
      else if (t < 2 * ramp + p.hold_time) f = f_peak - rate * (t - ramp - p.hold_time);
      else f = 0.0;
      f = std::max(0.0, f);
      const HallSample s = hall_signal(f, cups[cup], states[cup], dt, shares, &rng);
      data.records.push_back({c, cup, velocity, partial, s.readings, f, held_out[c]});
    }
  }
  return data;
}

void write_dataset(const PressCycleDataset& data, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  f << kDatasetHeader << "\n" << std::setprecision(17);
  for (const auto& r : data.records) {
    f << r.cycle << ' ' << r.cup << ' ' << r.velocity << ' ' << (r.partial ? "partial" : "full");
    for (double h : r.readings) f << ' ' << h;
    f << ' ' << r.force << ' ' << (r.validation ? "val" : "train") << '\n';
  }
  if (!f) throw ConfigError("write failed for " + path);
}

PressCycleDataset read_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line != kDatasetHeader) throw ConfigError(path + ": missing dataset header");
  PressCycleDataset data;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream in(line);
    PressRecord r;
    std::string contact, split;
    in >> r.cycle >> r.cup >> r.velocity >> contact;
    for (double& h : r.readings) in >> h;
    in >> r.force >> split;
    if (!in || (contact != "full" && contact != "partial") || (split != "train" && split != "val"))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed record");
    r.partial = contact == "partial";
    r.validation = split == "val";
    data.records.push_back(r);
  }
  return data;
}

double estimator_feature(double reading_mt) { return std::log(std::max(reading_mt, kMinFeatureField)); }

double ForceEstimator::estimate(const HallReadings& r) const {
  Eigen::MatrixXd x(kHallSensors, 1);
  for (int j = 0; j < kHallSensors; ++j) x(j, 0) = (estimator_feature(r[j]) - input_mean[j]) / input_scale[j];
  const double y = net.forward(x)(0, 0) * output_scale;
  return std::isfinite(y) ? std::max(0.0, y) : 0.0;
}

double estimate_grf(const ForceEstimator& est, const HallReadings& r) { return est.estimate(r); }

double LinearBaseline::predict(const HallReadings& r) const {
  double y = coef[kHallSensors];
  for (int j = 0; j < kHallSensors; ++j) y += coef[j] * r[j];
  return y;
}

LinearBaseline fit_linear_baseline(const PressCycleDataset& data) {
  std::vector<const PressRecord*> train;
  for (const auto& r : data.records)
    if (!r.validation) train.push_back(&r);
  if (train.empty()) throw ModelError("linear baseline: empty training split");
  Eigen::MatrixXd A(train.size(), kHallSensors + 1);
  Eigen::VectorXd y(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (int j = 0; j < kHallSensors; ++j) A(i, j) = train[i]->readings[j];
    A(i, kHallSensors) = 1.0;
    y[i] = train[i]->force;
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
  LinearBaseline b;
  for (int j = 0; j <= kHallSensors; ++j) b.coef[j] = c[j];
  return b;
}

ForceEstimator train_force_estimator(const PressCycleDataset& data, const EstimatorTraining& cfg,
                                     EstimatorReport* report) {
  std::vector<const PressRecord*> train, val;
  for (const auto& r : data.records) (r.validation ? val : train).push_back(&r);
  if (train.empty()) throw ModelError("force estimator: empty training split");

  ForceEstimator est;
  for (int j = 0; j < kHallSensors; ++j) {
    double m = 0, s = 0;
    for (const auto* r : train) m += estimator_feature(r->readings[j]);
    m /= train.size();
    for (const auto* r : train) s += (estimator_feature(r->readings[j]) - m) * (estimator_feature(r->readings[j]) - m);
    est.input_mean[j] = m;
    est.input_scale[j] = std::max(std::sqrt(s / train.size()), 1e-9);
  }
  double fmax = 0.0;
  for (const auto* r : train) fmax = std::max(fmax, std::abs(r->force));
  est.output_scale = std::max(fmax, 1e-9);

  std::vector<int> widths{kHallSensors};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(1);
  est.net = nn::Mlp<double>(widths, nn::Activation::Tanh, nn::Activation::Linear);
  std::mt19937_64 rng(cfg.seed);
  est.net.init(rng);
  auto opt = nn::AdamState<double>::for_network(est.net, {cfg.lr});

  const int B = std::min<int>(cfg.batch, static_cast<int>(train.size()));
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  Eigen::MatrixXd x(kHallSensors, B), y(1, B);
  nn::Tape<double> tape;
  for (int step = 0; step < cfg.steps; ++step) {
    for (int b = 0; b < B; ++b) {
      const PressRecord* r = train[pick(rng)];
      for (int j = 0; j < kHallSensors; ++j) x(j, b) = (estimator_feature(r->readings[j]) - est.input_mean[j]) / est.input_scale[j];
      y(0, b) = r->force / est.output_scale;
    }
    const Eigen::MatrixXd out = est.net.forward(x, tape);
    const Eigen::MatrixXd diff = out - y;
    const double loss = diff.squaredNorm() / B;
    if (!std::isfinite(loss))
      throw TrainingError("force estimator: loss became non-finite at step " + std::to_string(step));
    auto g = est.net.zero_gradients();
    est.net.backward(tape, (2.0 / B) * diff, g);
    // Geometric decay from the initial to the final rate.
    opt.cfg.lr = cfg.lr * std::pow(cfg.final_lr / cfg.lr, double(step) / std::max(1, cfg.steps - 1));
    nn::adam_step(opt, est.net, g);
  }

  if (report) {
    const LinearBaseline base = fit_linear_baseline(data);
    double se = 0, se_base = 0, mean = 0;
    for (const auto* r : val) mean += r->force;
    mean /= std::max<std::size_t>(1, val.size());
    double ss = 0;
    for (const auto* r : val) {
      const double e = est.estimate(r->readings) - r->force;
      const double eb = base.predict(r->readings) - r->force;
      se += e * e;
      se_base += eb * eb;
      ss += (r->force - mean) * (r->force - mean);
    }
    const double n = std::max<std::size_t>(1, val.size());
    report->rmse = std::sqrt(se / n);
    report->baseline_rmse = std::sqrt(se_base / n);
    report->r2 = ss > 0 ? 1.0 - se / ss : 0.0;
    report->force_range = data.force_range();
    report->train_samples = static_cast<int>(train.size());
    report->validation_samples = static_cast<int>(val.size());
  }
  return est;
}

void save_estimator(const ForceEstimator& est, const std::string& path) {
  Checkpoint<double> ck;
  ck.put_network("tactile", est.net);
  std::vector<double> norm(est.input_mean.begin(), est.input_mean.end());
  norm.insert(norm.end(), est.input_scale.begin(), est.input_scale.end());
  norm.push_back(est.output_scale);
  ck.put_scalars("tactile.norm", norm);
  ck.save(path);
}

ForceEstimator load_estimator(const std::string& path) {
  const auto ck = Checkpoint<double>::load(path);
  ForceEstimator est;
  est.net = ck.network("tactile");
  const auto& norm = ck.scalars("tactile.norm");
  if (norm.size() != 2 * kHallSensors + 1) throw CheckpointError("malformed estimator normalization");
  for (int j = 0; j < kHallSensors; ++j) {
    est.input_mean[j] = norm[j];
    est.input_scale[j] = norm[kHallSensors + j];
  }
  est.output_scale = norm.back();
  if (est.net.input_width() != kHallSensors || est.net.output_width() != 1)
    throw CheckpointError("estimator network has the wrong shape");
  return est;
}

}  // namespace softquad
