#pragma once

// Locomotion environment: a 34-dim sensor frame stacked four deep, 16-dim
// incremental actions, the shaped reward, fall termination, domain
// randomization and observation noise.

#include <array>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "softquad/gait.hpp"
#include "softquad/simulator.hpp"
#include "softquad/tactile.hpp"

namespace softquad {

inline constexpr int kFrameDim = 34;
inline constexpr int kStackDepth = 4;
inline constexpr int kObsDim = kFrameDim * kStackDepth;

/// Offsets of the signal groups inside one frame.
namespace frame {
inline constexpr int kEuler = 0;      // roll, pitch, yaw
inline constexpr int kOmega = 3;      // body angular rate
inline constexpr int kAccel = 6;      // body specific force
inline constexpr int kGrf = 9;        // per-foot normal force estimate
inline constexpr int kPressure = 13;  // commanded chamber pressures
inline constexpr int kSuction = 25;   // suction commands
inline constexpr int kGoal = 29;      // body-frame goal dx, dy, yaw error
inline constexpr int kCpg = 32;       // sin, cos
}  // namespace frame

using Frame = std::array<double, kFrameDim>;
using Action = std::array<double, kActionDim>;

struct RewardWeights {
  double progress = 1000.0;  // per metre of progress
  double yaw = 0.5;
  double height = 5.0;
  double orientation = 2.0;
  double smooth = 0.05;
};

void validate(const RewardWeights& w);

/// Unweighted penalty terms; `total` = 1 - Σ w_i term_i.
struct RewardBreakdown {
  double progress = 0.0;     // -(x̄_t - x̄_{t-1}), negative when moving forward
  double yaw = 0.0;          // (ψ - ψ_goal)²
  double height = 0.0;       // |z - z_ref|
  double orientation = 0.0;  // φ² + θ²
  double smooth = 0.0;       // ‖Δp‖², Δp in units of the maximum increment
  double total = 0.0;
};

RewardBreakdown reward(const BodyPose& prev, const BodyPose& pose, std::span<const double> dp, double yaw_goal,
                       double z_ref, const RewardWeights& w);

struct NoiseConfig {
  double grf_std = 0.1;    // N
  double angle_std = 0.01; // rad
  double rate_std = 0.02;  // rad/s
};

struct RandomizationConfig {
  bool enabled = true;
  std::array<double, 2> mass{0.8, 1.2};
  std::array<double, 2> stiffness{0.8, 1.2};
  std::array<double, 2> damping{0.8, 1.2};
  std::array<double, 2> hysteresis{0.7, 1.3};
  std::array<double, 2> suction{0.8, 1.2};
  std::array<int, 2> segments{kMinSegments, kMaxSegments};
  std::vector<double> inclines_deg{0.0};
  NoiseConfig noise;
};

void validate(const RandomizationConfig& r);

/// Physical parameters drawn for one episode.
struct EpisodeParams {
  std::array<int, kNumLegs> segments{6, 6, 6, 6};
  std::array<double, kNumLegs> mass{1, 1, 1, 1};
  std::array<double, kNumLegs> stiffness{1, 1, 1, 1};
  std::array<double, kNumLegs> damping{1, 1, 1, 1};
  std::array<double, kNumLegs> hysteresis{1, 1, 1, 1};
  double suction = 1.0;
  double incline_deg = 0.0;
};

enum class GrfSource { Oracle, Tactile };

struct EnvConfig {
  RobotModel robot = default_robot_model();
  SimConfig sim;
  GaitParams gait;
  RewardWeights weights;
  RandomizationConfig randomization;
  double incline_deg = 0.0;  // used when randomization is off
  int episode_steps = 120;
  double settle_time = 1.0;
  double fall_angle_deg = 45.0;
  double fall_height_fraction = 0.4;
  double goal_distance = 2.0;
  GrfSource grf_source = GrfSource::Oracle;
  HallSensorModel hall;
  // Ablations.
  bool suction_disabled = false;
  bool imu_grf_noise = false;  // replace IMU and GRF channels with unit noise
};

void validate(const EnvConfig& cfg);

struct StepInfo {
  BodyPose pose;
  RewardBreakdown reward;
  std::array<double, kNumLegs> grf_true{};
  std::array<double, kNumLegs> grf_estimate{};
  std::array<bool, kNumLegs> suction_engaged{};
  bool fell = false;
  bool sim_failure = false;
  double time = 0.0;
};

struct StepResult {
  std::vector<double> obs;  // stacked, kObsDim
  double reward = 0.0;
  bool terminated = false;  // fall: no bootstrap
  bool truncated = false;   // step budget reached: bootstrap
  StepInfo info;
};

/// Draws episode parameters; the identity draw when randomization is off.
EpisodeParams sample_episode(const RandomizationConfig& r, double fixed_incline_deg, std::mt19937_64& rng);

/// Nominal model with the episode's multipliers and link counts applied.
RobotModel apply_episode(const RobotModel& nominal, const EpisodeParams& p, SimConfig& sim);

/// Raw signals for one frame before noise.
struct FrameSignals {
  BodyPose pose;
  std::array<double, kNumLegs> grf{};
  std::array<double, kNumChambers> pressure{};
  std::array<double, kNumLegs> suction{};
  std::array<double, 3> goal{};
  std::array<double, 2> cpg{};
};

/// Assembles a frame and adds Gaussian noise to angles, rates and GRF.
Frame make_frame(const FrameSignals& s, const NoiseConfig& noise, std::mt19937_64& rng);

/// Fixed per-channel scale that brings frame entries to order one.
const Frame& frame_scale();

class LocomotionEnv {
 public:
  explicit LocomotionEnv(EnvConfig cfg, std::shared_ptr<const ForceEstimator> estimator = nullptr);

  std::vector<double> reset(std::uint64_t seed);
  StepResult step(std::span<const double> action);

  const EnvConfig& config() const { return cfg_; }
  const EpisodeParams& episode() const { return params_; }
  const Simulator& sim() const { return *sim_; }
  const Frame& last_frame() const { return last_frame_; }
  int steps_taken() const { return steps_; }
  bool done() const { return done_; }
  double time() const { return steps_ * cfg_.sim.pneumatic.dt_cmd; }
  const GaitSchedule& reference_gait() const { return gait_; }
  Vec3 travel_axis() const { return travel_axis_; }
  double start_x() const { return start_x_; }

  /// Overwrites the robot state, e.g. to force a fall in tests.
  void set_state(const TreeState& s);

 private:
  Frame observe();
  std::vector<double> stacked() const;

  EnvConfig cfg_;
  std::shared_ptr<const ForceEstimator> estimator_;
  GaitSchedule gait_;
  EpisodeParams params_;
  std::unique_ptr<Simulator> sim_;
  std::mt19937_64 rng_;
  CpgState cpg_;
  std::array<HallState, kNumLegs> hall_{};
  std::vector<HallSensorModel> cups_;
  std::array<double, kNumLegs> grf_estimate_{};
  std::vector<Frame> stack_;
  Frame last_frame_{};
  BodyPose prev_pose_;
  Vec3 travel_axis_ = Vec3::UnitX();
  Vec3 goal_ = Vec3::Zero();
  double start_x_ = 0.0;
  int steps_ = 0;
  bool done_ = true;
};

}  // namespace softquad
