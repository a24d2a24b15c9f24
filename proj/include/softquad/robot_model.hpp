#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "softquad/spatial.hpp"

namespace softquad {

inline constexpr int kNumLegs = 4;
inline constexpr int kChambersPerLeg = 3;
inline constexpr int kNumChambers = kNumLegs * kChambersPerLeg;
inline constexpr int kMinSegments = 5;
inline constexpr int kMaxSegments = 7;

/// Joint layout of one leg segment, in order.
enum class JointType : std::uint8_t { RevoluteX = 0, RevoluteY = 1, PrismaticZ = 2 };
inline constexpr int kJointTypes = 3;

/// Analytic ground plane. The incline is encoded in the normal.
struct Plane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();

  double signed_distance(const Vec3& p) const { return normal.dot(p - point); }

  /// Plane rising along +x by `incline_rad`.
  static Plane inclined(double incline_rad) {
    return Plane{Vec3::Zero(), Vec3(-std::sin(incline_rad), 0.0, std::cos(incline_rad))};
  }
};

/// One pneumatic leg approximated as a chain of rigid segments. Every segment
/// carries (revolute-x, revolute-y, prismatic-z) joints; the chain ends with a
/// suction cup attached through one more prismatic joint.
struct LegModel {
  int n_segments = 6;
  double length = 0.09;        // m, total undeformed chain length
  double mass = 0.06;          // kg, split equally across segments
  Vec3 mount_position = Vec3::Zero();
  Mat3 mount_rotation = Mat3::Identity();  // leg frame: +z runs from mount toward the foot

  // Per joint type (RevoluteX, RevoluteY, PrismaticZ).
  std::array<double, kJointTypes> base_stiffness{1.5, 1.5, 4000.0};  // N·m/rad, N/m
  std::array<double, kJointTypes> base_damping{0.01, 0.01, 30.0};
  std::array<double, kJointTypes> stiffness_gain{2.0, 2.0, 100.0};   // c1
  std::array<double, kJointTypes> damping_gain{0.02, 0.02, 0.5};     // c2
  std::array<double, kJointTypes> alpha_expand{0.3, 0.3, 0.3};
  std::array<double, kJointTypes> alpha_contract{0.15, 0.15, 0.15};

  double valve_time_constant = 0.08;  // s, first-order valve lag

  double chamber_radius = 0.02;   // m, moment arm of each chamber
  double chamber_area = 1e-4;     // m²
  std::array<double, kChambersPerLeg> chamber_angles{0.0, 2.0943951023931953, 4.1887902047863905};

  // Suction cup link.
  double cup_mass = 0.03;
  double cup_length = 0.01;        // m, from the cup joint to the rim
  double cup_stiffness = 5000.0;   // N/m, prismatic cup joint
  double cup_damping = 20.0;

  double segment_length() const { return length / n_segments; }
  double segment_mass() const { return mass / n_segments; }
  int joint_count() const { return 3 * n_segments + 1; }
};

struct RobotModel {
  double body_mass = 0.5;
  Mat3 body_inertia = Mat3::Identity() * 1e-3;
  Vec3 body_half_extents{0.08, 0.06, 0.02};
  std::array<LegModel, kNumLegs> legs{};
  Vec3 gravity{0.0, 0.0, -9.81};
  Plane ground{};
  double z_ref = 0.125;  // nominal body height above ground

  int joint_count() const {
    int m = 0;
    for (const auto& leg : legs) m += leg.joint_count();
    return m;
  }
  double total_mass() const {
    double m = body_mass;
    for (const auto& leg : legs) m += leg.mass + leg.cup_mass;
    return m;
  }
};

/// Throws ModelError if the model breaks an invariant.
void validate(const RobotModel& model);

/// Nominal robot: 0.5 kg body, four legs mounted under the body corners.
RobotModel default_robot_model();

/// Leg order used everywhere: LF, RF, LH, RH.
enum class LegId : int { LF = 0, RF = 1, LH = 2, RH = 3 };

}  // namespace softquad
