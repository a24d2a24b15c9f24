#pragma once

// Penalty ground contact with stick-slip Coulomb friction at the cup rims and
// body corners, plus gated suction anchoring at the feet.

#include <array>
#include <numbers>

#include "softquad/rigid_tree.hpp"

namespace softquad {

struct ContactConfig {
  double stiffness = 5000.0;             // N/m
  double damping = 8.0;                  // N·s/m
  double friction = 0.1;                 // Coulomb coefficient
  double tangential_stiffness = 5000.0;  // N/m, stick spring
  double tangential_damping = 8.0;
  double suction_force_max = 15.0;       // N
  double dz_max = 0.005;                 // m
  double theta_max = 10.0 * std::numbers::pi / 180.0;
  double s_min = 0.5;
  bool suction_enabled = true;
};

void validate(const ContactConfig& cfg);

inline constexpr int kBodyCorners = 8;
inline constexpr int kContactPoints = kNumLegs + kBodyCorners;

/// Stick anchor of one contact point.
struct ContactPointState {
  bool active = false;
  Vec3 anchor = Vec3::Zero();
};

struct ContactState {
  std::array<ContactPointState, kContactPoints> points{};
};

struct FootContact {
  double normal_force = 0.0;      // N, >= 0
  double tangential_force = 0.0;  // N, magnitude
  double penetration = 0.0;       // m, > 0 when in contact
  bool suction_engaged = false;
  double suction_force = 0.0;     // N
};

struct ContactReport {
  std::array<FootContact, kNumLegs> feet{};
  double body_normal_force = 0.0;

  double total_normal_force() const {
    double f = body_normal_force;
    for (const auto& foot : feet) f += foot.normal_force;
    return f;
  }
};

struct SuctionResult {
  bool engaged = false;
  Vec3 force = Vec3::Zero();
};

/// Attractive force along -normal, active only when d_z < dz_max,
/// theta < theta_max and s > s_min (all strict).
SuctionResult suction_force(const FootFrame& foot, double s, const Plane& ground, const ContactConfig& cfg);

/// Penalty law for one point: normal force k δ + c δ̇ clamped at zero.
double penalty_normal_force(double penetration, double penetration_rate, const ContactConfig& cfg);

/// Accumulates contact and suction wrenches for all feet and body corners and
/// updates stick anchors.
ContactReport contact_forces(const TreeDescription& tree, const Kinematics& kin, const TreeState& state,
                             const Plane& ground, const Vec3& body_half_extents,
                             const std::array<double, kNumLegs>& suction_commands, const ContactConfig& cfg,
                             ContactState& contact_state, Wrenches& wrenches);

}  // namespace softquad
