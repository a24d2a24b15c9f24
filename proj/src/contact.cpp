#include "softquad/contact.hpp"

#include <algorithm>

#include "softquad/error.hpp"

namespace softquad {

void validate(const ContactConfig& cfg) {
  if (!(cfg.stiffness > 0 && cfg.damping > 0 && cfg.friction > 0 && cfg.tangential_stiffness > 0 &&
        cfg.tangential_damping >= 0 && cfg.suction_force_max > 0 && cfg.dz_max > 0))
    throw ModelError("contact parameters must be positive");
  if (!(cfg.s_min > 0.0 && cfg.s_min < 1.0)) throw ModelError("s_min must lie in (0, 1)");
  if (!(cfg.theta_max > 0.0 && cfg.theta_max < std::numbers::pi / 2)) throw ModelError("theta_max must lie in (0, pi/2)");
}

SuctionResult suction_force(const FootFrame& foot, double s, const Plane& ground, const ContactConfig& cfg) {
  SuctionResult r;
  if (!cfg.suction_enabled) return r;
  r.engaged = foot.d_z < cfg.dz_max && foot.theta < cfg.theta_max && s > cfg.s_min;
  if (r.engaged) r.force = -std::clamp(s, 0.0, 1.0) * cfg.suction_force_max * ground.normal;
  return r;
}

double penalty_normal_force(double penetration, double penetration_rate, const ContactConfig& cfg) {
  if (penetration <= 0.0) return 0.0;
  return std::max(0.0, cfg.stiffness * penetration + cfg.damping * penetration_rate);
}

namespace {

struct PointResult {
  double normal = 0.0;
  double tangential = 0.0;
  double penetration = 0.0;
};

PointResult resolve_point(const Vec3& x, const Vec3& v, int body, double extra_normal, const Plane& ground,
                          const ContactConfig& cfg, ContactPointState& st, Wrenches& w) {
  PointResult r;
  const Vec3& n = ground.normal;
  const double d = ground.signed_distance(x);
  if (d >= 0.0) {
    st.active = false;
    return r;
  }
  r.penetration = -d;
  const double fn = penalty_normal_force(-d, -n.dot(v), cfg);
  const Vec3 x_plane = x - d * n;
  if (!st.active) {
    st.active = true;
    st.anchor = x_plane;
  }
  Vec3 slip = x_plane - st.anchor;
  slip -= n * n.dot(slip);
  const Vec3 v_t = v - n * n.dot(v);
  Vec3 ft = -cfg.tangential_stiffness * slip - cfg.tangential_damping * v_t;
  const double limit = cfg.friction * (fn + extra_normal);
  const double mag = ft.norm();
  if (mag > limit) {
    ft *= limit / mag;
    // Slide the anchor so the spring alone carries the saturated force.
    st.anchor = x_plane + ft / cfg.tangential_stiffness;
  }
  r.normal = fn;
  r.tangential = ft.norm();
  add_point_force(w, body, x, fn * n + ft);
  return r;
}

}  // namespace

ContactReport contact_forces(const TreeDescription& tree, const Kinematics& kin, const TreeState& state,
                             const Plane& ground, const Vec3& body_half_extents,
                             const std::array<double, kNumLegs>& suction_commands, const ContactConfig& cfg,
                             ContactState& contact_state, Wrenches& wrenches) {
  ContactReport report;
  const auto feet = foot_frames(tree, kin, state, ground);
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const FootFrame& f = feet[leg];
    const SuctionResult suction = suction_force(f, suction_commands[leg], ground, cfg);
    FootContact& fc = report.feet[leg];
    fc.suction_engaged = suction.engaged;
    fc.suction_force = suction.force.norm();
    if (suction.engaged) add_point_force(wrenches, f.body, f.position, suction.force);
    const PointResult pr = resolve_point(f.position, f.velocity, f.body, fc.suction_force, ground, cfg,
                                         contact_state.points[leg], wrenches);
    fc.normal_force = pr.normal;
    fc.tangential_force = pr.tangential;
    fc.penetration = pr.penetration;
  }
  const Mat3& r0 = kin.rotation[0];
  for (int c = 0; c < kBodyCorners; ++c) {
    const Vec3 local((c & 1) ? body_half_extents.x() : -body_half_extents.x(),
                     (c & 2) ? body_half_extents.y() : -body_half_extents.y(),
                     (c & 4) ? body_half_extents.z() : -body_half_extents.z());
    const Vec3 x = kin.position[0] + r0 * local;
    const PointResult pr = resolve_point(x, kin.point_velocity(0, x), 0, 0.0, ground, cfg,
                                         contact_state.points[kNumLegs + c], wrenches);
    report.body_normal_force += pr.normal;
  }
  return report;
}

}  // namespace softquad
