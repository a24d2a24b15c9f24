#include "softquad/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "softquad/checkpoint.hpp"
#include "softquad/error.hpp"

namespace softquad {

using nlohmann::json;

namespace {

std::string activation_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::Linear: return "linear";
    case nn::Activation::Tanh: return "tanh";
    case nn::Activation::Relu: return "relu";
  }
  return "linear";
}

nn::Activation parse_activation(const std::string& s) {
  if (s == "linear") return nn::Activation::Linear;
  if (s == "tanh") return nn::Activation::Tanh;
  if (s == "relu") return nn::Activation::Relu;
  throw ConfigError("unknown activation '" + s + "'");
}

// Field visitors: the same field list drives reading and writing.
struct Writer {
  json& j;
  template <class T>
  void operator()(const char* key, T& value) {
    j[key] = value;
  }
  void operator()(const char* key, nn::Activation& a) { j[key] = activation_name(a); }
  void operator()(const char* key, GrfSource& g) { j[key] = g == GrfSource::Tactile ? "tactile" : "oracle"; }
  template <class S>
  void section(const char* key, S& s);
};

struct Reader {
  const json& j;
  std::string path;
  std::set<std::string> seen;

  template <class T>
  void operator()(const char* key, T& value) {
    if (!j.contains(key)) return;
    seen.insert(key);
    try {
      value = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + path + key + "': " + e.what());
    }
  }
  void operator()(const char* key, nn::Activation& a) {
    std::string s = activation_name(a);
    (*this)(key, s);
    a = parse_activation(s);
  }
  void operator()(const char* key, GrfSource& g) {
    std::string s = g == GrfSource::Tactile ? "tactile" : "oracle";
    (*this)(key, s);
    if (s != "tactile" && s != "oracle") throw ConfigError("grf_source must be 'oracle' or 'tactile'");
    g = s == "tactile" ? GrfSource::Tactile : GrfSource::Oracle;
  }
  template <class S>
  void section(const char* key, S& s);

  void finish() const {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!seen.count(it.key())) throw ConfigError("unknown config key '" + path + it.key() + "'");
  }
};

void fields(auto& v, LegModel& l) {
  v("n_segments", l.n_segments);
  v("length", l.length);
  v("mass", l.mass);
  v("base_stiffness", l.base_stiffness);
  v("base_damping", l.base_damping);
  v("stiffness_gain", l.stiffness_gain);
  v("damping_gain", l.damping_gain);
  v("alpha_expand", l.alpha_expand);
  v("alpha_contract", l.alpha_contract);
  v("valve_time_constant", l.valve_time_constant);
  v("chamber_radius", l.chamber_radius);
  v("chamber_area", l.chamber_area);
  v("cup_mass", l.cup_mass);
  v("cup_length", l.cup_length);
  v("cup_stiffness", l.cup_stiffness);
  v("cup_damping", l.cup_damping);
}

// The four legs share one parameter set; mounts stay at their defaults.
struct RobotFields {
  RobotModel& m;
};

void fields(auto& v, RobotFields& r) {
  v("body_mass", r.m.body_mass);
  v("z_ref", r.m.z_ref);
  LegModel leg = r.m.legs[0];
  v.section("leg", leg);
  for (auto& l : r.m.legs) {
    const Vec3 p = l.mount_position;
    const Mat3 rot = l.mount_rotation;
    l = leg;
    l.mount_position = p;
    l.mount_rotation = rot;
  }
}

void fields(auto& v, PneumaticConfig& p) {
  v("p_min_kpa", p.p_min_kpa);
  v("p_max_kpa", p.p_max_kpa);
  v("dp_max_kpa", p.dp_max_kpa);
  v("ds_max", p.ds_max);
  v("dt_cmd", p.dt_cmd);
  v("dt_inner", p.dt_inner);
  v("dt_physics", p.dt_physics);
}

void fields(auto& v, ContactConfig& c) {
  v("stiffness", c.stiffness);
  v("damping", c.damping);
  v("friction", c.friction);
  v("tangential_stiffness", c.tangential_stiffness);
  v("tangential_damping", c.tangential_damping);
  v("suction_force_max", c.suction_force_max);
  v("dz_max", c.dz_max);
  v("theta_max", c.theta_max);
  v("s_min", c.s_min);
}

void fields(auto& v, GaitParams& g) {
  v("period", g.period);
  v("sequence", g.sequence);
  v("baseline_kpa", g.baseline_kpa);
  v("reach_kpa", g.reach_kpa);
  v("lift_kpa", g.lift_kpa);
  v("stance_suction", g.stance_suction);
  v("swing_suction", g.swing_suction);
  v("lift_end", g.lift_end);
  v("swing_end", g.swing_end);
  v("plant_end", g.plant_end);
}

void fields(auto& v, RewardWeights& w) {
  v("progress", w.progress);
  v("yaw", w.yaw);
  v("height", w.height);
  v("orientation", w.orientation);
  v("smooth", w.smooth);
}

void fields(auto& v, NoiseConfig& n) {
  v("grf_std", n.grf_std);
  v("angle_std", n.angle_std);
  v("rate_std", n.rate_std);
}

void fields(auto& v, RandomizationConfig& r) {
  v("enabled", r.enabled);
  v("mass", r.mass);
  v("stiffness", r.stiffness);
  v("damping", r.damping);
  v("hysteresis", r.hysteresis);
  v("suction", r.suction);
  v("segments", r.segments);
  v("inclines_deg", r.inclines_deg);
  v.section("noise", r.noise);
}

void fields(auto& v, EnvConfig& e) {
  v.section("weights", e.weights);
  v.section("randomization", e.randomization);
  v("incline_deg", e.incline_deg);
  v("episode_steps", e.episode_steps);
  v("settle_time", e.settle_time);
  v("fall_angle_deg", e.fall_angle_deg);
  v("fall_height_fraction", e.fall_height_fraction);
  v("goal_distance", e.goal_distance);
  v("grf_source", e.grf_source);
  v("suction_disabled", e.suction_disabled);
  v("imu_grf_noise", e.imu_grf_noise);
}

void fields(auto& v, HallSensorModel& h) {
  v("rest_gap", h.rest_gap);
  v("dipole_moment", h.dipole_moment);
  v("cup_stiffness", h.cup_stiffness);
  v("noise_std", h.noise_std);
  v("hysteresis", h.hysteresis);
  v("hysteresis_time", h.hysteresis_time);
  v("drift_rate", h.drift_rate);
  v("drift_relax_time", h.drift_relax_time);
  v("min_gap_fraction", h.min_gap_fraction);
}

void fields(auto& v, CalibrationProtocol& p) {
  v("cycles", p.cycles);
  v("cups", p.cups);
  v("velocities", p.velocities);
  v("partial_fraction", p.partial_fraction);
  v("force_min", p.force_min);
  v("force_max", p.force_max);
  v("hold_time", p.hold_time);
  v("rest_time", p.rest_time);
  v("sample_rate", p.sample_rate);
  v("validation_fraction", p.validation_fraction);
  v("cup_variation", p.cup_variation);
}

void fields(auto& v, EstimatorTraining& t) {
  v("hidden", t.hidden);
  v("steps", t.steps);
  v("batch", t.batch);
  v("lr", t.lr);
  v("final_lr", t.final_lr);
  v("seed", t.seed);
}

void fields(auto& v, TactileConfig& t) {
  v.section("sensor", t.sensor);
  v.section("protocol", t.protocol);
  v.section("training", t.training);
  v("seed", t.seed);
}

void fields(auto& v, learn::BcConfig& b) {
  v("epochs", b.epochs);
  v("batch", b.batch);
  v("lr", b.lr);
  v("final_lr", b.final_lr);
  v("validation_fraction", b.validation_fraction);
  v("init_log_std", b.init_log_std);
  v("patience", b.patience);
}

void fields(auto& v, learn::SacConfig& s) {
  v("actor_hidden", s.actor_hidden);
  v("critic_hidden", s.critic_hidden);
  v("hidden_activation", s.hidden_activation);
  v("gamma", s.gamma);
  v("tau", s.tau);
  v("actor_lr", s.actor_lr);
  v("critic_lr", s.critic_lr);
  v("alpha_lr", s.alpha_lr);
  v("initial_alpha", s.initial_alpha);
  v("auto_alpha", s.auto_alpha);
  v("target_entropy", s.target_entropy);
  v("divergence_threshold", s.divergence_threshold);
  v("divergence_window", s.divergence_window);
}

void fields(auto& v, learn::SacLoopConfig& l) {
  v("warmup_episodes", l.warmup_episodes);
  v("critic_lr_start", l.critic_lr_start);
  v("critic_lr_end", l.critic_lr_end);
  v("critic_lr_decay_episodes", l.critic_lr_decay_episodes);
  v("episodes_per_round", l.episodes_per_round);
  v("updates_per_step", l.updates_per_step);
  v("batch", l.batch);
  v("buffer_capacity", l.buffer_capacity);
  v("min_buffer", l.min_buffer);
}

void fields(auto& v, ScheduleConfig& s) {
  v("demo_episodes", s.demo_episodes);
  v("flat_episodes", s.flat_episodes);
  v("incline_episodes", s.incline_episodes);
  v("refine_incline_deg", s.refine_incline_deg);
  v("full_budget", s.full_budget);
  v("full_flat_episodes", s.full_flat_episodes);
  v("full_incline_episodes", s.full_incline_episodes);
  v("eval_episodes", s.eval_episodes);
  v("eval_inclines_deg", s.eval_inclines_deg);
  v("checkpoint_every", s.checkpoint_every);
  v("workers", s.workers);
}

struct SimFields {
  SimConfig& s;
};

void fields(auto& v, SimFields& s) {
  v.section("pneumatic", s.s.pneumatic);
  v.section("contact", s.s.contact);
}

void fields(auto& v, ExperimentConfig& c) {
  RobotFields robot{c.env.robot};
  v.section("robot", robot);
  SimFields sim{c.env.sim};
  v.section("sim", sim);
  v.section("gait", c.env.gait);
  v.section("env", c.env);
  v.section("tactile", c.tactile);
  v.section("bc", c.bc);
  v.section("sac", c.sac);
  v.section("sac_loop", c.loop);
  v.section("schedule", c.schedule);
  v("seeds", c.seeds);
  v("output_dir", c.output_dir);
}

template <class S>
void Writer::section(const char* key, S& s) {
  json sub = json::object();
  Writer w{sub};
  fields(w, s);
  j[key] = sub;
}

template <class S>
void Reader::section(const char* key, S& s) {
  if (!j.contains(key)) {
    // Still run the visitor so dependent fields (shared leg parameters) apply.
    const json empty = json::object();
    Reader r{empty, path + key + "."};
    fields(r, s);
    return;
  }
  seen.insert(key);
  const json& sub = j.at(key);
  if (!sub.is_object()) throw ConfigError("config key '" + path + key + "' must be an object");
  Reader r{sub, path + key + "."};
  fields(r, s);
  r.finish();
}

json to_json_value(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  json j = json::object();
  Writer w{j};
  fields(w, copy);
  // NaN is not representable in JSON; null stands for "derive from the action size".
  if (std::isnan(cfg.sac.target_entropy)) j["sac"]["target_entropy"] = nullptr;
  return j;
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  validate(cfg.env);
  validate(cfg.tactile.sensor);
  learn::validate(cfg.sac);
  learn::validate(cfg.loop);
  const auto& s = cfg.schedule;
  if (s.demo_episodes < 1 || s.flat_episodes < 0 || s.incline_episodes < 0 || s.eval_episodes < 1 ||
      s.full_flat_episodes < 0 || s.full_incline_episodes < 0 || s.checkpoint_every < 1 || s.workers < 1)
    throw ConfigError("schedule counts must be positive");
  if (s.eval_inclines_deg.empty()) throw ConfigError("schedule.eval_inclines_deg must not be empty");
  if (cfg.bc.epochs < 1 || cfg.bc.batch < 1 || !(cfg.bc.lr > 0) || !(cfg.bc.final_lr > 0))
    throw ConfigError("bc epochs, batch and rates must be positive");
  if (!(cfg.bc.validation_fraction > 0.0 && cfg.bc.validation_fraction < 1.0))
    throw ConfigError("bc.validation_fraction must lie in (0, 1)");
  if (cfg.tactile.protocol.cycles < 1 || cfg.tactile.training.steps < 1)
    throw ConfigError("tactile cycles and training steps must be positive");
  if (cfg.seeds.empty()) throw ConfigError("seed list must not be empty");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg;
  if (j.contains("sac") && j["sac"].is_object() && j["sac"].contains("target_entropy") &&
      j["sac"]["target_entropy"].is_null())
    j["sac"].erase("target_entropy");
  Reader r{j, ""};
  fields(r, cfg);
  r.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& cfg) { return to_json_value(cfg).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = to_json_value(cfg).dump();
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0')
     << checksum(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  return os.str();
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError("invalid seed '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

void apply_environment_overrides(ExperimentConfig& cfg) {
  if (const char* s = std::getenv("SOFTQUAD_SEEDS"); s && *s) cfg.seeds = parse_seed_list(s);
  if (const char* d = std::getenv("SOFTQUAD_OUTPUT_DIR"); d && *d) cfg.output_dir = d;
}

}  // namespace softquad
