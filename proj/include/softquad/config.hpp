#pragma once

// Experiment configuration: one nested JSON document with sections for the
// robot, simulator, gait, environment, tactile sensing, BC and SAC. Unknown
// keys are rejected. Only seeds and the output directory may be overridden
// from the environment (SOFTQUAD_SEEDS, SOFTQUAD_OUTPUT_DIR).

#include <cstdint>
#include <string>
#include <vector>

#include "softquad/env.hpp"
#include "softquad/learn.hpp"
#include "softquad/tactile.hpp"

namespace softquad {

struct ScheduleConfig {
  int demo_episodes = 40;
  int flat_episodes = 400;
  int incline_episodes = 200;
  double refine_incline_deg = 2.5;
  bool full_budget = false;       // paper-scale episode counts
  int full_flat_episodes = 1300;
  int full_incline_episodes = 400;
  int eval_episodes = 10;
  std::vector<double> eval_inclines_deg{0.0, 2.5, 5.0};
  int checkpoint_every = 50;      // episodes
  int workers = 1;

  int flat() const { return full_budget ? full_flat_episodes : flat_episodes; }
  int incline() const { return full_budget ? full_incline_episodes : incline_episodes; }
};

struct TactileConfig {
  HallSensorModel sensor;
  CalibrationProtocol protocol;
  EstimatorTraining training;
  std::uint64_t seed = 42;
};

struct ExperimentConfig {
  EnvConfig env;
  TactileConfig tactile;
  learn::BcConfig bc;
  learn::SacConfig sac;
  learn::SacLoopConfig loop;  // per-stage episode counts come from `schedule`
  ScheduleConfig schedule;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "runs/default";
};

/// Throws ConfigError on any invalid value.
void validate(const ExperimentConfig& cfg);

/// Parses JSON text; missing keys keep their defaults.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Canonical JSON (sorted keys, fixed indentation).
std::string dump_config(const ExperimentConfig& cfg);

/// CRC-32 of the canonical JSON, as 8 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Applies SOFTQUAD_SEEDS (comma-separated) and SOFTQUAD_OUTPUT_DIR.
void apply_environment_overrides(ExperimentConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace softquad
