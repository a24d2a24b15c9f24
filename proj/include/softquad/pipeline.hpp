#pragma once

// End-to-end stages shared by the command-line driver and the acceptance
// runner. Every stage writes into an output directory and records the files
// it produced in a manifest.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "softquad/config.hpp"

namespace softquad {

namespace fs = std::filesystem;

/// Output files of one run plus metadata, written as JSON.
class Manifest {
 public:
  Manifest(const ExperimentConfig& cfg, std::string command);
  void add_output(const fs::path& p);
  void set(const std::string& key, const std::string& value) { extra_[key] = value; }
  void write(const fs::path& dir) const;

 private:
  std::string command_;
  std::string hash_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::string> outputs_;
  std::map<std::string, std::string> extra_;
};

// Artifact names inside the output directory.
namespace artifact {
inline const char* kTactileData = "tactile_dataset.txt";
inline const char* kEstimator = "tactile_estimator.ckpt";
inline const char* kTactileMetrics = "tactile_metrics.txt";
inline const char* kDemos = "demos.txt";
inline const char* kBcActor = "bc_actor.ckpt";
inline const char* kBcMetrics = "bc_metrics.txt";
std::string sac_stage(const std::string& stage, std::uint64_t seed);  // sac_<stage>_seed<k>.ckpt
std::string curve(std::uint64_t seed);                                // curve_seed<k>.txt
}  // namespace artifact

struct TactileOutcome {
  EstimatorReport report;
  ForceEstimator estimator;
};

TactileOutcome run_calibrate_tactile(const ExperimentConfig& cfg, const fs::path& out, Manifest& m);

void write_demonstrations(const learn::Demonstrations& d, const fs::path& path);
learn::Demonstrations read_demonstrations(const fs::path& path);

struct BcOutcome {
  learn::BcReport report;
  nn::Mlp<float> actor;
  int demos = 0;
  int discarded = 0;
};

/// Collects demonstrations (or reuses demos.txt) and clones them.
BcOutcome run_train_bc(const ExperimentConfig& cfg, const fs::path& out, Manifest& m);

nn::Mlp<float> load_actor(const fs::path& path);
void save_actor(const nn::Mlp<float>& actor, const fs::path& path);

struct SacOutcome {
  nn::Mlp<float> flat_actor;
  nn::Mlp<float> refined_actor;
  std::vector<learn::CurveRecord> curve;
};

/// Flat stage then incline refinement for one seed, starting from the BC
/// actor. A finished stage with a checkpoint on disk is skipped; a stage that
/// aborts leaves a checkpoint named sac_abort_seed<k>.ckpt.
SacOutcome run_train_sac(const ExperimentConfig& cfg, const nn::Mlp<float>& bc_actor, std::uint64_t seed,
                         const fs::path& out, Manifest& m, bool verbose);

/// Reads one curve file.
std::vector<learn::CurveRecord> read_curve(const fs::path& path);

/// Trailing moving average with the given window.
std::vector<double> smooth(const std::vector<double>& x, int window);

/// Per-episode mean return across seeds and its smoothed version.
struct Fig5Table {
  std::vector<int> episode;
  std::vector<std::vector<double>> per_seed;  // [seed][episode]
  std::vector<double> mean;
  std::vector<double> smoothed;
};

Fig5Table fig5_table(const std::vector<std::vector<learn::CurveRecord>>& curves, int window = 50);
/// Columns are labelled with `seeds`.
void write_fig5(const Fig5Table& t, const std::vector<std::uint64_t>& seeds, const fs::path& path);

struct Fig7Row {
  double incline_deg = 0.0;
  double reference = 0.0;
  double bc = 0.0;
  double rl_flat = 0.0;
  double rl_refined = 0.0;
  double rl_refined_fall_rate = 0.0;
};

/// Mean speed per incline for the reference gait, the BC policy and the
/// per-seed RL policies (averaged over seeds).
std::vector<Fig7Row> fig7_table(const ExperimentConfig& cfg, const nn::Mlp<float>& bc,
                                const std::vector<nn::Mlp<float>>& flat, const std::vector<nn::Mlp<float>>& refined,
                                int workers);
void write_fig7(const std::vector<Fig7Row>& rows, const fs::path& path);

/// Environment config at a fixed incline for evaluation.
EnvConfig at_incline(const EnvConfig& base, double incline_deg);

void write_metrics(const learn::EvalMetrics& m, const std::string& label, const fs::path& path);

}  // namespace softquad
