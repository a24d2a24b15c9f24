// Batch experiment driver.
//
// Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "softquad/error.hpp"
#include "softquad/pipeline.hpp"

using namespace softquad;

namespace {

struct Options {
  std::string config_path;
  std::string output;
  std::string seeds;
  int workers = 0;
  bool disable_suction = false;
  bool tactile = false;
  bool noise_imu_grf = false;
  bool quiet = false;

  std::string policy;
  std::string channel = "imu+grf";
  double incline = 0.0;
  int episodes = 0;
  int samples = 64;
  bool episode_log = false;
};

std::string incline_tag(double deg) {
  std::ostringstream os;
  os << "inc" << deg;
  return os.str();
}

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  apply_environment_overrides(cfg);
  if (!o.output.empty()) cfg.output_dir = o.output;
  if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
  if (o.workers > 0) cfg.schedule.workers = o.workers;
  if (o.disable_suction) cfg.env.suction_disabled = true;
  if (o.noise_imu_grf) cfg.env.imu_grf_noise = true;
  if (o.tactile) cfg.env.grf_source = GrfSource::Tactile;
  validate(cfg);
  return cfg;
}

void prepare_output(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec || !fs::is_directory(cfg.output_dir))
    throw ConfigError("output directory '" + cfg.output_dir + "' is not writable");
}

std::shared_ptr<const ForceEstimator> estimator_for(const ExperimentConfig& cfg, const fs::path& out, Manifest& m) {
  if (cfg.env.grf_source != GrfSource::Tactile) return nullptr;
  const fs::path p = out / artifact::kEstimator;
  if (fs::exists(p)) return std::make_shared<const ForceEstimator>(load_estimator(p.string()));
  return std::make_shared<const ForceEstimator>(run_calibrate_tactile(cfg, out, m).estimator);
}

void require_oracle(const ExperimentConfig& cfg, const std::string& cmd) {
  if (cfg.env.grf_source == GrfSource::Tactile)
    throw ConfigError("--tactile is supported by 'evaluate' only, not by '" + cmd + "'");
}

nn::Mlp<float> bc_actor(const ExperimentConfig& cfg, const fs::path& out, Manifest& m) {
  const fs::path p = out / artifact::kBcActor;
  if (fs::exists(p)) {
    m.add_output(p);
    for (const char* f : {artifact::kDemos, artifact::kBcMetrics})
      if (fs::exists(out / f)) m.add_output(out / f);
    return load_actor(p);
  }
  return run_train_bc(cfg, out, m).actor;
}

nn::Mlp<float> policy_or_bc(const Options& o, const ExperimentConfig& cfg, const fs::path& out, Manifest& m) {
  if (o.policy.empty()) return bc_actor(cfg, out, m);
  if (!fs::exists(o.policy)) throw ConfigError("policy checkpoint '" + o.policy + "' does not exist");
  return load_actor(o.policy);
}

std::string policy_label(const Options& o) {
  return o.policy.empty() ? std::string("bc_actor") : fs::path(o.policy).stem().string();
}

int cmd_calibrate(const ExperimentConfig& cfg, const Options& o) {
  const fs::path out = cfg.output_dir;
  Manifest m(cfg, "calibrate-tactile");
  const auto r = run_calibrate_tactile(cfg, out, m);
  m.write(out);
  if (!o.quiet)
    std::cout << "force estimator rmse " << r.report.rmse << " N (" << 100.0 * r.report.rmse / r.report.force_range
              << "% of range), r2 " << r.report.r2 << "\n";
  return 0;
}

int cmd_gait_preview(const ExperimentConfig& cfg, const Options& o) {
  const fs::path out = cfg.output_dir;
  Manifest m(cfg, "gait preview");
  const GaitSchedule g = make_reference_gait(cfg.env.gait, cfg.env.sim.pneumatic);
  g.validate(cfg.env.sim.contact.s_min);
  const fs::path p = out / "gait_preview.txt";
  std::ofstream os(p);
  os << std::setprecision(6) << "# t_s phase";
  for (int c = 0; c < kNumChambers; ++c) os << " p" << c << "_kpa";
  for (int l = 0; l < kNumLegs; ++l) os << " s" << l;
  os << "\n";
  for (int i = 0; i < o.samples; ++i) {
    const double t = g.period * i / o.samples;
    const GaitKeyframe k = g.evaluate(t);
    os << t << ' ' << k.phase;
    for (double p : k.pressure) os << ' ' << p;
    for (double s : k.suction) os << ' ' << s;
    os << "\n";
  }
  m.add_output(p);
  m.write(out);
  if (!o.quiet) std::cout << "wrote " << p.string() << " (" << g.keyframes.size() << " keyframes)\n";
  return 0;
}

int cmd_collect_demos(const ExperimentConfig& cfg, const Options& o) {
  require_oracle(cfg, "collect-demos");
  const fs::path out = cfg.output_dir;
  Manifest m(cfg, "collect-demos");
  const int n = o.episodes > 0 ? o.episodes : cfg.schedule.demo_episodes;
  const auto d = learn::collect_demonstrations(cfg.env, n, cfg.seeds.front(), cfg.schedule.workers);
  write_demonstrations(d, out / artifact::kDemos);
  m.add_output(out / artifact::kDemos);
  m.set("discarded_episodes", std::to_string(d.discarded));
  m.write(out);
  if (!o.quiet) std::cout << d.size() << " pairs from " << n - d.discarded << " episodes\n";
  return 0;
}

int cmd_train_bc(const ExperimentConfig& cfg, const Options& o) {
  require_oracle(cfg, "train-bc");
  const fs::path out = cfg.output_dir;
  Manifest m(cfg, "train-bc");
  const auto r = run_train_bc(cfg, out, m);
  m.write(out);
  if (!o.quiet)
    std::cout << "bc validation mse " << r.report.validation_mse << " (linear baseline "
              << r.report.linear_validation_mse << ")\n";
  return 0;
}

std::vector<SacOutcome> train_all(const ExperimentConfig& cfg, const Options& o, Manifest& m) {
  const fs::path out = cfg.output_dir;
  const auto bc = bc_actor(cfg, out, m);
  std::vector<SacOutcome> res;
  for (auto seed : cfg.seeds) res.push_back(run_train_sac(cfg, bc, seed, out, m, !o.quiet));
  return res;
}

int cmd_train_sac(const ExperimentConfig& cfg, const Options& o) {
  require_oracle(cfg, "train-sac");
  Manifest m(cfg, "train-sac");
  train_all(cfg, o, m);
  m.write(cfg.output_dir);
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const Options& o) {
  const fs::path out = cfg.output_dir;
  Manifest m(cfg, "evaluate");
  const auto est = estimator_for(cfg, out, m);
  const auto actor = policy_or_bc(o, cfg, out, m);
  const int n = o.episodes > 0 ? o.episodes : cfg.schedule.eval_episodes;
  const EnvConfig env = at_incline(cfg.env, o.incline);
  const auto r = learn::evaluate_policy(env, actor, n, cfg.seeds.front(), cfg.schedule.workers, o.episode_log, est);
  const std::string stem = "eval_" + policy_label(o) + "_" + incline_tag(o.incline);
  write_metrics(r, policy_label(o), out / (stem + ".txt"));
  m.add_output(out / (stem + ".txt"));
  if (o.episode_log && !r.episodes.empty()) {
    std::ofstream os(out / (stem + "_episode0.txt"));
    learn::write_episode_log(os, r.episodes.front());
    m.add_output(out / (stem + "_episode0.txt"));
  }
  m.write(out);
  if (!o.quiet)
    std::cout << "mean speed " << r.mean_speed * 1e3 << " mm/s, fall rate " << r.fall_rate << " over " << n
              << " episodes\n";
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const Options& o) {
  require_oracle(cfg, "ablate");
  const fs::path out = cfg.output_dir;
  Manifest m(cfg, "ablate");
  const auto actor = policy_or_bc(o, cfg, out, m);
  const auto ch = learn::parse_channel(o.channel);
  const int n = o.episodes > 0 ? o.episodes : cfg.schedule.eval_episodes;
  const auto r = learn::ablate(at_incline(cfg.env, o.incline), actor, ch, n, cfg.seeds.front(), cfg.schedule.workers);
  std::string name = learn::channel_name(ch);
  std::replace(name.begin(), name.end(), '+', '_');
  const fs::path p = out / ("ablation_" + policy_label(o) + "_" + name + "_" + incline_tag(o.incline) + ".txt");
  std::ofstream os(p);
  os << std::setprecision(9) << "# episode intact_speed_mm_s ablated_speed_mm_s\n";
  for (std::size_t i = 0; i < r.intact.speeds.size(); ++i)
    os << i << ' ' << r.intact.speeds[i] * 1e3 << ' ' << r.ablated.speeds[i] * 1e3 << "\n";
  os << "# intact_mean_mm_s ablated_mean_mm_s ratio lower ties sign_test_p\n";
  const double ratio = r.intact.mean_speed != 0.0 ? r.ablated.mean_speed / r.intact.mean_speed : 0.0;
  os << "# " << r.intact.mean_speed * 1e3 << ' ' << r.ablated.mean_speed * 1e3 << ' ' << ratio << ' ' << r.lower << ' '
     << r.ties << ' ' << r.sign_test_p << "\n";
  m.add_output(p);
  m.write(out);
  if (!o.quiet)
    std::cout << "intact " << r.intact.mean_speed * 1e3 << " mm/s, " << name << " " << r.ablated.mean_speed * 1e3
              << " mm/s, lower in " << r.lower << "/" << n << ", p = " << r.sign_test_p << "\n";
  return 0;
}

int cmd_fig5(const ExperimentConfig& cfg, const Options& o) {
  require_oracle(cfg, "reproduce-fig5");
  const fs::path out = cfg.output_dir;
  Manifest m(cfg, "reproduce-fig5");
  std::vector<std::vector<learn::CurveRecord>> curves;
  for (const auto& r : train_all(cfg, o, m)) curves.push_back(r.curve);
  const auto t = fig5_table(curves);
  write_fig5(t, cfg.seeds, out / "fig5_returns.txt");
  m.add_output(out / "fig5_returns.txt");
  m.write(out);
  if (!o.quiet && !t.smoothed.empty())
    std::cout << "smoothed mean return: first " << t.smoothed[std::min<std::size_t>(49, t.smoothed.size() - 1)]
              << ", last " << t.smoothed.back() << "\n";
  return 0;
}

int cmd_fig7(const ExperimentConfig& cfg, const Options& o) {
  require_oracle(cfg, "reproduce-fig7");
  const fs::path out = cfg.output_dir;
  Manifest m(cfg, "reproduce-fig7");
  const auto bc = bc_actor(cfg, out, m);
  std::vector<nn::Mlp<float>> flat, refined;
  for (const auto& r : train_all(cfg, o, m)) {
    flat.push_back(r.flat_actor);
    refined.push_back(r.refined_actor);
  }
  const auto rows = fig7_table(cfg, bc, flat, refined, cfg.schedule.workers);
  write_fig7(rows, out / "fig7_speed_vs_incline.txt");
  m.add_output(out / "fig7_speed_vs_incline.txt");
  m.write(out);
  if (!o.quiet) {
    std::cout << "incline  reference  bc  rl_flat  rl_refined  (mm/s)\n";
    for (const auto& r : rows)
      std::cout << r.incline_deg << "  " << r.reference * 1e3 << "  " << r.bc * 1e3 << "  " << r.rl_flat * 1e3 << "  "
                << r.rl_refined * 1e3 << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"softquad: soft quadruped simulation and staged learning"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("-o,--output", o.output, "output directory (overrides the config)");
  app.add_option("--seeds", o.seeds, "comma-separated seed list");
  app.add_option("--workers", o.workers, "parallel rollout workers")->check(CLI::PositiveNumber);
  app.add_flag("--disable-suction", o.disable_suction, "turn suction anchoring off");
  app.add_flag("--tactile", o.tactile, "estimate GRF from emulated tactile sensors");
  app.add_flag("--noise-imu-grf", o.noise_imu_grf, "replace IMU and GRF channels with noise");
  app.add_flag("-q,--quiet", o.quiet, "no progress output");

  auto* calib = app.add_subcommand("calibrate-tactile", "generate press cycles and fit the force estimator");
  auto* gait = app.add_subcommand("gait", "reference gait tools");
  auto* preview = gait->add_subcommand("preview", "dump the keyframe trace over one period");
  preview->add_option("--samples", o.samples, "samples per period")->check(CLI::PositiveNumber);
  gait->require_subcommand(1);
  auto* demos = app.add_subcommand("collect-demos", "record reference gait demonstrations");
  demos->add_option("--episodes", o.episodes, "number of episodes");
  auto* bc = app.add_subcommand("train-bc", "behavior cloning from demonstrations");
  auto* sac = app.add_subcommand("train-sac", "SAC fine-tuning: flat stage then incline refinement");
  auto* eval = app.add_subcommand("evaluate", "deterministic evaluation of a policy");
  eval->add_option("--policy", o.policy, "actor checkpoint (default: BC actor)");
  eval->add_option("--incline", o.incline, "incline in degrees");
  eval->add_option("--episodes", o.episodes, "number of episodes");
  eval->add_flag("--episode-log", o.episode_log, "write the per-step log of the first episode");
  auto* abl = app.add_subcommand("ablate", "paired intact vs ablated evaluation");
  abl->add_option("--policy", o.policy, "actor checkpoint (default: BC actor)");
  abl->add_option("--channel", o.channel, "imu+grf or suction")
      ->check(CLI::IsMember({"imu+grf", "suction", "none"}));
  abl->add_option("--incline", o.incline, "incline in degrees");
  abl->add_option("--episodes", o.episodes, "number of paired episodes");
  auto* fig5 = app.add_subcommand("reproduce-fig5", "training return curves across seeds");
  auto* fig7 = app.add_subcommand("reproduce-fig7", "mean speed per incline for BC and RL policies");
  auto* show = app.add_subcommand("print-config", "print the resolved config as canonical JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const ExperimentConfig cfg = resolve_config(o);
    if (*show) {
      std::cout << dump_config(cfg);
      return 0;
    }
    prepare_output(cfg);
    if (*calib) return cmd_calibrate(cfg, o);
    if (*preview) return cmd_gait_preview(cfg, o);
    if (*demos) return cmd_collect_demos(cfg, o);
    if (*bc) return cmd_train_bc(cfg, o);
    if (*sac) return cmd_train_sac(cfg, o);
    if (*eval) return cmd_evaluate(cfg, o);
    if (*abl) return cmd_ablate(cfg, o);
    if (*fig5) return cmd_fig5(cfg, o);
    if (*fig7) return cmd_fig7(cfg, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
